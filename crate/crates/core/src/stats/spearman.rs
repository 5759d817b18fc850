use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Permutations per RNG stream. Streams are indexed, so the p-value does not
/// depend on how many threads run them.
const PERMUTATION_CHUNK: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub n_permutations: usize,
    pub seed: u64,
}

/// Average ranks (1-based); tied values share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Centered ranks scaled to unit norm, so a correlation is a dot product.
fn standardized_ranks(values: &[f64], name: &str) -> Result<Vec<f64>> {
    let ranks = average_ranks(values);
    let mean = ranks.iter().sum::<f64>() / ranks.len() as f64;
    let centered: Vec<f64> = ranks.iter().map(|r| r - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate(format!("series `{name}` is constant")));
    }
    Ok(centered.into_iter().map(|v| v / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let rx = standardized_ranks(x, "x")?;
    let ry = standardized_ranks(y, "y")?;
    Ok(dot(&rx, &ry).clamp(-1.0, 1.0))
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Usage(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Usage("Spearman correlation needs at least 3 pairs".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Usage("series contain non-finite values".into()));
    }
    Ok(())
}

/// Spearman's rho with a two-sided permutation p-value,
/// `(1 + #{|rho_perm| >= |rho_obs|}) / (1 + n_permutations)`.
pub fn spearman(x: &[f64], y: &[f64], n_permutations: usize, seed: u64) -> Result<CorrelationResult> {
    check_inputs(x, y)?;
    let rx = standardized_ranks(x, "x")?;
    let ry = standardized_ranks(y, "y")?;
    let rho = dot(&rx, &ry).clamp(-1.0, 1.0);
    let threshold = rho.abs() - 1e-12;

    let n_chunks = n_permutations.div_ceil(PERMUTATION_CHUNK);
    let exceed: usize = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = seed::rng(seed, &format!("spearman-perm/{chunk}"));
            let mut shuffled = ry.clone();
            let todo = PERMUTATION_CHUNK.min(n_permutations - chunk * PERMUTATION_CHUNK);
            (0..todo)
                .filter(|_| {
                    shuffled.shuffle(&mut rng);
                    dot(&rx, &shuffled).abs() >= threshold
                })
                .count()
        })
        .sum();

    Ok(CorrelationResult {
        rho,
        p_value: (1 + exceed) as f64 / (1 + n_permutations) as f64,
        n: x.len(),
        n_permutations,
        seed,
    })
}
