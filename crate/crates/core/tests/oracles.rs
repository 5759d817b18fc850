//! Library results against independent reference computations.

use nalgebra::{DMatrix, DVector};
use ontoprobe::metrics::{jaccard_label_similarity, levenshtein};
use ontoprobe::stats::special::{beta_reg, f_sf};
use ontoprobe::stats::{average_ranks, granger_f, spearman, spearman_rho};
use ontoprobe::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

/// Full (n+1) x (m+1) edit-distance table.
fn levenshtein_matrix(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn random_string(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: [char; 8] = ['G', 'O', ':', '0', '1', '2', 'é', ' '];
    let len = rng.gen_range(0..=20);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

#[test]
fn levenshtein_matches_matrix_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let a = random_string(&mut rng);
        let b = random_string(&mut rng);
        assert_eq!(levenshtein(&a, &b), levenshtein_matrix(&a, &b), "{a:?} vs {b:?}");
    }
}

#[test]
fn levenshtein_is_a_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let (a, b, c) = (random_string(&mut rng), random_string(&mut rng), random_string(&mut rng));
        assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        assert_eq!(levenshtein(&a, &b) == 0, a == b);
        assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
    }
}

#[test]
fn jaccard_symmetric_and_bounded() {
    let words = ["heart", "valve", "cell", "of", "regulation", "Cell,", "(heart)"];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let phrase = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.gen_range(1..5);
        (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ")
    };
    for _ in 0..300 {
        let a = phrase(&mut rng);
        let b = phrase(&mut rng);
        let s = jaccard_label_similarity(&a, &b);
        assert_eq!(s, jaccard_label_similarity(&b, &a));
        assert!((0.0..=1.0).contains(&s));
        assert_eq!(jaccard_label_similarity(&a, &a), 1.0);
    }
}

/// Ranks by counting, then the textbook Pearson formula.
fn rank_then_pearson(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let less = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn spearman_matches_rank_then_pearson() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..100 {
        // integer-valued draws in half the trials to exercise ties
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if trial % 2 == 0 {
                rng.gen::<f64>()
            } else {
                rng.gen_range(0..8) as f64
            }
        };
        let x: Vec<f64> = (0..50).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..50).map(|_| draw(&mut rng)).collect();
        let expected = rank_then_pearson(&x, &y);
        assert!((spearman_rho(&x, &y).unwrap() - expected).abs() <= 1e-12);
    }
}

#[test]
fn spearman_invariant_under_monotone_maps_and_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let base = spearman_rho(&x, &y).unwrap();
    let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let cy: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
    assert!((spearman_rho(&ex, &cy).unwrap() - base).abs() <= 1e-12);
    assert!((spearman_rho(&y, &x).unwrap() - base).abs() <= 1e-12);
}

#[test]
fn spearman_extremes_and_degenerate() {
    let x: Vec<f64> = (1..=10).map(f64::from).collect();
    let rev: Vec<f64> = x.iter().rev().copied().collect();
    assert!((spearman_rho(&x, &x).unwrap() - 1.0).abs() < 1e-15);
    assert!((spearman_rho(&x, &rev).unwrap() + 1.0).abs() < 1e-15);
    assert!(matches!(spearman(&x, &[3.0; 10], 100, 1), Err(Error::Degenerate(_))));
    assert_eq!(average_ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
}

#[test]
fn permutation_p_value_is_reproducible_and_add_one() {
    let x: Vec<f64> = (1..=10).map(f64::from).collect();
    let a = spearman(&x, &x, 999, 5).unwrap();
    assert_eq!(a, spearman(&x, &x, 999, 5).unwrap());
    // no shuffle of 10 items beats a perfect correlation except the identity
    assert!(a.p_value >= 1.0 / 1000.0 && a.p_value < 0.01);
}

#[test]
fn f_tail_matches_statrs() {
    for &(d1, d2) in &[(1.0, 1.0), (3.0, 40.0), (3.0, 5.0), (10.0, 2.5), (50.0, 70.0)] {
        let dist = FisherSnedecor::new(d1, d2).unwrap();
        for &f in &[0.01, 0.3, 1.0, 2.5, 7.0, 30.0] {
            let expected = dist.sf(f);
            let got = f_sf(f, d1, d2);
            assert!(
                (got - expected).abs() <= 1e-10 * expected.max(1e-300) || (got - expected).abs() < 1e-14,
                "F({d1},{d2}) at {f}: {got} vs {expected}"
            );
        }
    }
}

#[test]
fn incomplete_beta_matches_statrs() {
    for &(a, b) in &[(0.5, 0.5), (1.5, 20.0), (20.0, 1.5), (7.0, 7.0), (100.0, 3.0)] {
        for &x in &[0.001, 0.1, 0.37, 0.5, 0.8, 0.999] {
            let expected = statrs::function::beta::beta_reg(a, b, x);
            let got = beta_reg(a, b, x);
            assert!((got - expected).abs() <= 1e-10 * expected.max(1e-12), "I_{x}({a},{b})");
        }
    }
}

/// Granger F and p from normal equations solved by nalgebra's Cholesky.
fn reference_granger(x: &[f64], y: &[f64], lag: usize) -> (f64, f64) {
    let n = y.len();
    let rows = n - lag;
    let target = DVector::from_iterator(rows, y[lag..].iter().copied());
    let rss = |with_x: bool| -> f64 {
        let cols = 1 + lag + if with_x { lag } else { 0 };
        let m = DMatrix::from_fn(rows, cols, |r, c| {
            let t = r + lag;
            match c {
                0 => 1.0,
                c if c <= lag => y[t - c],
                c => x[t - (c - lag)],
            }
        });
        let gram = m.transpose() * &m;
        let beta = gram.cholesky().unwrap().solve(&(m.transpose() * &target));
        (&target - m * beta).norm_squared()
    };
    let (rr, ru) = (rss(false), rss(true));
    let df_den = (rows - 2 * lag - 1) as f64;
    let f = ((rr - ru) / lag as f64) / (ru / df_den);
    let p = FisherSnedecor::new(lag as f64, df_den).unwrap().sf(f);
    (f, p)
}

fn planted(rng: &mut ChaCha8Rng, n: usize, coupling: f64) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|t| {
            let signal = if t >= 3 { coupling * x[t - 3] } else { 0.0 };
            signal + 0.1 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    (x, y)
}

#[test]
fn granger_matches_reference_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for coupling in [0.0, 0.8] {
        for _ in 0..20 {
            let (x, y) = planted(&mut rng, 50, coupling);
            let got = granger_f(&x, &y, 3).unwrap();
            let (f, p) = reference_granger(&x, &y, 3);
            assert!((got.f_statistic - f).abs() <= 1e-8 * f.max(1.0), "{} vs {f}", got.f_statistic);
            assert!((got.p_value - p).abs() <= 1e-9, "{} vs {p}", got.p_value);
            assert_eq!((got.df_numerator, got.df_denominator), (3, 50 - 3 - 7));
            assert!(got.rss_unrestricted <= got.rss_restricted);
        }
    }
}

#[test]
fn granger_affine_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (x, y) = planted(&mut rng, 50, 0.8);
    let base = granger_f(&x, &y, 3).unwrap().f_statistic;
    let x2: Vec<f64> = x.iter().map(|v| 3.0 * v - 7.0).collect();
    let y2: Vec<f64> = y.iter().map(|v| -0.5 * v + 100.0).collect();
    let moved = granger_f(&x2, &y2, 3).unwrap().f_statistic;
    assert!((moved - base).abs() <= 1e-9 * base.max(1.0), "{moved} vs {base}");
}

#[test]
fn granger_errors() {
    let x: Vec<f64> = (0..20).map(f64::from).collect();
    assert!(matches!(granger_f(&x, &[2.0; 20], 3), Err(Error::Degenerate(_))));
    assert!(matches!(granger_f(&x[..10], &x[..10], 3), Err(Error::Usage(_))));
    // x equal to y makes the x lags duplicate the y lags
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let y: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
    match granger_f(&y, &y, 2) {
        Err(Error::Degenerate(msg)) => assert!(msg.contains("x_lag1"), "{msg}"),
        other => panic!("expected a collinearity error, got {other:?}"),
    }
}
