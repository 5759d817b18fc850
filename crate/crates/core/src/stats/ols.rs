//! Least squares through a Householder QR factorization.

use crate::error::{Error, Result};

/// Columns whose residual norm after projecting out the preceding columns
/// falls below this fraction of their own norm are treated as collinear.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub rss: f64,
}

/// Solves `min ||X b - y||` for a full-column-rank `X` given as named columns
/// of equal length.
pub fn fit(columns: &[(String, Vec<f64>)], y: &[f64]) -> Result<LeastSquares> {
    let n = y.len();
    let p = columns.len();
    if p == 0 || n < p {
        return Err(Error::Degenerate(format!(
            "least squares with {n} rows and {p} columns is underdetermined"
        )));
    }
    // column-major working copy
    let mut a: Vec<Vec<f64>> = columns.iter().map(|(_, c)| c.clone()).collect();
    let norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut qty = y.to_vec();
    let mut diag = vec![0.0; p];

    let mut collinear = Vec::new();
    for k in 0..p {
        let alpha_sq: f64 = a[k][k..].iter().map(|v| v * v).sum();
        let alpha = alpha_sq.sqrt();
        if norms[k] == 0.0 || alpha <= RANK_TOLERANCE * norms[k] {
            collinear.push(k);
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -alpha } else { alpha };
        // v = x - alpha e1, stored in place
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let v_norm_sq: f64 = v.iter().map(|x| x * x).sum();
        diag[k] = alpha;
        for col in a.iter_mut().skip(k + 1) {
            let s = 2.0 * dot(&v, &col[k..]) / v_norm_sq;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        let s = 2.0 * dot(&v, &qty[k..]) / v_norm_sq;
        for (q, vi) in qty[k..].iter_mut().zip(&v) {
            *q -= s * vi;
        }
    }
    if !collinear.is_empty() {
        let names: Vec<&str> = collinear.iter().map(|&k| columns[k].0.as_str()).collect();
        return Err(Error::Degenerate(format!(
            "design matrix is rank deficient; collinear columns: {}",
            names.join(", ")
        )));
    }

    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = qty[k];
        for (j, col) in a.iter().enumerate().skip(k + 1) {
            s -= col[k] * beta[j];
        }
        beta[k] = s / diag[k];
    }
    let rss = qty[p..].iter().map(|v| v * v).sum();
    Ok(LeastSquares {
        coefficients: beta,
        rss,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..6).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let fit = fit(&[("const".into(), vec![1.0; 6]), ("x".into(), x)], &y).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 3.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn names_collinear_column() {
        let x: Vec<f64> = (0..6).map(f64::from).collect();
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let err = fit(
            &[("const".into(), vec![1.0; 6]), ("x".into(), x), ("x2".into(), twice)],
            &[1.0, 2.0, 1.0, 3.0, 2.0, 5.0],
        )
        .unwrap_err();
        assert!(err.to_string().contains("x2"), "{err}");
    }
}
