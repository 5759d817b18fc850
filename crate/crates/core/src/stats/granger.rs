use serde::{Deserialize, Serialize};

use super::ols;
use super::special::f_sf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub lag: usize,
    pub n_effective: usize,
    pub df_numerator: usize,
    pub df_denominator: usize,
    pub rss_restricted: f64,
    pub rss_unrestricted: f64,
}

/// Smallest series length for which the unrestricted model keeps at least
/// one residual degree of freedom.
pub fn min_length(lag: usize) -> usize {
    3 * lag + 2
}

/// F-test of whether lags of `x` improve an autoregression of `y`:
/// restricted `y_t ~ 1 + y_{t-1..t-lag}`, unrestricted adds `x_{t-1..t-lag}`.
/// The series are read in index order (bucket order for cross-sectional use).
pub fn granger_f(x: &[f64], y: &[f64], lag: usize) -> Result<GrangerResult> {
    if lag == 0 {
        return Err(Error::Usage("lag must be at least 1".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Usage(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let n = y.len();
    if n < min_length(lag) {
        return Err(Error::Usage(format!(
            "Granger test with lag {lag} needs at least {} observations, got {n}",
            min_length(lag)
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Usage("series contain non-finite values".into()));
    }

    let n_eff = n - lag;
    let target: Vec<f64> = y[lag..].to_vec();
    let lagged = |s: &[f64], l: usize| -> Vec<f64> { (lag..n).map(|t| s[t - l]).collect() };

    let mut columns: Vec<(String, Vec<f64>)> = vec![("const".into(), vec![1.0; n_eff])];
    for l in 1..=lag {
        columns.push((format!("y_lag{l}"), lagged(y, l)));
    }
    let restricted = ols::fit(&columns, &target)?;
    for l in 1..=lag {
        columns.push((format!("x_lag{l}"), lagged(x, l)));
    }
    let unrestricted = ols::fit(&columns, &target)?;

    let df_num = lag;
    let df_den = n_eff - 2 * lag - 1;
    let scale = target.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if unrestricted.rss <= 1e-24 * scale {
        return Err(Error::Degenerate(
            "unrestricted model fits exactly; F statistic is undefined".into(),
        ));
    }
    // nested models: RSS_u <= RSS_r up to rounding
    let diff = (restricted.rss - unrestricted.rss).max(0.0);
    let f = (diff / df_num as f64) / (unrestricted.rss / df_den as f64);
    Ok(GrangerResult {
        f_statistic: f,
        p_value: f_sf(f, df_num as f64, df_den as f64),
        lag,
        n_effective: n_eff,
        df_numerator: df_num,
        df_denominator: df_den,
        rss_restricted: restricted.rss,
        rss_unrestricted: unrestricted.rss,
    })
}
