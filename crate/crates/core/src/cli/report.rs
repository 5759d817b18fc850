//! Plot-ready CSV tables from analysis and invariance results.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::invariance::{BucketInvariance, Strategy};
use crate::stats::CorrelationResult;

use super::analyze::{Analysis, Stat};

pub const BUCKETS_HEADER: [&str; 9] = [
    "bucket",
    "mean_occurrence",
    "accuracy",
    "avpi_pi1",
    "avpi_pi2",
    "avpi_pi3",
    "levenshtein",
    "jaccard",
    "r_bi",
];

pub const SUMMARY_HEADER: [&str; 2] = ["metric", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub m: usize,
    pub n_records: usize,
    pub failed: usize,
    pub buckets: Vec<BucketInvariance>,
    /// AvPI against answer accuracy across buckets.
    pub spearman: Stat<CorrelationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceSummary {
    pub n_buckets: usize,
    pub k_sample: usize,
    pub n_sampled: usize,
    pub strategies: Vec<StrategySummary>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn avpi(inv: Option<&InvarianceSummary>, strategy: Strategy, bucket: usize) -> Option<f64> {
    inv?.strategies
        .iter()
        .find(|s| s.strategy == strategy)?
        .buckets
        .iter()
        .find(|b| b.bucket == bucket)
        .map(|b| b.avpi)
}

/// One row per bucket, `1..=n_buckets`.
pub fn buckets_csv(analysis: &Analysis, invariance: Option<&InvarianceSummary>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BUCKETS_HEADER)?;
    let bias = analysis.bias_ratio.value();
    for row in &analysis.buckets {
        let r_bi = bias
            .and_then(|b| b.buckets.iter().find(|x| x.bucket == row.bucket))
            .and_then(|x| x.ratio);
        w.write_record([
            row.bucket.to_string(),
            cell(row.mean_occurrence),
            cell(row.accuracy),
            cell(avpi(invariance, Strategy::Repeat, row.bucket)),
            cell(avpi(invariance, Strategy::Temperature, row.bucket)),
            cell(avpi(invariance, Strategy::Language, row.bucket)),
            cell(row.mean_levenshtein),
            cell(row.mean_jaccard),
            cell(r_bi),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8"))
}

/// Headline numbers as `metric,value` rows; absent values are empty.
pub fn summary_csv(analysis: &Analysis, invariance: Option<&InvarianceSummary>) -> Result<String> {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| rows.push((k.to_string(), v));

    put("source", analysis.source_tag.clone());
    put("n_scored", analysis.n_scored.to_string());
    put("n_excluded_missing", analysis.excluded_missing.len().to_string());
    put("accuracy", analysis.accuracy.to_string());
    let h = &analysis.hallucination;
    put("unique_predicted", h.unique_predicted.to_string());
    put("pct_unique_invented", cell(h.pct_unique_invented));
    put("pct_errors_from_invented", cell(h.pct_errors_from_invented));
    let e = &analysis.error_similarity;
    put("mean_levenshtein", cell(e.mean_levenshtein));
    put("n_levenshtein", e.n_levenshtein.to_string());
    put("mean_jaccard", cell(e.mean_jaccard));
    put("n_jaccard", e.n_jaccard.to_string());

    let sp = analysis.spearman.value();
    put("spearman_rho", cell(sp.map(|s| s.rho)));
    put("spearman_p", cell(sp.map(|s| s.p_value)));
    let g = analysis.granger.value();
    put("granger_lag", g.map(|g| g.lag.to_string()).unwrap_or_default());
    put("granger_f", cell(g.map(|g| g.f_statistic)));
    put("granger_p", cell(g.map(|g| g.p_value)));
    let b = analysis.bias_ratio.value();
    put("bias_k", b.map(|b| b.k.to_string()).unwrap_or_default());
    put("bias_unassigned", b.map(|b| b.unassigned.to_string()).unwrap_or_default());
    if let Some(control) = &analysis.shuffle_control {
        put("shuffle_spearman_rho", cell(control.value().map(|s| s.rho)));
        put("shuffle_spearman_p", cell(control.value().map(|s| s.p_value)));
    }
    if let Some(oc) = &analysis.occurrence_correlation {
        put("occurrence_spearman_rho", cell(oc.spearman.value().map(|s| s.rho)));
        put("occurrence_spearman_p", cell(oc.spearman.value().map(|s| s.p_value)));
    }
    for s in invariance.map(|i| i.strategies.as_slice()).unwrap_or_default() {
        let tag = s.strategy.as_str().to_ascii_lowercase();
        let mean = (!s.buckets.is_empty())
            .then(|| s.buckets.iter().map(|b| b.avpi).sum::<f64>() / s.buckets.len() as f64);
        put(&format!("mean_avpi_{tag}"), cell(mean));
        put(&format!("avpi_accuracy_rho_{tag}"), cell(s.spearman.value().map(|c| c.rho)));
        put(&format!("avpi_accuracy_p_{tag}"), cell(s.spearman.value().map(|c| c.p_value)));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8"))
}
