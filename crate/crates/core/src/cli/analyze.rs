//! Popularity analysis of a scored run.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, error_similarity, hallucination_stats, repeated_id_counts, ErrorSimilarity, HallucinationStats,
    ProbeRecord,
};
use crate::ontology::{ConceptId, Ontology};
use crate::popularity::{bias_ratio, bucketize, per_bucket_accuracy, BiasRatioReport, BucketAssignment, OccurrenceRecord};
use crate::seed;
use crate::stats::{granger_f, spearman, CorrelationResult, GrangerResult};

/// A statistic, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Stat<T> {
    Value(T),
    Absent { absent: String },
}

impl<T> Stat<T> {
    /// Degenerate or undefined inputs become an absent value with the reason;
    /// any other error is passed on.
    pub fn from_result(result: Result<T>) -> Result<Self> {
        match result {
            Ok(v) => Ok(Stat::Value(v)),
            Err(e @ (Error::Degenerate(_) | Error::UndefinedInput(_) | Error::Usage(_))) => {
                Ok(Stat::Absent { absent: e.to_string() })
            }
            Err(e) => Err(e),
        }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Stat::Value(v) => Some(v),
            Stat::Absent { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: usize,
    pub size: usize,
    pub n_scored: usize,
    pub mean_occurrence: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_levenshtein: Option<f64>,
    pub mean_jaccard: Option<f64>,
    pub n_levenshtein: usize,
    pub n_jaccard: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceCorrelation {
    pub source_a: String,
    pub source_b: String,
    pub n_shared: usize,
    pub spearman: Stat<CorrelationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub source_tag: String,
    pub n_buckets: usize,
    pub boundaries: Vec<u64>,
    pub n_scored: usize,
    /// Scored concepts left out for lacking an occurrence row.
    pub excluded_missing: Vec<ConceptId>,
    pub accuracy: f64,
    pub hallucination: HallucinationStats,
    pub error_similarity: ErrorSimilarity,
    pub buckets: Vec<BucketRow>,
    pub spearman: Stat<CorrelationResult>,
    pub granger: Stat<GrangerResult>,
    pub bias_ratio: Stat<BiasRatioReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle_control: Option<Stat<CorrelationResult>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occurrence_correlation: Option<OccurrenceCorrelation>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub n_buckets: usize,
    pub lag: usize,
    pub permutations: usize,
    pub top_k: usize,
    pub seed: u64,
    pub allow_missing: bool,
    pub shuffle_control: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            n_buckets: 50,
            lag: 3,
            permutations: 10_000,
            top_k: 500,
            seed: 0,
            allow_missing: false,
            shuffle_control: false,
        }
    }
}

/// Paired (mean occurrence, accuracy) series over buckets that have scored
/// members, in bucket order.
fn accuracy_series(assignment: &BucketAssignment, records: &[ProbeRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let means = assignment.mean_counts();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for row in per_bucket_accuracy(assignment, records)? {
        if let (Some(acc), Some(mean)) = (row.accuracy, means[row.bucket - 1]) {
            x.push(mean);
            y.push(acc);
        }
    }
    Ok((x, y))
}

pub fn analyze(
    ontology: &Ontology,
    records: &[ProbeRecord],
    occurrences: (&str, &[OccurrenceRecord]),
    second: Option<(&str, &[OccurrenceRecord])>,
    opts: &AnalysisOptions,
) -> Result<Analysis> {
    let (source_tag, occurrences) = occurrences;
    let assignment = bucketize(occurrences, opts.n_buckets)?;

    let (kept, missing): (Vec<&ProbeRecord>, Vec<&ProbeRecord>) =
        records.iter().partition(|r| assignment.bucket_of(&r.concept.id).is_some());
    let mut excluded: Vec<ConceptId> = missing.iter().map(|r| r.concept.id.clone()).collect();
    excluded.sort();
    excluded.dedup();
    if !excluded.is_empty() && !opts.allow_missing {
        let shown: Vec<&str> = excluded.iter().take(10).map(|id| id.as_str()).collect();
        return Err(Error::Usage(format!(
            "{} scored concepts have no occurrence row (e.g. {}); pass --allow-missing to exclude them",
            excluded.len(),
            shown.join(", ")
        )));
    }
    let records: Vec<ProbeRecord> = kept.into_iter().cloned().collect();

    let mut by_bucket: BTreeMap<usize, Vec<&ProbeRecord>> = BTreeMap::new();
    for r in &records {
        by_bucket
            .entry(assignment.bucket_of(&r.concept.id).expect("kept records have a bucket"))
            .or_default()
            .push(r);
    }
    let means = assignment.mean_counts();
    let accuracies = per_bucket_accuracy(&assignment, &records)?;
    let buckets = (1..=assignment.n_buckets())
        .map(|b| {
            let members = by_bucket.get(&b).map(Vec::as_slice).unwrap_or_default();
            let sim = error_similarity(ontology, members.iter().copied());
            BucketRow {
                bucket: b,
                size: assignment.occupancy(b),
                n_scored: members.len(),
                mean_occurrence: means[b - 1],
                accuracy: accuracies[b - 1].accuracy,
                mean_levenshtein: sim.mean_levenshtein,
                mean_jaccard: sim.mean_jaccard,
                n_levenshtein: sim.n_levenshtein,
                n_jaccard: sim.n_jaccard,
            }
        })
        .collect();

    let (x, y) = accuracy_series(&assignment, &records)?;
    let spearman_result = Stat::from_result(spearman(
        &x,
        &y,
        opts.permutations,
        seed::derive(opts.seed, "analyze/spearman"),
    ))?;
    let granger = Stat::from_result(granger_f(&x, &y, opts.lag))?;
    let bias = Stat::from_result(bias_ratio(&assignment, &repeated_id_counts(&records), opts.top_k))?;

    let shuffle_control = if opts.shuffle_control {
        let mut counts: Vec<u64> = occurrences.iter().map(|o| o.count).collect();
        counts.shuffle(&mut seed::rng(opts.seed, "analyze/shuffle"));
        let shuffled: Vec<OccurrenceRecord> = occurrences
            .iter()
            .zip(counts)
            .map(|(o, count)| OccurrenceRecord { count, ..o.clone() })
            .collect();
        let control = bucketize(&shuffled, opts.n_buckets)?;
        let (x, y) = accuracy_series(&control, &records)?;
        Some(Stat::from_result(spearman(
            &x,
            &y,
            opts.permutations,
            seed::derive(opts.seed, "analyze/shuffle-spearman"),
        ))?)
    } else {
        None
    };

    let occurrence_correlation = match second {
        Some((tag_b, occ_b)) => {
            let b: HashMap<&ConceptId, u64> = occ_b.iter().map(|o| (&o.concept_id, o.count)).collect();
            let (xa, xb): (Vec<f64>, Vec<f64>) = occurrences
                .iter()
                .filter_map(|o| b.get(&o.concept_id).map(|&cb| (o.count as f64, cb as f64)))
                .unzip();
            Some(OccurrenceCorrelation {
                source_a: source_tag.to_string(),
                source_b: tag_b.to_string(),
                n_shared: xa.len(),
                spearman: Stat::from_result(spearman(
                    &xa,
                    &xb,
                    opts.permutations,
                    seed::derive(opts.seed, "analyze/occurrence-spearman"),
                ))?,
            })
        }
        None => None,
    };

    Ok(Analysis {
        source_tag: source_tag.to_string(),
        n_buckets: assignment.n_buckets(),
        boundaries: assignment.boundaries().to_vec(),
        n_scored: records.len(),
        excluded_missing: excluded,
        accuracy: accuracy(&records)?,
        hallucination: hallucination_stats(ontology, &records),
        error_similarity: error_similarity(ontology, &records),
        buckets,
        spearman: spearman_result,
        granger,
        bias_ratio: bias,
        shuffle_control,
        occurrence_correlation,
    })
}
