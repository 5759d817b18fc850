//! Prediction invariance under prompt perturbation.
//!
//! A concept is asked `m` perturbed versions of its prompt. With `u` distinct
//! extracted answers (no answer counting as one value), its invariance is
//! `1 - (u - 1) / (m - 1)`. AvPI is the mean over a bucket's sampled concepts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::{Concept, ConceptId, Ontology, OntologyKind};
use crate::popularity::BucketAssignment;
use crate::probe::ProbeContext;
use crate::prompt::Language;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "PI1")]
    Repeat,
    #[serde(rename = "PI2")]
    Temperature,
    #[serde(rename = "PI3")]
    Language,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Repeat, Strategy::Temperature, Strategy::Language];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Repeat => "PI1",
            Strategy::Temperature => "PI2",
            Strategy::Language => "PI3",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "").as_str() {
            "PI1" => Ok(Strategy::Repeat),
            "PI2" => Ok(Strategy::Temperature),
            "PI3" => Ok(Strategy::Language),
            other => Err(Error::Usage(format!("unknown invariance strategy `{other}`"))),
        }
    }
}

/// The eleven temperatures 0.0, 0.1, ..., 1.0.
pub fn default_temperatures() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRecord {
    pub concept: Concept,
    pub strategy: Strategy,
    pub m: usize,
    pub answers: Vec<Option<ConceptId>>,
    pub u: usize,
    pub pi: f64,
    pub n_correct: usize,
}

/// Distinct values among `answers`, with every `None` being the same value.
pub fn unique_answers(answers: &[Option<ConceptId>]) -> usize {
    answers.iter().collect::<BTreeSet<_>>().len()
}

pub fn prediction_invariance(m: usize, u: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Usage(format!("prediction invariance needs at least 2 prompts, got {m}")));
    }
    if u == 0 || u > m {
        return Err(Error::Usage(format!("{u} unique answers is impossible with {m} prompts")));
    }
    Ok(1.0 - (u - 1) as f64 / (m - 1) as f64)
}

impl InvarianceRecord {
    pub fn new(concept: Concept, strategy: Strategy, answers: Vec<Option<ConceptId>>, n_correct: usize) -> Result<Self> {
        let m = answers.len();
        let u = unique_answers(&answers);
        let pi = prediction_invariance(m, u)?;
        Ok(InvarianceRecord {
            concept,
            strategy,
            m,
            answers,
            u,
            pi,
            n_correct,
        })
    }
}

/// Up to `k` concepts per bucket, drawn uniformly without replacement.
/// Bucket members missing from the ontology are never drawn.
pub fn sample_concepts(
    assignment: &BucketAssignment,
    ontology: &Ontology,
    k: usize,
    master_seed: u64,
) -> Result<BTreeMap<usize, Vec<Concept>>> {
    if k == 0 {
        return Err(Error::Usage("sample size per bucket must be at least 1".into()));
    }
    let mut out = BTreeMap::new();
    for bucket in 1..=assignment.n_buckets() {
        let members: Vec<&Concept> = assignment
            .members(bucket)
            .into_iter()
            .filter_map(|id| ontology.get(id))
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = seed::rng(master_seed, &format!("invariance-sample/{bucket}"));
        let mut chosen: Vec<Concept> = members.choose_multiple(&mut rng, k).map(|c| (*c).clone()).collect();
        chosen.sort_by(|a, b| a.id.cmp(&b.id));
        out.insert(bucket, chosen);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceRun {
    pub records: Vec<InvarianceRecord>,
    /// Calls that failed after retries; they count as no answer.
    pub failed: usize,
}

/// One perturbed variant of a prompt.
#[derive(Debug, Clone, Copy)]
struct Variant {
    language: Language,
    temperature: f64,
    repetition_tag: u64,
}

fn run_variants(ctx: &ProbeContext<'_>, concepts: &[Concept], strategy: Strategy, variants: &[Variant]) -> Result<InvarianceRun> {
    let mut owners = Vec::with_capacity(concepts.len() * variants.len());
    let mut requests = Vec::with_capacity(concepts.len() * variants.len());
    for concept in concepts {
        for v in variants {
            owners.push(concept);
            requests.push(ctx.request(concept, v.language, v.temperature, v.repetition_tag)?);
        }
    }
    let answers = ctx.dispatch(&owners, &requests)?;
    let failed = answers.iter().filter(|a| a.failed).count();
    let records = concepts
        .iter()
        .zip(answers.chunks(variants.len().max(1)))
        .map(|(concept, chunk)| {
            let ids = chunk.iter().map(|a| a.record.predicted.clone()).collect();
            let n_correct = chunk.iter().filter(|a| a.record.correct).count();
            InvarianceRecord::new(concept.clone(), strategy, ids, n_correct)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InvarianceRun { records, failed })
}

/// The same English prompt `m` times at temperature zero. Each repeat has its
/// own repetition tag so the response cache cannot collapse them.
pub fn run_pi1(ctx: &ProbeContext<'_>, concepts: &[Concept], m: usize) -> Result<InvarianceRun> {
    if m < 2 {
        return Err(Error::Usage(format!("PI-1 needs at least 2 repeats, got {m}")));
    }
    let variants: Vec<Variant> = (0..m as u64)
        .map(|tag| Variant {
            language: Language::En,
            temperature: 0.0,
            repetition_tag: tag,
        })
        .collect();
    run_variants(ctx, concepts, Strategy::Repeat, &variants)
}

/// One English prompt per temperature.
pub fn run_pi2(ctx: &ProbeContext<'_>, concepts: &[Concept], temperatures: &[f64]) -> Result<InvarianceRun> {
    let distinct: BTreeSet<u64> = temperatures.iter().map(|t| t.to_bits()).collect();
    if distinct.len() < 2 {
        return Err(Error::Usage("PI-2 needs at least 2 distinct temperatures".into()));
    }
    if let Some(t) = temperatures.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Usage(format!("temperature {t} is outside [0, 1]")));
    }
    let variants: Vec<Variant> = temperatures
        .iter()
        .map(|&temperature| Variant {
            language: Language::En,
            temperature,
            repetition_tag: 0,
        })
        .collect();
    run_variants(ctx, concepts, Strategy::Temperature, &variants)
}

/// One prompt per language at temperature zero, label left untranslated.
/// Every template is checked before the first call.
pub fn run_pi3(ctx: &ProbeContext<'_>, concepts: &[Concept], languages: &[Language]) -> Result<InvarianceRun> {
    let distinct: BTreeSet<Language> = languages.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Usage("PI-3 needs at least 2 distinct languages".into()));
    }
    for &language in languages {
        ctx.templates.require(ctx.key(language))?;
    }
    let variants: Vec<Variant> = languages
        .iter()
        .map(|&language| Variant {
            language,
            temperature: 0.0,
            repetition_tag: 0,
        })
        .collect();
    run_variants(ctx, concepts, Strategy::Language, &variants)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketInvariance {
    pub bucket: usize,
    pub strategy: Strategy,
    pub avpi: f64,
    /// Fraction of all answers in the bucket that were correct.
    pub accuracy: f64,
    pub k_sampled: usize,
}

/// Per (strategy, bucket) means, sorted by strategy then bucket. Buckets
/// without sampled concepts are left out.
pub fn aggregate_avpi(records: &[InvarianceRecord], assignment: &BucketAssignment) -> Result<Vec<BucketInvariance>> {
    let mut groups: BTreeMap<(Strategy, usize), Vec<&InvarianceRecord>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    for r in records {
        match assignment.bucket_of(&r.concept.id) {
            Some(b) => groups.entry((r.strategy, b)).or_default().push(r),
            None => unassigned.push(r.concept.id.to_string()),
        }
    }
    if !unassigned.is_empty() {
        unassigned.sort();
        unassigned.dedup();
        return Err(Error::UndefinedInput(format!(
            "{} sampled concepts have no bucket: {}",
            unassigned.len(),
            unassigned.join(", ")
        )));
    }
    Ok(groups
        .into_iter()
        .map(|((strategy, bucket), rs)| {
            let answers: usize = rs.iter().map(|r| r.m).sum();
            let correct: usize = rs.iter().map(|r| r.n_correct).sum();
            BucketInvariance {
                bucket,
                strategy,
                avpi: rs.iter().map(|r| r.pi).sum::<f64>() / rs.len() as f64,
                accuracy: correct as f64 / answers as f64,
                k_sampled: rs.len(),
            }
        })
        .collect())
}

/// Serialized form, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceLine {
    pub strategy: Strategy,
    pub source: OntologyKind,
    pub gold_id: ConceptId,
    pub label: String,
    pub m: usize,
    pub answers: Vec<Option<ConceptId>>,
    pub u: usize,
    pub pi: f64,
    pub n_correct: usize,
}

pub fn write_records(records: &[InvarianceRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let line = InvarianceLine {
            strategy: r.strategy,
            source: r.concept.source,
            gold_id: r.concept.id.clone(),
            label: r.concept.label.clone(),
            m: r.m,
            answers: r.answers.clone(),
            u: r.u,
            pi: r.pi,
            n_correct: r.n_correct,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads records back, recomputing `u` and `pi` from the answers.
pub fn read_records(text: &str) -> Result<Vec<InvarianceRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line: InvarianceLine = serde_json::from_str(l).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            if line.m != line.answers.len() {
                return Err(Error::parse(i + 1, format!("m = {} but {} answers", line.m, line.answers.len())));
            }
            let concept = Concept {
                id: line.gold_id,
                label: line.label,
                source: line.source,
            };
            InvarianceRecord::new(concept, line.strategy, line.answers, line.n_correct)
                .map_err(|e| Error::parse(i + 1, e.to_string()))
        })
        .collect()
}
