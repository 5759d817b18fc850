//! Synthetic ontologies with long-tailed popularity and planted recall.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gateway::{HallucinationStyle, ModelConfig, SyntheticProfile};
use crate::ontology::{Concept, ConceptId, Ontology, OntologyKind};
use crate::popularity::{write_occurrences, OccurrenceRecord};
use crate::seed;

use super::files::{write_atomic, write_json};

/// Recall as a function of a concept's occurrence count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecallCurve {
    /// `min(1, ln(1 + occ) / ln(1 + max_occ))`
    Log,
    /// `occ / max_occ`
    Linear,
    Constant(f64),
}

impl RecallCurve {
    pub fn recall(self, occurrences: u64, max_occurrences: u64) -> f64 {
        match self {
            RecallCurve::Constant(p) => p,
            _ if max_occurrences == 0 => 0.0,
            RecallCurve::Log => ((occurrences as f64).ln_1p() / (max_occurrences as f64).ln_1p()).min(1.0),
            RecallCurve::Linear => (occurrences as f64 / max_occurrences as f64).min(1.0),
        }
    }
}

impl FromStr for RecallCurve {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "log" => Ok(RecallCurve::Log),
            "linear" => Ok(RecallCurve::Linear),
            _ => {
                let p = s
                    .strip_prefix("constant:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::Usage(format!("unknown recall curve `{s}` (log, linear or constant:<p>)")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Usage(format!("constant recall {p} is outside [0, 1]")));
                }
                Ok(RecallCurve::Constant(p))
            }
        }
    }
}

pub fn parse_style(s: &str) -> Result<HallucinationStyle> {
    match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "near-miss" => Ok(HallucinationStyle::NearMiss),
        "popular-id" => Ok(HallucinationStyle::PopularId),
        "invented" => Ok(HallucinationStyle::Invented),
        other => Err(Error::Usage(format!(
            "unknown hallucination style `{other}` (near-miss, popular-id or invented)"
        ))),
    }
}

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub size: usize,
    pub seed: u64,
    pub max_occurrences: u64,
    pub curve: RecallCurve,
    pub style: HallucinationStyle,
    pub temperature_sensitivity: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub ontology: Ontology,
    pub occurrences: Vec<OccurrenceRecord>,
    pub profile: SyntheticProfile,
}

const QUALIFIERS: [&str; 24] = [
    "positive", "negative", "early", "late", "lateral", "medial", "dorsal", "ventral", "cardiac", "renal",
    "neural", "epithelial", "hepatic", "retinal", "muscle", "bone", "skin", "lung", "blood", "germ", "stem",
    "immune", "vascular", "sensory",
];
const PROCESSES: [&str; 24] = [
    "cell", "tissue", "membrane", "vesicle", "receptor", "channel", "protein", "kinase", "nucleus", "axon",
    "synapse", "cilium", "matrix", "lipid", "granule", "duct", "valve", "bud", "plate", "fiber", "crest",
    "tube", "gland", "chamber",
];
const ACTIONS: [&str; 24] = [
    "development", "differentiation", "morphogenesis", "migration", "proliferation", "adhesion", "assembly",
    "transport", "signaling", "secretion", "maturation", "regulation", "activation", "formation",
    "elongation", "fusion", "organization", "maintenance", "homeostasis", "repair", "growth", "polarity",
    "death", "binding",
];

fn label<R: Rng>(rng: &mut R, taken: &mut BTreeSet<String>, i: usize) -> String {
    for _ in 0..8 {
        let candidate = format!(
            "{} {} {}",
            QUALIFIERS[rng.gen_range(0..QUALIFIERS.len())],
            PROCESSES[rng.gen_range(0..PROCESSES.len())],
            ACTIONS[rng.gen_range(0..ACTIONS.len())]
        );
        if taken.insert(candidate.clone()) {
            return candidate;
        }
    }
    let fallback = format!("synthetic process {i}");
    taken.insert(fallback.clone());
    fallback
}

pub fn simulate(spec: &SimulationSpec) -> Result<Simulation> {
    if spec.size == 0 || spec.size > 10_000_000 {
        return Err(Error::Usage(format!("size must be between 1 and 10000000, got {}", spec.size)));
    }
    if !(0.0..=1.0).contains(&spec.temperature_sensitivity) {
        return Err(Error::Usage(format!(
            "temperature sensitivity {} is outside [0, 1]",
            spec.temperature_sensitivity
        )));
    }

    let mut id_rng = seed::rng(spec.seed, "simulate/ids");
    let mut numbers: Vec<usize> = index::sample(&mut id_rng, 10_000_000, spec.size).into_vec();
    numbers.sort_unstable();

    let mut label_rng = seed::rng(spec.seed, "simulate/labels");
    let mut taken = BTreeSet::new();
    let concepts: Vec<Concept> = numbers
        .iter()
        .enumerate()
        .map(|(i, n)| Concept {
            id: ConceptId::new(format!("GO:{n:07}")).expect("formatted id"),
            label: label(&mut label_rng, &mut taken, i),
            source: OntologyKind::Go,
        })
        .collect();

    // log-uniform on [1, 1 + max], shifted to start at zero
    let mut occ_rng = seed::rng(spec.seed, "simulate/occurrences");
    let log_max = (spec.max_occurrences as f64).ln_1p();
    let occurrences: Vec<OccurrenceRecord> = concepts
        .iter()
        .map(|c| {
            let u: f64 = occ_rng.gen();
            let count = ((u * log_max).exp().floor() as u64).saturating_sub(1).min(spec.max_occurrences);
            OccurrenceRecord {
                concept_id: c.id.clone(),
                source_tag: "web".into(),
                count,
            }
        })
        .collect();

    let max_seen = occurrences.iter().map(|o| o.count).max().unwrap_or(0);
    let memorization_curve: BTreeMap<ConceptId, f64> = occurrences
        .iter()
        .map(|o| (o.concept_id.clone(), spec.curve.recall(o.count, max_seen)))
        .collect();
    let popularity = occurrences.iter().map(|o| (o.concept_id.clone(), o.count)).collect();
    let profile = SyntheticProfile {
        memorization_curve,
        hallucination_style: spec.style,
        popularity,
        temperature_sensitivity: spec.temperature_sensitivity,
        reserved_ids: BTreeSet::new(),
    };
    profile.validate()?;

    Ok(Simulation {
        ontology: Ontology::new(OntologyKind::Go, concepts, Vec::new())?,
        occurrences,
        profile,
    })
}

/// Writes `concepts.csv`, `occurrences.csv`, `profile.json` and a matching
/// synthetic `model.json` into `out`.
pub fn write_simulation(sim: &Simulation, seed: u64, out: &Path) -> Result<()> {
    write_atomic(&out.join("concepts.csv"), sim.ontology.to_canonical_string().as_bytes())?;
    write_atomic(&out.join("occurrences.csv"), write_occurrences(&sim.occurrences)?.as_bytes())?;
    write_json(&out.join("profile.json"), &sim.profile)?;
    let mut config = ModelConfig::synthetic("synthetic-memorizer", seed);
    config.profile = Some("profile.json".into());
    write_json(&out.join("model.json"), &config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(size: usize) -> SimulationSpec {
        SimulationSpec {
            size,
            seed: 1,
            max_occurrences: 1_000_000,
            curve: RecallCurve::Log,
            style: HallucinationStyle::NearMiss,
            temperature_sensitivity: 0.5,
        }
    }

    #[test]
    fn curves_parse() {
        assert_eq!("log".parse::<RecallCurve>().unwrap(), RecallCurve::Log);
        assert_eq!("constant:0.127".parse::<RecallCurve>().unwrap(), RecallCurve::Constant(0.127));
        assert!("constant:2".parse::<RecallCurve>().is_err());
        assert!("cubic".parse::<RecallCurve>().is_err());
    }

    #[test]
    fn recall_is_monotone_in_occurrences() {
        let sim = simulate(&spec(1000)).unwrap();
        let mut pairs: Vec<(u64, f64)> = sim
            .occurrences
            .iter()
            .map(|o| (o.count, sim.profile.memorization_curve[&o.concept_id]))
            .collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn same_seed_same_output() {
        let a = simulate(&spec(300)).unwrap();
        let b = simulate(&spec(300)).unwrap();
        assert_eq!(a.ontology.to_canonical_string(), b.ontology.to_canonical_string());
        assert_eq!(a.occurrences, b.occurrences);
        assert_eq!(a.profile, b.profile);
    }
}
