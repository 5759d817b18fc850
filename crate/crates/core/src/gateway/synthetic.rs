//! A planted-recall stand-in for a language model.
//!
//! Each concept has a recall probability. At temperature `t` the gold ID is
//! returned with probability `recall * (1 - t * delta)`; otherwise the model
//! answers wrongly in the profile's hallucination style. At temperature zero
//! the draw depends only on the prompt text, so repeats agree exactly.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Request};
use crate::error::{Error, Result};
use crate::ontology::{ConceptId, OntologyKind};
use crate::prompt::{completion_cue, PromptStyle, RenderedPrompt};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HallucinationStyle {
    /// One character of the gold ID changed.
    NearMiss,
    /// A popular ID drawn in proportion to its occurrence count.
    PopularId,
    /// An ID absent from every ID the profile knows about.
    Invented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub memorization_curve: BTreeMap<ConceptId, f64>,
    pub hallucination_style: HallucinationStyle,
    #[serde(default)]
    pub popularity: BTreeMap<ConceptId, u64>,
    /// How strongly temperature erodes recall, in [0, 1].
    #[serde(default)]
    pub temperature_sensitivity: f64,
    /// Further existing IDs that invented answers must avoid.
    #[serde(default)]
    pub reserved_ids: BTreeSet<ConceptId>,
}

impl SyntheticProfile {
    pub fn validate(&self) -> Result<()> {
        if let Some((id, p)) = self
            .memorization_curve
            .iter()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::Config(format!("recall probability {p} for {id} is outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.temperature_sensitivity) {
            return Err(Error::Config(format!(
                "temperature sensitivity {} is outside [0, 1]",
                self.temperature_sensitivity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    profile: SyntheticProfile,
    known: HashSet<ConceptId>,
    popular: Vec<(ConceptId, u64)>,
    popular_total: u64,
}

impl SyntheticModel {
    pub fn new(profile: SyntheticProfile) -> Result<Self> {
        profile.validate()?;
        let known: HashSet<ConceptId> = profile
            .memorization_curve
            .keys()
            .chain(profile.popularity.keys())
            .chain(&profile.reserved_ids)
            .cloned()
            .collect();
        let mut popular_total = 0u64;
        let popular = profile
            .popularity
            .iter()
            .map(|(id, &count)| {
                popular_total += count + 1;
                (id.clone(), popular_total)
            })
            .collect();
        Ok(SyntheticModel {
            profile,
            known,
            popular,
            popular_total,
        })
    }

    pub fn profile(&self) -> &SyntheticProfile {
        &self.profile
    }

    /// Probability of answering with the gold ID at `temperature`.
    pub fn effective_recall(&self, id: &ConceptId, temperature: f64) -> Option<f64> {
        let recall = *self.profile.memorization_curve.get(id)?;
        Some(recall * (1.0 - temperature * self.profile.temperature_sensitivity))
    }

    /// Returns the model text for `prompt`.
    pub fn respond<R: Rng + ?Sized>(&self, prompt: &RenderedPrompt, temperature: f64, rng: &mut R) -> Result<String> {
        let p = self
            .effective_recall(&prompt.concept_id, temperature)
            .ok_or_else(|| Error::Usage(format!("concept {} is not in the synthetic profile", prompt.concept_id)))?;
        let kind = prompt.key.ontology;
        let answer = if rng.gen::<f64>() < p {
            prompt.concept_id.clone()
        } else {
            self.wrong_answer(kind, &prompt.concept_id, rng)
        };
        Ok(format_answer(prompt, &answer))
    }

    fn wrong_answer<R: Rng + ?Sized>(&self, kind: OntologyKind, gold: &ConceptId, rng: &mut R) -> ConceptId {
        match self.profile.hallucination_style {
            HallucinationStyle::NearMiss => near_miss(kind, gold, rng),
            HallucinationStyle::PopularId => {
                for _ in 0..16 {
                    if let Some(id) = self.draw_popular(rng) {
                        if id != gold {
                            return id.clone();
                        }
                    }
                }
                near_miss(kind, gold, rng)
            }
            HallucinationStyle::Invented => loop {
                let candidate = random_id(kind, rng);
                if !self.known.contains(&candidate) {
                    return candidate;
                }
            },
        }
    }

    fn draw_popular<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&ConceptId> {
        if self.popular_total == 0 {
            return None;
        }
        let target = rng.gen_range(0..self.popular_total);
        let pos = self.popular.partition_point(|(_, cum)| *cum <= target);
        self.popular.get(pos).map(|(id, _)| id)
    }
}

fn format_answer(prompt: &RenderedPrompt, id: &ConceptId) -> String {
    match prompt.key.style {
        PromptStyle::Chat => id.as_str().to_string(),
        PromptStyle::Completion => {
            let cue = completion_cue(prompt.key.ontology);
            match id.as_str().strip_prefix(cue) {
                Some(rest) => rest.to_string(),
                None => format!(" {id}"),
            }
        }
    }
}

fn near_miss<R: Rng + ?Sized>(kind: OntologyKind, gold: &ConceptId, rng: &mut R) -> ConceptId {
    let mut chars: Vec<char> = gold.as_str().chars().collect();
    let digit_positions: Vec<usize> = chars
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_ascii_digit())
        .map(|(i, _)| i)
        .collect();
    if digit_positions.is_empty() {
        return random_id(kind, rng);
    }
    let pos = digit_positions[rng.gen_range(0..digit_positions.len())];
    let lowest = if kind == OntologyKind::Wikidata && pos == 1 { 1 } else { 0 };
    loop {
        let d = char::from(b'0' + rng.gen_range(lowest..10u8));
        if d != chars[pos] {
            chars[pos] = d;
            break;
        }
    }
    ConceptId::new(chars.into_iter().collect::<String>()).expect("mutated id is non-empty")
}

fn random_id<R: Rng + ?Sized>(kind: OntologyKind, rng: &mut R) -> ConceptId {
    let raw = match kind {
        OntologyKind::Go => format!("GO:{:07}", rng.gen_range(0..10_000_000u32)),
        OntologyKind::Uberon => format!("UBERON:{:07}", rng.gen_range(0..10_000_000u32)),
        OntologyKind::Icd10 => format!(
            "{}{:02}.{}",
            char::from(b'A' + rng.gen_range(0..26u8)),
            rng.gen_range(0..100u8),
            rng.gen_range(0..10u8)
        ),
        OntologyKind::Wikidata => format!("Q{}", rng.gen_range(1..1_000_000_000u64)),
    };
    ConceptId::new(raw).expect("random id is non-empty")
}

/// Gateway backend over a [`SyntheticModel`], seeded per request so batch
/// order never changes an answer.
pub struct SyntheticBackend {
    model: SyntheticModel,
    seed: u64,
}

impl SyntheticBackend {
    pub fn new(model: SyntheticModel, seed: u64) -> Self {
        SyntheticBackend { model, seed }
    }

    pub fn model(&self) -> &SyntheticModel {
        &self.model
    }

    fn stream_label(request: &Request) -> String {
        let prompt = &request.prompt;
        if request.temperature == 0.0 {
            format!("synthetic/{}/{}", prompt.concept_id, prompt.text)
        } else {
            format!(
                "synthetic/{}/{}/t{}/r{}",
                prompt.concept_id,
                prompt.text,
                request.temperature.to_bits(),
                request.repetition_tag
            )
        }
    }
}

impl Backend for SyntheticBackend {
    fn call(&self, request: &Request) -> std::result::Result<String, BackendError> {
        let mut rng = seed::rng(self.seed, &Self::stream_label(request));
        self.model
            .respond(&request.prompt, request.temperature, &mut rng)
            .map_err(|e| BackendError::Fatal(e.to_string()))
    }
}
