//! Rendering, dispatching, extracting and scoring one batch of prompts.

use crate::error::{Error, Result};
use crate::extract::{extract_answer, ExtractionRule};
use crate::gateway::{Gateway, Request};
use crate::metrics::{score, ProbeRecord};
use crate::ontology::{Concept, Ontology};
use crate::prompt::{Language, PromptStyle, TemplateKey, TemplateSet};

/// Everything a probe needs besides the concepts themselves.
pub struct ProbeContext<'a> {
    pub gateway: &'a Gateway,
    pub ontology: &'a Ontology,
    pub templates: &'a TemplateSet,
    pub style: PromptStyle,
    pub rule: &'a ExtractionRule,
}

/// Outcome of one dispatched request.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub record: ProbeRecord,
    /// The request failed after all retries and was scored as no answer.
    pub failed: bool,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRun {
    pub records: Vec<ProbeRecord>,
    pub failed: usize,
    pub from_cache: usize,
}

impl<'a> ProbeContext<'a> {
    pub fn key(&self, language: Language) -> TemplateKey {
        TemplateKey {
            ontology: self.ontology.kind(),
            style: self.style,
            language,
        }
    }

    /// Builds a request for `concept`, failing if the template is missing.
    pub fn request(&self, concept: &Concept, language: Language, temperature: f64, repetition_tag: u64) -> Result<Request> {
        let template = self.templates.require(self.key(language))?;
        Ok(Request {
            prompt: template.render(concept)?,
            temperature,
            repetition_tag,
        })
    }

    /// Sends every request and scores the answers against their concepts.
    /// Exhausted retries become unanswered, wrong records; authentication
    /// and fatal backend errors abort the whole batch.
    pub fn dispatch(&self, concepts: &[&Concept], requests: &[Request]) -> Result<Vec<Answer>> {
        assert_eq!(concepts.len(), requests.len());
        let responses = self.gateway.complete_batch(requests);
        concepts
            .iter()
            .zip(responses)
            .map(|(concept, response)| match response {
                Ok(resp) => {
                    let predicted = extract_answer(self.rule, self.style, &resp.raw_text);
                    Ok(Answer {
                        record: score(self.ontology, concept, predicted, &resp.raw_text),
                        failed: false,
                        from_cache: resp.from_cache,
                    })
                }
                Err(Error::TransportExhausted { .. }) => Ok(Answer {
                    record: score(self.ontology, concept, None, ""),
                    failed: true,
                    from_cache: false,
                }),
                Err(e) => Err(e),
            })
            .collect()
    }

    /// One English prompt per concept at the gateway's configured temperature.
    pub fn probe(&self, concepts: &[Concept]) -> Result<ProbeRun> {
        let temperature = self.gateway.config().temperature;
        let requests = concepts
            .iter()
            .map(|c| self.request(c, Language::En, temperature, 0))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Concept> = concepts.iter().collect();
        let answers = self.dispatch(&refs, &requests)?;
        Ok(ProbeRun {
            failed: answers.iter().filter(|a| a.failed).count(),
            from_cache: answers.iter().filter(|a| a.from_cache).count(),
            records: answers.into_iter().map(|a| a.record).collect(),
        })
    }
}
