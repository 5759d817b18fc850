//! Pulling a concept ID out of free-text model output.

use regex::Regex;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ontology::{ConceptId, OntologyKind};
use crate::prompt::{completion_cue, PromptStyle};

pub const GO_PATTERN: &str = r"(?i)GO[\s:]*([0-9]{1,7})";
pub const UBERON_PATTERN: &str = r"(?i)UBERON[\s:_]*([0-9]{1,7})";
pub const ICD10_PATTERN: &str = r"(?i)\b([A-Z][0-9]{2}(?:\.?[0-9A-Z]{1,4})?)\b";
pub const WIKIDATA_PATTERN: &str = r"(?i)\bQ0*([0-9]+)\b";

pub fn default_pattern(kind: OntologyKind) -> &'static str {
    match kind {
        OntologyKind::Go => GO_PATTERN,
        OntologyKind::Uberon => UBERON_PATTERN,
        OntologyKind::Icd10 => ICD10_PATTERN,
        OntologyKind::Wikidata => WIKIDATA_PATTERN,
    }
}

#[derive(Debug, Clone)]
pub struct ExtractionRule {
    kind: OntologyKind,
    pattern: Regex,
}

impl ExtractionRule {
    pub fn new(kind: OntologyKind, pattern: &str) -> Result<Self> {
        let pattern = Regex::new(pattern)
            .map_err(|e| Error::Config(format!("extraction pattern for {kind} does not compile: {e}")))?;
        Ok(ExtractionRule { kind, pattern })
    }

    pub fn builtin(kind: OntologyKind) -> Self {
        Self::new(kind, default_pattern(kind)).expect("built-in patterns compile")
    }

    pub fn kind(&self) -> OntologyKind {
        self.kind
    }

    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }

    pub fn is_builtin(&self) -> bool {
        self.pattern.as_str() == default_pattern(self.kind)
    }

    /// Hex SHA-256 over kind and pattern source, recorded in run manifests.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.kind.as_str());
        hasher.update([0u8]);
        hasher.update(self.pattern.as_str());
        hex::encode(hasher.finalize())
    }

    /// First match wins. A match that runs into further digits is overlong
    /// and yields `None` rather than a truncated ID.
    pub fn extract(&self, raw_text: &str) -> Option<ConceptId> {
        let m = self.pattern.find(raw_text)?;
        let overlong = raw_text[m.end()..]
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_digit());
        if overlong {
            return None;
        }
        normalize_id(self.kind, m.as_str())
    }
}

pub fn extract_id(rule: &ExtractionRule, raw_text: &str) -> Option<ConceptId> {
    rule.extract(raw_text)
}

/// Completion answers continue the prompt, so the cue it ended with is put
/// back in front of the text before matching.
pub fn extract_answer(rule: &ExtractionRule, style: PromptStyle, raw_text: &str) -> Option<ConceptId> {
    match style {
        PromptStyle::Chat => rule.extract(raw_text),
        PromptStyle::Completion => rule.extract(&format!("{}{raw_text}", completion_cue(rule.kind))),
    }
}

/// Canonicalizes a raw pattern match. Returns `None` when the numeric part
/// cannot be brought into canonical form.
pub fn normalize_id(kind: OntologyKind, raw_match: &str) -> Option<ConceptId> {
    let canonical = match kind {
        OntologyKind::Go => prefixed_seven_digits("GO", raw_match)?,
        OntologyKind::Uberon => prefixed_seven_digits("UBERON", raw_match)?,
        OntologyKind::Icd10 => {
            let compact: String = raw_match
                .chars()
                .filter(|c| *c != '.')
                .map(|c| c.to_ascii_uppercase())
                .collect();
            if compact.len() >= 4 {
                format!("{}.{}", &compact[..3], &compact[3..])
            } else {
                compact
            }
        }
        OntologyKind::Wikidata => {
            let digits = raw_match.trim().trim_start_matches(['q', 'Q']);
            let digits = digits.trim_start_matches('0');
            if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            format!("Q{digits}")
        }
    };
    if kind.matches_canonical(&canonical) {
        ConceptId::new(canonical).ok()
    } else {
        None
    }
}

fn prefixed_seven_digits(prefix: &str, raw: &str) -> Option<String> {
    let digits: String = raw
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .collect();
    if digits.is_empty() || digits.len() > 7 || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Some(format!("{prefix}:{digits:0>7}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn go() -> ExtractionRule {
        ExtractionRule::builtin(OntologyKind::Go)
    }

    #[test]
    fn chat_style_sentence() {
        assert_eq!(go().extract("The ID is GO:0001822.").unwrap().as_str(), "GO:0001822");
    }

    #[test]
    fn spacing_and_case() {
        assert_eq!(go().extract("go: 0001822").unwrap().as_str(), "GO:0001822");
        assert_eq!(go().extract("GO:1822").unwrap().as_str(), "GO:0001822");
    }

    #[test]
    fn no_match() {
        assert!(go().extract("I don't know.").is_none());
        assert!(ExtractionRule::builtin(OntologyKind::Icd10).extract("I don't know.").is_none());
        assert!(ExtractionRule::builtin(OntologyKind::Wikidata).extract("").is_none());
    }

    #[test]
    fn completion_text_is_read_after_the_cue() {
        assert_eq!(extract_answer(&go(), PromptStyle::Completion, "0001822").unwrap().as_str(), "GO:0001822");
        let icd = ExtractionRule::builtin(OntologyKind::Icd10);
        assert_eq!(extract_answer(&icd, PromptStyle::Completion, " C34.1").unwrap().as_str(), "C34.1");
        assert!(extract_answer(&icd, PromptStyle::Completion, " unknown").is_none());
    }

    #[test]
    fn overlong_is_absent() {
        assert!(go().extract("GO:00018221").is_none());
    }

    #[test]
    fn normalizer_examples() {
        assert_eq!(normalize_id(OntologyKind::Go, "GO:1822").unwrap().as_str(), "GO:0001822");
        assert_eq!(normalize_id(OntologyKind::Icd10, "C341").unwrap().as_str(), "C34.1");
        assert_eq!(normalize_id(OntologyKind::Icd10, "c34.1").unwrap().as_str(), "C34.1");
        assert_eq!(normalize_id(OntologyKind::Icd10, "A00").unwrap().as_str(), "A00");
        assert_eq!(normalize_id(OntologyKind::Wikidata, "q042").unwrap().as_str(), "Q42");
        assert!(normalize_id(OntologyKind::Wikidata, "Q0").is_none());
        assert_eq!(
            normalize_id(OntologyKind::Uberon, "uberon_55").unwrap().as_str(),
            "UBERON:0000055"
        );
    }

    #[test]
    fn normalizer_is_idempotent() {
        for (kind, raw) in [
            (OntologyKind::Go, "go 12"),
            (OntologyKind::Uberon, "UBERON:0000055"),
            (OntologyKind::Icd10, "s72001a"),
            (OntologyKind::Wikidata, "Q00308"),
        ] {
            let once = normalize_id(kind, raw).unwrap();
            let twice = normalize_id(kind, once.as_str()).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn bad_override_is_config_error() {
        assert!(matches!(
            ExtractionRule::new(OntologyKind::Go, "(unclosed"),
            Err(Error::Config(_))
        ));
    }
}
