//! Zero-shot prompt templates.
//!
//! The English chat and completion prompts are fixed text. Italian, German,
//! French and Spanish chat prompts come from a translation table shipped in
//! `data/translations.csv`; the label is always substituted untranslated.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::{Concept, ConceptId, OntologyKind};

pub const PLACEHOLDER: &str = "{l}";

const BUILTIN_TRANSLATIONS: &str = include_str!("../data/translations.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PromptStyle {
    Chat,
    Completion,
}

impl PromptStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptStyle::Chat => "CHAT",
            PromptStyle::Completion => "COMPLETION",
        }
    }
}

impl FromStr for PromptStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CHAT" => Ok(PromptStyle::Chat),
            "COMPLETION" => Ok(PromptStyle::Completion),
            other => Err(Error::Usage(format!("unknown prompt style `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Language {
    En,
    It,
    De,
    Fr,
    Es,
}

impl Language {
    pub const ALL: [Language; 5] = [Language::En, Language::It, Language::De, Language::Fr, Language::Es];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "EN",
            Language::It => "IT",
            Language::De => "DE",
            Language::Fr => "FR",
            Language::Es => "ES",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EN" => Ok(Language::En),
            "IT" => Ok(Language::It),
            "DE" => Ok(Language::De),
            "FR" => Ok(Language::Fr),
            "ES" => Ok(Language::Es),
            other => Err(Error::Usage(format!("unknown language `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemplateKey {
    pub ontology: OntologyKind,
    pub style: PromptStyle,
    pub language: Language,
}

impl fmt::Display for TemplateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.ontology, self.style.as_str(), self.language)
    }
}

/// Text a completion-style prompt ends with, which the model's continuation
/// is appended to.
pub fn completion_cue(kind: OntologyKind) -> &'static str {
    match kind {
        OntologyKind::Go => "GO:",
        OntologyKind::Uberon => "UBERON:",
        OntologyKind::Icd10 | OntologyKind::Wikidata => "is",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    key: TemplateKey,
    prefix: String,
    suffix: String,
}

impl PromptTemplate {
    pub fn new(key: TemplateKey, text: &str) -> Result<Self> {
        let Some((prefix, suffix)) = text.split_once(PLACEHOLDER) else {
            return Err(Error::Config(format!("template {key} has no `{PLACEHOLDER}` placeholder")));
        };
        if suffix.contains(PLACEHOLDER) {
            return Err(Error::Config(format!("template {key} has more than one placeholder")));
        }
        if key.style == PromptStyle::Completion && !text.ends_with(completion_cue(key.ontology)) {
            return Err(Error::Config(format!(
                "completion template {key} must end with `{}`",
                completion_cue(key.ontology)
            )));
        }
        Ok(PromptTemplate {
            key,
            prefix: prefix.to_string(),
            suffix: suffix.to_string(),
        })
    }

    pub fn key(&self) -> TemplateKey {
        self.key
    }

    pub fn text(&self) -> String {
        format!("{}{PLACEHOLDER}{}", self.prefix, self.suffix)
    }

    pub fn render(&self, concept: &Concept) -> Result<RenderedPrompt> {
        if concept.source != self.key.ontology {
            return Err(Error::Usage(format!(
                "template {} cannot render a {} concept",
                self.key, concept.source
            )));
        }
        Ok(RenderedPrompt {
            key: self.key,
            concept_id: concept.id.clone(),
            label: concept.label.clone(),
            text: format!("{}{}{}", self.prefix, concept.label, self.suffix),
        })
    }
}

pub fn render(template: &PromptTemplate, concept: &Concept) -> Result<RenderedPrompt> {
    template.render(concept)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub key: TemplateKey,
    pub concept_id: ConceptId,
    pub label: String,
    pub text: String,
}

fn english_text(kind: OntologyKind, style: PromptStyle) -> &'static str {
    match (kind, style) {
        (OntologyKind::Go, PromptStyle::Chat) => {
            "Provide the GO ID for the label \"{l}\". In the answer write only the corresponding GO ID."
        }
        (OntologyKind::Uberon, PromptStyle::Chat) => {
            "Provide the UBERON ID for the label \"{l}\". In the answer write only the corresponding UBERON ID."
        }
        (OntologyKind::Icd10, PromptStyle::Chat) => {
            "Provide the ICD-10 ID for the label \"{l}\". In the answer write only the corresponding ICD-10 ID."
        }
        (OntologyKind::Wikidata, PromptStyle::Chat) => {
            "Provide the Wikidata ID for the label \"{l}\". In the answer write only the corresponding Wikidata ID."
        }
        (OntologyKind::Go, PromptStyle::Completion) => {
            "In the Gene Ontology, the GO ID of the label \"{l}\" is GO:"
        }
        (OntologyKind::Uberon, PromptStyle::Completion) => {
            "In the Uberon Ontology, the Uberon ID of the label \"{l}\" is UBERON:"
        }
        (OntologyKind::Icd10, PromptStyle::Completion) => {
            "In the ICD-10, the ICD-10 ID of the label \"{l}\" is"
        }
        (OntologyKind::Wikidata, PromptStyle::Completion) => {
            "In the Wikidata, the Wikidata ID of the label \"{l}\" is"
        }
    }
}

/// All templates available to a run, keyed by (ontology, style, language).
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateKey, PromptTemplate>,
}

impl TemplateSet {
    /// The eight English prompts plus the shipped chat-style translations.
    pub fn builtin() -> Result<Self> {
        let mut set = Self::english();
        set.load_translations(BUILTIN_TRANSLATIONS.as_bytes())?;
        for ontology in OntologyKind::ALL {
            for language in Language::ALL {
                let key = TemplateKey {
                    ontology,
                    style: PromptStyle::Chat,
                    language,
                };
                if !set.templates.contains_key(&key) {
                    return Err(Error::Config(format!("missing translation for {key}")));
                }
            }
        }
        Ok(set)
    }

    pub fn english() -> Self {
        let mut templates = BTreeMap::new();
        for ontology in OntologyKind::ALL {
            for style in [PromptStyle::Chat, PromptStyle::Completion] {
                let key = TemplateKey {
                    ontology,
                    style,
                    language: Language::En,
                };
                let template =
                    PromptTemplate::new(key, english_text(ontology, style)).expect("english templates are valid");
                templates.insert(key, template);
            }
        }
        TemplateSet { templates }
    }

    /// Adds or replaces templates from an `ontology,style,language,text` table.
    pub fn load_translations<R: Read>(&mut self, reader: R) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers != ["ontology", "style", "language", "text"] {
            return Err(Error::Config(format!(
                "translation table header must be `ontology,style,language,text`, found `{}`",
                headers.join(",")
            )));
        }
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let at = |e: Error| Error::Config(format!("translation table row {}: {e}", row + 2));
            let key = TemplateKey {
                ontology: record.get(0).unwrap_or("").parse().map_err(at)?,
                style: record.get(1).unwrap_or("").parse().map_err(at)?,
                language: record.get(2).unwrap_or("").parse().map_err(at)?,
            };
            let template = PromptTemplate::new(key, record.get(3).unwrap_or("")).map_err(at)?;
            self.templates.insert(key, template);
        }
        Ok(())
    }

    pub fn get(&self, key: TemplateKey) -> Option<&PromptTemplate> {
        self.templates.get(&key)
    }

    pub fn require(&self, key: TemplateKey) -> Result<&PromptTemplate> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("no prompt template for {key}")))
    }

    pub fn remove(&mut self, key: TemplateKey) -> Option<PromptTemplate> {
        self.templates.remove(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

pub fn builtin_templates() -> Result<TemplateSet> {
    TemplateSet::builtin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kidney() -> Concept {
        Concept {
            id: ConceptId::new("GO:0001822").unwrap(),
            label: "kidney development".into(),
            source: OntologyKind::Go,
        }
    }

    fn key(ontology: OntologyKind, style: PromptStyle, language: Language) -> TemplateKey {
        TemplateKey {
            ontology,
            style,
            language,
        }
    }

    #[test]
    fn english_chat_go() {
        let set = TemplateSet::builtin().unwrap();
        let prompt = set
            .require(key(OntologyKind::Go, PromptStyle::Chat, Language::En))
            .unwrap()
            .render(&kidney())
            .unwrap();
        assert_eq!(
            prompt.text,
            "Provide the GO ID for the label \"kidney development\". In the answer write only the corresponding GO ID."
        );
    }

    #[test]
    fn english_completion_go() {
        let set = TemplateSet::builtin().unwrap();
        let prompt = set
            .require(key(OntologyKind::Go, PromptStyle::Completion, Language::En))
            .unwrap()
            .render(&kidney())
            .unwrap();
        assert_eq!(
            prompt.text,
            "In the Gene Ontology, the GO ID of the label \"kidney development\" is GO:"
        );
    }

    #[test]
    fn icd10_chat_lookup() {
        let set = TemplateSet::builtin().unwrap();
        let t = set.require(key(OntologyKind::Icd10, PromptStyle::Chat, Language::En)).unwrap();
        assert_eq!(
            t.text(),
            "Provide the ICD-10 ID for the label \"{l}\". In the answer write only the corresponding ICD-10 ID."
        );
    }

    #[test]
    fn template_counts() {
        let set = TemplateSet::builtin().unwrap();
        let chat = set.iter().filter(|t| t.key().style == PromptStyle::Chat).count();
        let completion_en = set
            .iter()
            .filter(|t| t.key().style == PromptStyle::Completion && t.key().language == Language::En)
            .count();
        assert_eq!(chat, 20);
        assert_eq!(completion_en, 4);
    }

    #[test]
    fn placeholder_rules() {
        let k = key(OntologyKind::Go, PromptStyle::Chat, Language::En);
        assert!(PromptTemplate::new(k, "no placeholder").is_err());
        assert!(PromptTemplate::new(k, "{l} and {l}").is_err());
        let c = key(OntologyKind::Go, PromptStyle::Completion, Language::En);
        assert!(PromptTemplate::new(c, "the id of {l} is").is_err());
    }

    #[test]
    fn kind_mismatch_is_usage_error() {
        let set = TemplateSet::builtin().unwrap();
        let t = set.require(key(OntologyKind::Uberon, PromptStyle::Chat, Language::En)).unwrap();
        assert!(matches!(t.render(&kidney()), Err(Error::Usage(_))));
    }

    #[test]
    fn label_with_quotes_embedded_verbatim() {
        let set = TemplateSet::builtin().unwrap();
        let mut c = kidney();
        c.label = "the \"odd\" {l} label".into();
        let p = set
            .require(key(OntologyKind::Go, PromptStyle::Chat, Language::It))
            .unwrap()
            .render(&c)
            .unwrap();
        assert!(p.text.contains("\"the \"odd\" {l} label\""));
    }

    #[test]
    fn missing_translation_is_config_error() {
        let mut set = TemplateSet::english();
        set.load_translations("ontology,style,language,text\nGO,CHAT,IT,senza segnaposto\n".as_bytes())
            .unwrap_err();
        set.load_translations("ontology,style,language\n".as_bytes()).unwrap_err();
    }
}
