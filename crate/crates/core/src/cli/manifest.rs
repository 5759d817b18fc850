//! Run manifests: what went into a model run and what came out.

use std::collections::BTreeMap;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use crate::extract::ExtractionRule;
use crate::gateway::ModelConfig;
use crate::ontology::{Ontology, OntologyKind};
use crate::prompt::TemplateKey;

use super::files::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyDescriptor {
    pub kind: OntologyKind,
    pub path: String,
    pub digest: String,
    pub concepts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub provider: String,
    pub model_name: String,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDescriptor {
    pub kind: OntologyKind,
    pub pattern: String,
    pub digest: String,
    pub builtin: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub requested: usize,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub timestamp: String,
    pub ontology: OntologyDescriptor,
    pub model: ModelDescriptor,
    pub templates: Vec<String>,
    pub extraction: Vec<RuleDescriptor>,
    pub seeds: BTreeMap<String, u64>,
    pub settings: BTreeMap<String, String>,
    pub counts: Counts,
    /// Output name to file name within the output directory.
    pub outputs: BTreeMap<String, String>,
}

pub fn now_rfc3339() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

impl RunManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        command: &str,
        timestamp: Option<String>,
        ontology: &Ontology,
        ontology_path: &str,
        ontology_digest: &str,
        config: &ModelConfig,
        templates: &[TemplateKey],
        rule: &ExtractionRule,
        seeds: BTreeMap<String, u64>,
        settings: BTreeMap<String, String>,
    ) -> Self {
        let mut manifest = RunManifest {
            run_id: String::new(),
            command: command.to_string(),
            timestamp: timestamp.unwrap_or_else(now_rfc3339),
            ontology: OntologyDescriptor {
                kind: ontology.kind(),
                path: ontology_path.to_string(),
                digest: ontology_digest.to_string(),
                concepts: ontology.len(),
            },
            model: ModelDescriptor {
                provider: config.provider.as_str().to_string(),
                model_name: config.model_name.clone(),
                config_digest: config.digest(),
            },
            templates: templates.iter().map(|k| k.to_string()).collect(),
            extraction: vec![RuleDescriptor {
                kind: rule.kind(),
                pattern: rule.pattern().to_string(),
                digest: rule.digest(),
                builtin: rule.is_builtin(),
            }],
            seeds,
            settings,
            counts: Counts::default(),
            outputs: BTreeMap::new(),
        };
        manifest.run_id = manifest.identity();
        manifest
    }

    /// Digest over every input, independent of time and results.
    fn identity(&self) -> String {
        let inputs = serde_json::json!({
            "command": self.command,
            "ontology": self.ontology.digest,
            "model": self.model.config_digest,
            "templates": self.templates,
            "extraction": self.extraction.iter().map(|r| &r.digest).collect::<Vec<_>>(),
            "seeds": self.seeds,
            "settings": self.settings,
        });
        sha256_hex(inputs.to_string().as_bytes())[..16].to_string()
    }
}
