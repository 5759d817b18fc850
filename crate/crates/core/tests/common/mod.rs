//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ontoprobe::extract::ExtractionRule;
use ontoprobe::gateway::{build_backend, Gateway, ModelConfig, SyntheticProfile};
use ontoprobe::ontology::{Ontology, OntologyKind};
use ontoprobe::probe::ProbeContext;
use ontoprobe::prompt::{PromptStyle, TemplateSet};

pub const TIMESTAMP: &str = "2026-01-01T00:00:00Z";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Runs the command line with the program name prepended.
pub fn cli(args: &[&str]) -> ontoprobe::Result<()> {
    ontoprobe::cli::run(std::iter::once("ontoprobe").chain(args.iter().copied()))
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn simulate(out: &Path, size: usize, seed: u64, curve: &str) {
    let size = size.to_string();
    let seed = seed.to_string();
    cli(&["simulate", "--size", &size, "--seed", &seed, "--curve", curve, "--out", s(out)]).unwrap();
}

/// Probes a simulated directory in place with its own model and ontology.
pub fn probe(dir: &Path, seed: u64, extra: &[&str]) -> ontoprobe::Result<()> {
    let seed = seed.to_string();
    let concepts = dir.join("concepts.csv");
    let model = dir.join("model.json");
    let mut args = vec![
        "probe",
        "--ontology",
        s(&concepts),
        "--model-config",
        s(&model),
        "--seed",
        &seed,
        "--timestamp",
        TIMESTAMP,
        "--out",
        s(dir),
    ];
    args.extend_from_slice(extra);
    cli(&args)
}

pub fn analyze(dir: &Path, seed: u64, extra: &[&str]) -> ontoprobe::Result<()> {
    let seed = seed.to_string();
    let concepts = dir.join("concepts.csv");
    let occurrences = dir.join("occurrences.csv");
    let mut args = vec![
        "analyze",
        "--ontology",
        s(&concepts),
        "--occurrences",
        s(&occurrences),
        "--seed",
        &seed,
        "--out",
        s(dir),
    ];
    args.extend_from_slice(extra);
    cli(&args)
}

pub fn invariance(dir: &Path, seed: u64, extra: &[&str]) -> ontoprobe::Result<()> {
    let seed = seed.to_string();
    let concepts = dir.join("concepts.csv");
    let occurrences = dir.join("occurrences.csv");
    let model = dir.join("model.json");
    let mut args = vec![
        "invariance",
        "--ontology",
        s(&concepts),
        "--model-config",
        s(&model),
        "--occurrences",
        s(&occurrences),
        "--seed",
        &seed,
        "--timestamp",
        TIMESTAMP,
        "--out",
        s(dir),
    ];
    args.extend_from_slice(extra);
    cli(&args)
}

/// Every regular file under `dir` with its bytes, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// A synthetic model over `ontology` with no response cache.
pub struct SyntheticSetup {
    pub gateway: Gateway,
    pub templates: TemplateSet,
    pub rule: ExtractionRule,
}

impl SyntheticSetup {
    pub fn new(profile: SyntheticProfile, seed: u64) -> Self {
        let config = ModelConfig::synthetic("synthetic-test", seed);
        let backend = build_backend(&config, Some(profile), seed).unwrap();
        SyntheticSetup {
            gateway: Gateway::new(config, Arc::clone(&backend)).unwrap(),
            templates: TemplateSet::builtin().unwrap(),
            rule: ExtractionRule::builtin(OntologyKind::Go),
        }
    }

    pub fn context<'a>(&'a self, ontology: &'a Ontology) -> ProbeContext<'a> {
        ProbeContext {
            gateway: &self.gateway,
            ontology,
            templates: &self.templates,
            style: PromptStyle::Chat,
            rule: &self.rule,
        }
    }
}
