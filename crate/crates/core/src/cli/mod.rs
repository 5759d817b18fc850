//! The `ontoprobe` command-line tool.
//!
//! Subcommands: `ingest`, `simulate`, `probe`, `analyze`, `invariance` and
//! `report`. All randomness derives from `--seed` through [`crate::seed`].
//! Exit codes: 0 success, 2 usage or configuration error, 3 degenerate
//! statistics, 4 requests still failing after retries, 1 I/O failure.

pub mod analyze;
pub mod files;
pub mod manifest;
pub mod report;
pub mod simulate;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::extract::ExtractionRule;
use crate::gateway::{build_backend, Gateway, ModelConfig, Provider, ResponseCache};
use crate::invariance::{
    aggregate_avpi, default_temperatures, run_pi1, run_pi2, run_pi3, sample_concepts, write_records,
    InvarianceRecord, Strategy,
};
use crate::metrics::{accuracy, read_scored, write_scored};
use crate::ontology::{Concept, OntologyKind};
use crate::popularity::bucketize;
use crate::probe::ProbeContext;
use crate::prompt::{Language, PromptStyle, TemplateKey, TemplateSet};
use crate::seed;
use crate::stats::spearman;

use analyze::{AnalysisOptions, Stat};
use files::{load_model, load_occurrences, load_ontology, read_input_string, write_atomic, write_json, OntologyInput};
use manifest::RunManifest;
use report::{InvarianceSummary, StrategySummary};

#[derive(Debug, Parser)]
#[command(name = "ontoprobe", version, about = "Probe language models for memorized ontology IDs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an ontology source into a canonical concept table.
    Ingest(IngestArgs),
    /// Generate a synthetic ontology, occurrence counts and model profile.
    Simulate(SimulateArgs),
    /// Ask the model for every concept's ID and score the answers.
    Probe(ProbeArgs),
    /// Relate accuracy to popularity buckets.
    Analyze(AnalyzeArgs),
    /// Measure prediction invariance under prompt perturbations.
    Invariance(InvarianceArgs),
    /// Write per-bucket and summary CSV tables.
    Report(ReportArgs),
}

fn parse_kind(s: &str) -> std::result::Result<OntologyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_style(s: &str) -> std::result::Result<PromptStyle, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct OntologyArgs {
    /// Canonical concept table, or a source file parsed per --kind.
    #[arg(long)]
    pub ontology: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<OntologyKind>,
    /// Newline list of every known QID (Wikidata sources only).
    #[arg(long)]
    pub universe: Option<PathBuf>,
    /// ICD-10 codes with more alphanumerics than this are left out.
    #[arg(long, default_value_t = 4)]
    pub max_code_chars: usize,
}

impl OntologyArgs {
    fn input(&self) -> OntologyInput<'_> {
        OntologyInput {
            path: &self.ontology,
            kind: self.kind,
            universe: self.universe.as_deref(),
            max_code_chars: self.max_code_chars,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub ontology: OntologyArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 5000)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Recall curve: log, linear or constant:<p>.
    #[arg(long, default_value = "log")]
    pub curve: String,
    /// Wrong-answer style: near-miss, popular-id or invented.
    #[arg(long, default_value = "near-miss")]
    pub hallucination: String,
    /// Fraction of recall lost at temperature 1.
    #[arg(long, default_value_t = 0.5)]
    pub temperature_sensitivity: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_occurrences: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model_config: PathBuf,
    /// CHAT or COMPLETION; defaults to COMPLETION for completion endpoints.
    #[arg(long, value_parser = parse_style)]
    pub style: Option<PromptStyle>,
    /// Extra `ontology,style,language,text` templates.
    #[arg(long)]
    pub translations: Option<PathBuf>,
    /// Response cache file; defaults to cache.jsonl in --out.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
    /// Manifest timestamp; defaults to the current time.
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub ontology: OntologyArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Probe a seeded random sample of this many concepts.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub ontology: OntologyArgs,
    /// Scored run; defaults to scored.jsonl in --out.
    #[arg(long)]
    pub scored: Option<PathBuf>,
    #[arg(long)]
    pub occurrences: PathBuf,
    /// Second occurrence source to correlate with the first.
    #[arg(long)]
    pub occurrences_b: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub buckets: usize,
    #[arg(long, default_value_t = 3)]
    pub lag: usize,
    #[arg(long, default_value_t = 10_000)]
    pub permutations: usize,
    #[arg(long, default_value_t = 500)]
    pub top_k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exclude scored concepts without occurrence rows instead of failing.
    #[arg(long)]
    pub allow_missing: bool,
    /// Also correlate accuracy with randomly reassigned occurrence counts.
    #[arg(long)]
    pub shuffle_control: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InvarianceArgs {
    #[command(flatten)]
    pub ontology: OntologyArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub occurrences: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub buckets: usize,
    #[arg(long, default_value_t = 20)]
    pub k_sample: usize,
    /// Comma-separated subset of pi1, pi2, pi3.
    #[arg(long, default_value = "pi1,pi2,pi3", value_delimiter = ',')]
    pub strategies: Vec<String>,
    /// PI-1 repeats.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// PI-2 temperatures; defaults to 0.0, 0.1, ..., 1.0.
    #[arg(long, value_delimiter = ',')]
    pub temperatures: Vec<f64>,
    /// PI-3 languages.
    #[arg(long, default_value = "en,it,de,fr,es", value_delimiter = ',')]
    pub languages: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Defaults to analysis.json in --out.
    #[arg(long)]
    pub analysis: Option<PathBuf>,
    /// Defaults to invariance.json in --out when present.
    #[arg(long)]
    pub invariance: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(Error::Usage(e.to_string().trim_end().to_string()));
        }
    };
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Probe(a) => cmd_probe(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Invariance(a) => cmd_invariance(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let loaded = load_ontology(&args.ontology.input())?;
    let ont = &loaded.ontology;
    write_atomic(&args.out.join("concepts.csv"), ont.to_canonical_string().as_bytes())?;
    eprintln!(
        "{}: {} concepts, {} IDs in universe",
        ont.kind(),
        ont.len(),
        ont.universe().len()
    );
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let spec = simulate::SimulationSpec {
        size: args.size,
        seed: args.seed,
        max_occurrences: args.max_occurrences,
        curve: args.curve.parse()?,
        style: simulate::parse_style(&args.hallucination)?,
        temperature_sensitivity: args.temperature_sensitivity,
    };
    let sim = simulate::simulate(&spec)?;
    simulate::write_simulation(&sim, args.seed, &args.out)?;
    eprintln!("wrote {} synthetic concepts to {}", sim.ontology.len(), args.out.display());
    Ok(())
}

/// A ready gateway plus the pieces a probe context borrows.
struct ModelSetup {
    gateway: Gateway,
    templates: TemplateSet,
    style: PromptStyle,
    rule: ExtractionRule,
    config: ModelConfig,
    backend_seed: u64,
}

fn setup_model(args: &ModelArgs, kind: OntologyKind, master_seed: u64, out: &Path) -> Result<ModelSetup> {
    let loaded = load_model(&args.model_config)?;
    let config = loaded.config;
    let style = args.style.unwrap_or(match config.provider {
        Provider::CompletionHttp => PromptStyle::Completion,
        _ => PromptStyle::Chat,
    });
    let rule = match config.extraction_patterns.get(&kind) {
        Some(pattern) => ExtractionRule::new(kind, pattern)?,
        None => ExtractionRule::builtin(kind),
    };
    let mut templates = TemplateSet::builtin()?;
    if let Some(path) = &args.translations {
        templates.load_translations(read_input_string(path)?.as_bytes())?;
    }
    let backend_seed = config.seed.unwrap_or_else(|| seed::derive(master_seed, "synthetic"));
    let backend = build_backend(&config, loaded.profile, backend_seed)?;
    let mut gateway = Gateway::new(config.clone(), backend)?;
    if !args.no_cache {
        let path = args.cache.clone().unwrap_or_else(|| out.join("cache.jsonl"));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        gateway = gateway.with_cache(ResponseCache::open(&path)?);
    }
    Ok(ModelSetup {
        gateway,
        templates,
        style,
        rule,
        config,
        backend_seed,
    })
}

fn cmd_probe(args: &ProbeArgs) -> Result<()> {
    let loaded = load_ontology(&args.ontology.input())?;
    let ontology = &loaded.ontology;
    let setup = setup_model(&args.model, ontology.kind(), args.seed, &args.out)?;

    let concepts: Vec<Concept> = match args.sample {
        Some(0) => return Err(Error::Usage("--sample must be at least 1".into())),
        Some(n) if n < ontology.len() => {
            let mut rng = seed::rng(args.seed, "probe-sample");
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, ontology.len(), n).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| ontology.concepts()[i].clone()).collect()
        }
        _ => ontology.concepts().to_vec(),
    };

    let ctx = ProbeContext {
        gateway: &setup.gateway,
        ontology,
        templates: &setup.templates,
        style: setup.style,
        rule: &setup.rule,
    };
    let key = ctx.key(Language::En);
    setup.templates.require(key)?;

    let mut seeds = BTreeMap::from([("master".to_string(), args.seed), ("backend".to_string(), setup.backend_seed)]);
    if args.sample.is_some() {
        seeds.insert("sample".into(), seed::derive(args.seed, "probe-sample"));
    }
    let settings = BTreeMap::from([
        ("style".to_string(), setup.style.as_str().to_string()),
        ("temperature".to_string(), setup.config.temperature.to_string()),
        ("sample".to_string(), args.sample.map(|n| n.to_string()).unwrap_or_else(|| "all".into())),
    ]);
    let mut manifest = RunManifest::new(
        "probe",
        args.model.timestamp.clone(),
        ontology,
        &args.ontology.ontology.display().to_string(),
        &loaded.digest,
        &setup.config,
        &[key],
        &setup.rule,
        seeds,
        settings,
    );

    let run = ctx.probe(&concepts)?;
    write_atomic(&args.out.join("scored.jsonl"), write_scored(&run.records)?.as_bytes())?;
    manifest.counts.requested = concepts.len();
    manifest.counts.failed = run.failed;
    manifest.counts.completed = concepts.len() - run.failed;
    manifest.outputs.insert("scored".into(), "scored.jsonl".into());
    if let Some(path) = setup.gateway.cache().and_then(|c| c.path()) {
        let shown = path.strip_prefix(&args.out).unwrap_or(path);
        manifest.outputs.insert("cache".into(), shown.display().to_string());
    }
    write_json(&args.out.join("manifest.json"), &manifest)?;

    let acc = accuracy(&run.records).unwrap_or(0.0);
    eprintln!(
        "probed {} concepts: accuracy {acc:.4}, {} from cache, {} failed",
        concepts.len(),
        run.from_cache,
        run.failed
    );
    if run.failed > 0 {
        return Err(Error::TransportExhausted {
            attempts: setup.config.max_attempts,
            message: format!("{} of {} requests failed and were scored as unanswered", run.failed, concepts.len()),
        });
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let loaded = load_ontology(&args.ontology.input())?;
    let scored_path = args.scored.clone().unwrap_or_else(|| args.out.join("scored.jsonl"));
    let records = read_scored(&read_input_string(&scored_path)?)?;
    let (tag, occurrences) = load_occurrences(&args.occurrences)?;
    let second = match &args.occurrences_b {
        Some(path) => Some(load_occurrences(path)?),
        None => None,
    };
    let opts = AnalysisOptions {
        n_buckets: args.buckets,
        lag: args.lag,
        permutations: args.permutations,
        top_k: args.top_k,
        seed: args.seed,
        allow_missing: args.allow_missing,
        shuffle_control: args.shuffle_control,
    };
    let analysis = analyze::analyze(
        &loaded.ontology,
        &records,
        (&tag, &occurrences),
        second.as_ref().map(|(t, o)| (t.as_str(), o.as_slice())),
        &opts,
    )?;
    write_json(&args.out.join("analysis.json"), &analysis)?;
    match analysis.spearman.value() {
        Some(s) => eprintln!("accuracy vs. popularity: rho {:.4}, p {:.4}", s.rho, s.p_value),
        None => eprintln!("accuracy vs. popularity: not computable"),
    }
    if !analysis.excluded_missing.is_empty() {
        eprintln!("{} scored concepts without occurrences were excluded", analysis.excluded_missing.len());
    }
    Ok(())
}

fn parse_strategies(raw: &[String]) -> Result<Vec<Strategy>> {
    let mut out: Vec<Strategy> = raw.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Usage("no invariance strategy selected".into()));
    }
    Ok(out)
}

fn cmd_invariance(args: &InvarianceArgs) -> Result<()> {
    let strategies = parse_strategies(&args.strategies)?;
    let languages: Vec<Language> = args.languages.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let temperatures = if args.temperatures.is_empty() {
        default_temperatures()
    } else {
        args.temperatures.clone()
    };

    let loaded = load_ontology(&args.ontology.input())?;
    let ontology = &loaded.ontology;
    let (_, occurrences) = load_occurrences(&args.occurrences)?;
    let assignment = bucketize(&occurrences, args.buckets)?;
    let setup = setup_model(&args.model, ontology.kind(), args.seed, &args.out)?;
    let ctx = ProbeContext {
        gateway: &setup.gateway,
        ontology,
        templates: &setup.templates,
        style: setup.style,
        rule: &setup.rule,
    };

    // every template is checked before the first request
    let mut keys: Vec<TemplateKey> = vec![ctx.key(Language::En)];
    if strategies.contains(&Strategy::Language) {
        keys.extend(languages.iter().map(|&l| ctx.key(l)));
    }
    keys.sort();
    keys.dedup();
    for &key in &keys {
        setup.templates.require(key)?;
    }

    let sample = sample_concepts(&assignment, ontology, args.k_sample, seed::derive(args.seed, "invariance-sample"))?;
    let concepts: Vec<Concept> = sample.values().flatten().cloned().collect();

    let mut all_records: Vec<InvarianceRecord> = Vec::new();
    let mut summaries = Vec::new();
    let mut total_failed = 0;
    for &strategy in &strategies {
        let run = match strategy {
            Strategy::Repeat => run_pi1(&ctx, &concepts, args.repeats)?,
            Strategy::Temperature => run_pi2(&ctx, &concepts, &temperatures)?,
            Strategy::Language => run_pi3(&ctx, &concepts, &languages)?,
        };
        let buckets = aggregate_avpi(&run.records, &assignment)?;
        let avpi: Vec<f64> = buckets.iter().map(|b| b.avpi).collect();
        let acc: Vec<f64> = buckets.iter().map(|b| b.accuracy).collect();
        let correlation = Stat::from_result(spearman(
            &avpi,
            &acc,
            args.permutations,
            seed::derive(args.seed, &format!("invariance-spearman/{strategy}")),
        ))?;
        total_failed += run.failed;
        summaries.push(StrategySummary {
            strategy,
            m: run.records.first().map(|r| r.m).unwrap_or(0),
            n_records: run.records.len(),
            failed: run.failed,
            buckets,
            spearman: correlation,
        });
        all_records.extend(run.records);
    }

    let summary = InvarianceSummary {
        n_buckets: assignment.n_buckets(),
        k_sample: args.k_sample,
        n_sampled: concepts.len(),
        strategies: summaries,
    };
    write_atomic(&args.out.join("invariance.jsonl"), write_records(&all_records)?.as_bytes())?;
    write_json(&args.out.join("invariance.json"), &summary)?;

    let seeds = BTreeMap::from([
        ("master".to_string(), args.seed),
        ("backend".to_string(), setup.backend_seed),
        ("sample".to_string(), seed::derive(args.seed, "invariance-sample")),
    ]);
    let settings = BTreeMap::from([
        ("style".to_string(), setup.style.as_str().to_string()),
        ("buckets".to_string(), args.buckets.to_string()),
        ("k_sample".to_string(), args.k_sample.to_string()),
        (
            "strategies".to_string(),
            strategies.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
        ),
        ("repeats".to_string(), args.repeats.to_string()),
        (
            "temperatures".to_string(),
            temperatures.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
        ),
        (
            "languages".to_string(),
            languages.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(","),
        ),
    ]);
    let mut manifest = RunManifest::new(
        "invariance",
        args.model.timestamp.clone(),
        ontology,
        &args.ontology.ontology.display().to_string(),
        &loaded.digest,
        &setup.config,
        &keys,
        &setup.rule,
        seeds,
        settings,
    );
    let requested: usize = all_records.iter().map(|r| r.m).sum();
    manifest.counts.requested = requested;
    manifest.counts.failed = total_failed;
    manifest.counts.completed = requested - total_failed;
    manifest.outputs.insert("records".into(), "invariance.jsonl".into());
    manifest.outputs.insert("summary".into(), "invariance.json".into());
    write_json(&args.out.join("invariance-manifest.json"), &manifest)?;

    for s in &summary.strategies {
        match s.spearman.value() {
            Some(c) => eprintln!("{}: AvPI vs. accuracy rho {:.4}, p {:.4}", s.strategy, c.rho, c.p_value),
            None => eprintln!("{}: AvPI vs. accuracy not computable", s.strategy),
        }
    }
    if total_failed > 0 {
        return Err(Error::TransportExhausted {
            attempts: setup.config.max_attempts,
            message: format!("{total_failed} of {requested} requests failed and were recorded as no answer"),
        });
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let analysis_path = args.analysis.clone().unwrap_or_else(|| args.out.join("analysis.json"));
    let analysis: analyze::Analysis = serde_json::from_str(&read_input_string(&analysis_path)?)?;
    let invariance: Option<InvarianceSummary> = match &args.invariance {
        Some(path) => Some(serde_json::from_str(&read_input_string(path)?)?),
        None => {
            let default = args.out.join("invariance.json");
            if default.exists() {
                Some(serde_json::from_str(&read_input_string(&default)?)?)
            } else {
                None
            }
        }
    };
    write_atomic(
        &args.out.join("buckets.csv"),
        report::buckets_csv(&analysis, invariance.as_ref())?.as_bytes(),
    )?;
    write_atomic(
        &args.out.join("summary.csv"),
        report::summary_csv(&analysis, invariance.as_ref())?.as_bytes(),
    )?;
    Ok(())
}

/// Entry point for the binary: runs and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
