//! Reading inputs and writing outputs for the command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gateway::{ModelConfig, SyntheticProfile};
use crate::ontology::{parse_icd10, parse_obo, parse_wikidata_sample, read_canonical, Ontology, OntologyKind};
use crate::popularity::{read_occurrences, single_source, OccurrenceRecord};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads an input file; a missing file is a usage error.
pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(Error::Usage(format!("input file {} does not exist", path.display())))
        }
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn read_input_string(path: &Path) -> Result<String> {
    String::from_utf8(read_input(path)?).map_err(|_| Error::Usage(format!("{} is not UTF-8", path.display())))
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub struct LoadedOntology {
    pub ontology: Ontology,
    pub digest: String,
}

pub struct OntologyInput<'a> {
    pub path: &'a Path,
    pub kind: Option<OntologyKind>,
    pub universe: Option<&'a Path>,
    pub max_code_chars: usize,
}

fn is_canonical(bytes: &[u8]) -> bool {
    let text = bytes.strip_prefix("\u{feff}".as_bytes()).unwrap_or(bytes);
    let first = text.split(|&b| b == b'\n').next().unwrap_or_default();
    String::from_utf8_lossy(first).trim() == "source,id,label"
}

/// Loads a canonical concept table, or a source file parsed per `kind`.
pub fn load_ontology(input: &OntologyInput<'_>) -> Result<LoadedOntology> {
    let bytes = read_input(input.path)?;
    let digest = sha256_hex(&bytes);
    let ontology = if is_canonical(&bytes) {
        let ontology = read_canonical(bytes.as_slice())?;
        if let Some(kind) = input.kind.filter(|k| *k != ontology.kind()) {
            return Err(Error::Usage(format!(
                "{} holds {} concepts, not {kind}",
                input.path.display(),
                ontology.kind()
            )));
        }
        ontology
    } else {
        let kind = input.kind.ok_or_else(|| {
            Error::Usage(format!(
                "{} is not a canonical concept table; pass --kind to parse it",
                input.path.display()
            ))
        })?;
        match kind {
            OntologyKind::Go => parse_obo(bytes.as_slice(), "GO")?,
            OntologyKind::Uberon => parse_obo(bytes.as_slice(), "UBERON")?,
            OntologyKind::Icd10 => parse_icd10(bytes.as_slice(), input.max_code_chars)?,
            OntologyKind::Wikidata => match input.universe {
                Some(path) => parse_wikidata_sample(bytes.as_slice(), Some(read_input(path)?.as_slice()))?,
                None => parse_wikidata_sample(bytes.as_slice(), None::<&[u8]>)?,
            },
        }
    };
    Ok(LoadedOntology { ontology, digest })
}

pub fn load_occurrences(path: &Path) -> Result<(String, Vec<OccurrenceRecord>)> {
    single_source(read_occurrences(read_input(path)?.as_slice())?)
}

pub struct LoadedModel {
    pub config: ModelConfig,
    pub profile: Option<SyntheticProfile>,
    pub profile_path: Option<PathBuf>,
}

/// Reads a model config; a synthetic profile path is taken relative to the
/// config file.
pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let config = ModelConfig::from_json(&read_input_string(path)?)?;
    let (profile, profile_path) = match &config.profile {
        Some(rel) => {
            let full = path.parent().unwrap_or(Path::new(".")).join(rel);
            let text = read_input_string(&full)?;
            let profile: SyntheticProfile = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", full.display())))?;
            profile.validate()?;
            (Some(profile), Some(full))
        }
        None => (None, None),
    };
    Ok(LoadedModel {
        config,
        profile,
        profile_path,
    })
}
