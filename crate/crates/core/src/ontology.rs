//! Ontology ingestion.
//!
//! Every supported resource (OBO flat files for GO and Uberon, the ICD-10 code
//! table, a Wikidata QRank sample) is reduced to the same model: an ordered list
//! of ID/label concepts, lookup indexes, and the full ID universe of the source
//! resource. The universe is what invented-ID checks run against, so it keeps
//! IDs the inclusion filters dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OntologyKind {
    Go,
    Uberon,
    Icd10,
    Wikidata,
}

impl OntologyKind {
    pub const ALL: [OntologyKind; 4] = [
        OntologyKind::Go,
        OntologyKind::Uberon,
        OntologyKind::Icd10,
        OntologyKind::Wikidata,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OntologyKind::Go => "GO",
            OntologyKind::Uberon => "UBERON",
            OntologyKind::Icd10 => "ICD10",
            OntologyKind::Wikidata => "WIKIDATA",
        }
    }

    /// Anchored pattern every canonical ID of this kind matches.
    pub fn canonical_pattern(self) -> &'static Regex {
        static PATTERNS: OnceLock<[Regex; 4]> = OnceLock::new();
        let all = PATTERNS.get_or_init(|| {
            [
                Regex::new(r"^GO:[0-9]{7}$").unwrap(),
                Regex::new(r"^UBERON:[0-9]{7}$").unwrap(),
                Regex::new(r"^[A-Z][0-9]{2}(?:\.[0-9A-Z]{1,4})?$").unwrap(),
                Regex::new(r"^Q[1-9][0-9]*$").unwrap(),
            ]
        });
        &all[self as usize]
    }

    pub fn matches_canonical(self, id: &str) -> bool {
        self.canonical_pattern().is_match(id)
    }
}

impl fmt::Display for OntologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OntologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "").as_str() {
            "GO" => Ok(OntologyKind::Go),
            "UBERON" => Ok(OntologyKind::Uberon),
            "ICD10" => Ok(OntologyKind::Icd10),
            "WIKIDATA" => Ok(OntologyKind::Wikidata),
            other => Err(Error::Usage(format!("unknown ontology kind `{other}`"))),
        }
    }
}

/// Canonical concept identifier such as `GO:0001822`, `C34.1` or `Q42`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConceptId(String);

impl ConceptId {
    /// Accepts any non-empty token without surrounding whitespace.
    pub fn new(raw: impl Into<String>) -> Result<Self> {
        let raw = raw.into();
        if raw.is_empty() {
            return Err(Error::Usage("concept id is empty".into()));
        }
        if raw.trim() != raw {
            return Err(Error::Usage(format!(
                "concept id `{raw}` has surrounding whitespace"
            )));
        }
        Ok(ConceptId(raw))
    }

    /// Like [`ConceptId::new`] but also requires the canonical shape of `kind`.
    pub fn for_kind(kind: OntologyKind, raw: impl Into<String>) -> Result<Self> {
        let id = Self::new(raw)?;
        if !kind.matches_canonical(&id.0) {
            return Err(Error::Usage(format!(
                "`{}` is not a canonical {kind} id",
                id.0
            )));
        }
        Ok(id)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for ConceptId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        ConceptId::new(value)
    }
}

impl From<ConceptId> for String {
    fn from(value: ConceptId) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub label: String,
    pub source: OntologyKind,
}

/// Trim, case-fold and collapse internal whitespace.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ontology {
    kind: OntologyKind,
    concepts: Vec<Concept>,
    id_index: HashMap<ConceptId, usize>,
    label_index: BTreeMap<String, BTreeSet<ConceptId>>,
    universe: BTreeSet<ConceptId>,
}

impl Ontology {
    /// Builds an ontology, enforcing the index invariants. `extra_universe`
    /// lists IDs of the source resource that are not retained as concepts.
    pub fn new(
        kind: OntologyKind,
        concepts: Vec<Concept>,
        extra_universe: impl IntoIterator<Item = ConceptId>,
    ) -> Result<Self> {
        let mut id_index = HashMap::with_capacity(concepts.len());
        let mut label_index: BTreeMap<String, BTreeSet<ConceptId>> = BTreeMap::new();
        let mut universe: BTreeSet<ConceptId> = extra_universe.into_iter().collect();

        for (pos, concept) in concepts.iter().enumerate() {
            if concept.source != kind {
                return Err(Error::Usage(format!(
                    "concept {} is from {} but the ontology is {kind}",
                    concept.id, concept.source
                )));
            }
            if concept.label.trim().is_empty() {
                return Err(Error::Usage(format!("concept {} has an empty label", concept.id)));
            }
            if id_index.insert(concept.id.clone(), pos).is_some() {
                return Err(Error::Usage(format!("duplicate concept id {}", concept.id)));
            }
            let ids = label_index.entry(normalize_label(&concept.label)).or_default();
            ids.insert(concept.id.clone());
            if ids.len() > 1 && kind != OntologyKind::Wikidata {
                return Err(Error::Usage(format!(
                    "label `{}` is shared by several {kind} ids ({})",
                    concept.label,
                    ids.iter().map(ConceptId::as_str).collect::<Vec<_>>().join(", ")
                )));
            }
            universe.insert(concept.id.clone());
        }

        Ok(Ontology {
            kind,
            concepts,
            id_index,
            label_index,
            universe,
        })
    }

    pub fn kind(&self) -> OntologyKind {
        self.kind
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn get(&self, id: &ConceptId) -> Option<&Concept> {
        self.id_index.get(id).map(|&pos| &self.concepts[pos])
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.id_index.contains_key(id)
    }

    /// IDs whose label normalizes to the same string as `label`.
    pub fn ids_for_label(&self, label: &str) -> Option<&BTreeSet<ConceptId>> {
        self.label_index.get(&normalize_label(label))
    }

    pub fn label_index(&self) -> &BTreeMap<String, BTreeSet<ConceptId>> {
        &self.label_index
    }

    pub fn universe(&self) -> &BTreeSet<ConceptId> {
        &self.universe
    }

    pub fn in_universe(&self, id: &ConceptId) -> bool {
        self.universe.contains(id)
    }

    /// Writes the canonical `source,id,label` table. Universe members that
    /// are not concepts follow the concepts, sorted, with an empty label.
    pub fn write_canonical<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["source", "id", "label"])?;
        for concept in &self.concepts {
            out.write_record([self.kind.as_str(), concept.id.as_str(), &concept.label])?;
        }
        for id in self.universe.iter().filter(|id| !self.contains(id)) {
            out.write_record([self.kind.as_str(), id.as_str(), ""])?;
        }
        out.flush().map_err(|e| Error::io("<canonical table>", e))?;
        Ok(())
    }

    pub fn to_canonical_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_canonical(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Reads a canonical concept table produced by [`Ontology::write_canonical`].
pub fn read_canonical<R: Read>(reader: R) -> Result<Ontology> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    expect_header(&mut rdr, &["source", "id", "label"])?;
    let mut kind = None;
    let mut concepts = Vec::new();
    let mut extra = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record?;
        let source: OntologyKind = field(&record, 0, line)?
            .parse()
            .map_err(|_| Error::parse(line, "unknown source"))?;
        if *kind.get_or_insert(source) != source {
            return Err(Error::parse(line, "mixed sources in one concept table"));
        }
        let id = ConceptId::new(field(&record, 1, line)?)
            .map_err(|e| Error::parse(line, e.to_string()))?;
        let label = record.get(2).unwrap_or("");
        if label.is_empty() {
            extra.push(id);
        } else {
            concepts.push(Concept {
                id,
                label: label.to_string(),
                source,
            });
        }
    }
    let kind = kind.ok_or_else(|| Error::parse(1, "concept table has no rows"))?;
    Ontology::new(kind, concepts, extra).map_err(|e| Error::parse(0, e.to_string()))
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::parse(
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn field(record: &csv::StringRecord, idx: usize, line: usize) -> Result<&str> {
    match record.get(idx).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::parse(line, format!("column {} is empty", idx + 1))),
    }
}

#[derive(Default)]
struct Stanza {
    start_line: usize,
    id: Option<String>,
    name: Option<String>,
    obsolete: bool,
}

/// Parses `[Term]` stanzas of an OBO flat file. Only non-obsolete terms whose
/// prefix equals `native_prefix` become concepts; every parsed ID enters the
/// universe.
pub fn parse_obo<R: BufRead>(reader: R, native_prefix: &str) -> Result<Ontology> {
    let kind = match native_prefix {
        "GO" => OntologyKind::Go,
        "UBERON" => OntologyKind::Uberon,
        other => {
            return Err(Error::Usage(format!(
                "OBO native prefix must be GO or UBERON, got `{other}`"
            )))
        }
    };

    let mut concepts = Vec::new();
    let mut universe = Vec::new();
    let mut seen = BTreeSet::new();
    let mut current: Option<Stanza> = None;

    let mut finish = |stanza: Stanza| -> Result<()> {
        let (id, name) = match (stanza.id, stanza.name) {
            (Some(id), Some(name)) => (id, name),
            (Some(_), None) => return Err(Error::parse(stanza.start_line, "term has `id:` but no `name:`")),
            (None, Some(_)) => return Err(Error::parse(stanza.start_line, "term has `name:` but no `id:`")),
            (None, None) => return Ok(()),
        };
        let id = ConceptId::new(id).map_err(|e| Error::parse(stanza.start_line, e.to_string()))?;
        if !seen.insert(id.clone()) {
            return Err(Error::parse(stanza.start_line, format!("duplicate id {id}")));
        }
        let native = id
            .as_str()
            .split_once(':')
            .is_some_and(|(prefix, _)| prefix == native_prefix);
        if native && !stanza.obsolete {
            if !kind.matches_canonical(id.as_str()) {
                return Err(Error::parse(
                    stanza.start_line,
                    format!("native id {id} is not of the form {native_prefix}:NNNNNNN"),
                ));
            }
            concepts.push(Concept {
                id: id.clone(),
                label: name,
                source: kind,
            });
        }
        universe.push(id);
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<obo stream>", e))?;
        let trimmed = line.trim();
        if trimmed.starts_with('[') && trimmed.ends_with(']') {
            if let Some(stanza) = current.take() {
                finish(stanza)?;
            }
            if trimmed == "[Term]" {
                current = Some(Stanza {
                    start_line: line_no,
                    ..Stanza::default()
                });
            }
            continue;
        }
        let Some(stanza) = current.as_mut() else {
            continue;
        };
        let Some((key, value)) = trimmed.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match key.trim() {
            "id" => {
                let value = strip_obo_comment(value);
                if stanza.id.replace(value.to_string()).is_some() {
                    return Err(Error::parse(line_no, "term has more than one `id:`"));
                }
            }
            "name" => {
                if value.is_empty() {
                    return Err(Error::parse(line_no, "empty `name:`"));
                }
                if stanza.name.replace(value.to_string()).is_some() {
                    return Err(Error::parse(line_no, "term has more than one `name:`"));
                }
            }
            "is_obsolete" => stanza.obsolete = value == "true",
            _ => {}
        }
    }
    if let Some(stanza) = current.take() {
        finish(stanza)?;
    }

    Ontology::new(kind, concepts, universe).map_err(|e| Error::parse(0, e.to_string()))
}

fn strip_obo_comment(value: &str) -> &str {
    match value.find(" !") {
        Some(pos) => value[..pos].trim_end(),
        None => value,
    }
}

/// Number of alphanumeric characters in an ICD-10 code once the dot is removed.
pub fn icd10_code_length(code: &str) -> usize {
    code.chars().filter(char::is_ascii_alphanumeric).count()
}

/// Parses a `code,label` ICD-10 table. Codes longer than `max_code_chars`
/// alphanumerics (dot excluded) stay in the universe only.
pub fn parse_icd10<R: Read>(reader: R, max_code_chars: usize) -> Result<Ontology> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    expect_header(&mut rdr, &["code", "label"])?;
    let mut concepts = Vec::new();
    let mut universe = Vec::new();
    let mut seen = BTreeSet::new();
    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record?;
        let raw_code = field(&record, 0, line)?;
        let label = field(&record, 1, line)?;
        let code = crate::extract::normalize_id(OntologyKind::Icd10, raw_code)
            .ok_or_else(|| Error::parse(line, format!("`{raw_code}` is not an ICD-10 code")))?;
        if !seen.insert(code.clone()) {
            return Err(Error::parse(line, format!("duplicate code {code}")));
        }
        if icd10_code_length(code.as_str()) <= max_code_chars {
            concepts.push(Concept {
                id: code.clone(),
                label: label.to_string(),
                source: OntologyKind::Icd10,
            });
        }
        universe.push(code);
    }
    Ontology::new(OntologyKind::Icd10, concepts, universe).map_err(|e| Error::parse(0, e.to_string()))
}

/// Parses a `qid,label,qrank` Wikidata sample. When `universe` is given it is
/// a newline-separated list of every known QID.
pub fn parse_wikidata_sample<R: Read, U: BufRead>(reader: R, universe: Option<U>) -> Result<Ontology> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    expect_header(&mut rdr, &["qid", "label", "qrank"])?;
    let mut concepts = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record?;
        let qid = field(&record, 0, line)?;
        let id = ConceptId::for_kind(OntologyKind::Wikidata, qid)
            .map_err(|_| Error::parse(line, format!("`{qid}` is not a Wikidata id")))?;
        let label = field(&record, 1, line)?;
        let qrank = field(&record, 2, line)?;
        if qrank.parse::<f64>().map_or(true, |v| !v.is_finite() || v < 0.0) {
            return Err(Error::parse(line, format!("invalid qrank `{qrank}`")));
        }
        concepts.push(Concept {
            id,
            label: label.to_string(),
            source: OntologyKind::Wikidata,
        });
    }
    let mut extra = Vec::new();
    if let Some(universe) = universe {
        for (idx, line) in universe.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<wikidata universe>", e))?;
            let qid = line.trim();
            if qid.is_empty() {
                continue;
            }
            extra.push(
                ConceptId::for_kind(OntologyKind::Wikidata, qid)
                    .map_err(|_| Error::parse(idx + 1, format!("`{qid}` is not a Wikidata id")))?,
            );
        }
    }
    Ontology::new(OntologyKind::Wikidata, concepts, extra).map_err(|e| Error::parse(0, e.to_string()))
}
