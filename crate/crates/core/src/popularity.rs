//! Popularity buckets over per-concept occurrence counts.
//!
//! Buckets are numbered from 1 (least popular) to `n_buckets`. Boundaries are
//! nearest-rank quantiles of the observed counts at `j / n_buckets`, and a
//! concept falls into the first bucket whose boundary is at least its count,
//! so ties always share a bucket and heavy ties at zero fill the early
//! buckets.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{top_k, ProbeRecord};
use crate::ontology::{Concept, ConceptId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceRecord {
    pub concept_id: ConceptId,
    pub source_tag: String,
    pub count: u64,
}

/// Reads a `source,id,occurrences` file.
pub fn read_occurrences<R: Read>(reader: R) -> Result<Vec<OccurrenceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers != ["source", "id", "occurrences"] {
        return Err(Error::parse(
            1,
            format!("expected header `source,id,occurrences`, found `{}`", headers.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record?;
        let source = record.get(0).unwrap_or("").trim();
        let id = record.get(1).unwrap_or("").trim();
        let count = record.get(2).unwrap_or("").trim();
        if source.is_empty() {
            return Err(Error::parse(line, "empty source tag"));
        }
        let concept_id = ConceptId::new(id).map_err(|e| Error::parse(line, e.to_string()))?;
        let count = count
            .parse::<u64>()
            .map_err(|_| Error::parse(line, format!("occurrence count `{count}` is not a non-negative integer")))?;
        out.push(OccurrenceRecord {
            concept_id,
            source_tag: source.to_string(),
            count,
        });
    }
    Ok(out)
}

pub fn write_occurrences(records: &[OccurrenceRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "id", "occurrences"])?;
    for r in records {
        w.write_record([r.source_tag.as_str(), r.concept_id.as_str(), &r.count.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<occurrences>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// A source of per-concept occurrence counts.
pub trait OccurrenceProvider {
    fn occurrences(&self, concepts: &[Concept]) -> Result<Vec<OccurrenceRecord>>;
}

/// Counts read from a `source,id,occurrences` file, restricted to the given concepts.
pub struct FileProvider {
    pub path: PathBuf,
}

impl OccurrenceProvider for FileProvider {
    fn occurrences(&self, concepts: &[Concept]) -> Result<Vec<OccurrenceRecord>> {
        let file = std::fs::File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        let wanted: HashSet<&ConceptId> = concepts.iter().map(|c| &c.id).collect();
        Ok(read_occurrences(file)?
            .into_iter()
            .filter(|r| wanted.contains(&r.concept_id))
            .collect())
    }
}

/// Live search-engine counts. Not implemented: no scraper is shipped.
pub struct SearchProvider {
    pub source_tag: String,
}

impl SearchProvider {
    /// The exact-phrase query for one concept.
    pub fn query(concept: &Concept) -> String {
        format!("\"{}\" \"{}\"", concept.label, concept.id.as_str())
    }
}

impl OccurrenceProvider for SearchProvider {
    fn occurrences(&self, _concepts: &[Concept]) -> Result<Vec<OccurrenceRecord>> {
        Err(Error::Config(format!(
            "no live search provider is available for `{}`; supply an occurrence file",
            self.source_tag
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAssignment {
    n_buckets: usize,
    boundaries: Vec<u64>,
    membership: BTreeMap<ConceptId, usize>,
    occupancy: Vec<usize>,
    counts: BTreeMap<ConceptId, u64>,
}

impl BucketAssignment {
    pub fn n_buckets(&self) -> usize {
        self.n_buckets
    }

    /// `n_buckets - 1` thresholds; bucket `j` holds counts in
    /// `(boundaries[j-2], boundaries[j-1]]`.
    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }

    pub fn bucket_of(&self, id: &ConceptId) -> Option<usize> {
        self.membership.get(id).copied()
    }

    pub fn membership(&self) -> &BTreeMap<ConceptId, usize> {
        &self.membership
    }

    /// Size of bucket `b` (1-based).
    pub fn occupancy(&self, bucket: usize) -> usize {
        self.occupancy[bucket - 1]
    }

    pub fn occupancies(&self) -> &[usize] {
        &self.occupancy
    }

    pub fn total(&self) -> usize {
        self.membership.len()
    }

    pub fn count_of(&self, id: &ConceptId) -> Option<u64> {
        self.counts.get(id).copied()
    }

    /// Members of bucket `b` in canonical ID order.
    pub fn members(&self, bucket: usize) -> Vec<&ConceptId> {
        self.membership
            .iter()
            .filter(|(_, &b)| b == bucket)
            .map(|(id, _)| id)
            .collect()
    }

    /// Mean occurrence count per bucket; `None` for empty buckets.
    pub fn mean_counts(&self) -> Vec<Option<f64>> {
        let mut sums = vec![0f64; self.n_buckets];
        for (id, &b) in &self.membership {
            sums[b - 1] += self.counts[id] as f64;
        }
        sums.iter()
            .zip(&self.occupancy)
            .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
            .collect()
    }
}

pub fn bucketize(occurrences: &[OccurrenceRecord], n_buckets: usize) -> Result<BucketAssignment> {
    if occurrences.is_empty() {
        return Err(Error::UndefinedInput("no occurrence records to bucketize".into()));
    }
    if n_buckets == 0 {
        return Err(Error::Usage("number of buckets must be at least 1".into()));
    }
    let mut counts = BTreeMap::new();
    for r in occurrences {
        if counts.insert(r.concept_id.clone(), r.count).is_some() {
            return Err(Error::Usage(format!("duplicate occurrence record for {}", r.concept_id)));
        }
    }
    let mut sorted: Vec<u64> = counts.values().copied().collect();
    sorted.sort_unstable();
    let n = sorted.len();
    let boundaries: Vec<u64> = (1..n_buckets)
        .map(|j| {
            let rank = (j * n).div_ceil(n_buckets).max(1);
            sorted[rank - 1]
        })
        .collect();

    let mut occupancy = vec![0usize; n_buckets];
    let membership: BTreeMap<ConceptId, usize> = counts
        .iter()
        .map(|(id, &v)| {
            let bucket = boundaries.partition_point(|&b| b < v) + 1;
            occupancy[bucket - 1] += 1;
            (id.clone(), bucket)
        })
        .collect();

    Ok(BucketAssignment {
        n_buckets,
        boundaries,
        membership,
        occupancy,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAccuracy {
    pub bucket: usize,
    pub accuracy: Option<f64>,
    pub n_records: usize,
}

pub fn per_bucket_accuracy(assignment: &BucketAssignment, records: &[ProbeRecord]) -> Result<Vec<BucketAccuracy>> {
    let mut correct = vec![0usize; assignment.n_buckets];
    let mut total = vec![0usize; assignment.n_buckets];
    let mut missing = Vec::new();
    for r in records {
        match assignment.bucket_of(&r.concept.id) {
            Some(b) => {
                total[b - 1] += 1;
                correct[b - 1] += usize::from(r.correct);
            }
            None => missing.push(r.concept.id.as_str().to_string()),
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::UndefinedInput(format!(
            "{} scored concepts have no bucket: {}",
            missing.len(),
            summarize(&missing)
        )));
    }
    Ok((0..assignment.n_buckets)
        .map(|i| BucketAccuracy {
            bucket: i + 1,
            accuracy: (total[i] > 0).then(|| correct[i] as f64 / total[i] as f64),
            n_records: total[i],
        })
        .collect())
}

pub(crate) fn summarize(ids: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut s = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(", ... ({} more)", ids.len() - SHOWN));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketBias {
    pub bucket: usize,
    pub n_top: usize,
    pub size: usize,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRatioReport {
    pub k: usize,
    pub total_concepts: usize,
    pub considered: usize,
    pub unassigned: usize,
    pub buckets: Vec<BucketBias>,
}

/// Observed over expected share of the top-`k` most repeated predicted IDs
/// per bucket. IDs with no bucket (invented ones) are tallied separately.
pub fn bias_ratio(assignment: &BucketAssignment, repeated: &[(ConceptId, usize)], k: usize) -> Result<BiasRatioReport> {
    if k == 0 {
        return Err(Error::Usage("k must be positive".into()));
    }
    if repeated.is_empty() {
        return Err(Error::UndefinedInput("no repeated IDs to analyse".into()));
    }
    let top = top_k(repeated, k);
    let mut n_top = vec![0usize; assignment.n_buckets];
    let mut unassigned = 0;
    for (id, _) in top {
        match assignment.bucket_of(id) {
            Some(b) => n_top[b - 1] += 1,
            None => unassigned += 1,
        }
    }
    let total = assignment.total();
    let buckets = (0..assignment.n_buckets)
        .map(|i| {
            let size = assignment.occupancy[i];
            let expected = (size * k) as f64 / total as f64;
            BucketBias {
                bucket: i + 1,
                n_top: n_top[i],
                size,
                ratio: (size > 0).then(|| n_top[i] as f64 / expected),
            }
        })
        .collect();
    Ok(BiasRatioReport {
        k,
        total_concepts: total,
        considered: top.len(),
        unassigned,
        buckets,
    })
}

/// Restricts `occurrences` to one `source_tag`, or checks a file holds one.
pub fn single_source(occurrences: Vec<OccurrenceRecord>) -> Result<(String, Vec<OccurrenceRecord>)> {
    let mut tags: HashMap<&str, usize> = HashMap::new();
    for r in &occurrences {
        *tags.entry(r.source_tag.as_str()).or_default() += 1;
    }
    match tags.len() {
        0 => Err(Error::UndefinedInput("occurrence file has no rows".into())),
        1 => {
            let tag = occurrences[0].source_tag.clone();
            Ok((tag, occurrences))
        }
        _ => {
            let mut names: Vec<_> = tags.keys().copied().collect();
            names.sort_unstable();
            Err(Error::Usage(format!(
                "occurrence file mixes source tags ({}); use one file per source",
                names.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occ(counts: &[u64]) -> Vec<OccurrenceRecord> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| OccurrenceRecord {
                concept_id: ConceptId::new(format!("GO:{:07}", i + 1)).unwrap(),
                source_tag: "web".into(),
                count: c,
            })
            .collect()
    }

    #[test]
    fn providers() {
        use crate::ontology::OntologyKind;
        let concept = |n: u32| Concept {
            id: ConceptId::new(format!("GO:{n:07}")).unwrap(),
            label: "heart development".into(),
            source: OntologyKind::Go,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("occ.csv");
        std::fs::write(&path, write_occurrences(&occ(&[5, 9])).unwrap()).unwrap();
        let got = FileProvider { path }.occurrences(&[concept(2)]).unwrap();
        assert_eq!(got, occ(&[5, 9])[1..].to_vec());
        assert_eq!(SearchProvider::query(&concept(7)), "\"heart development\" \"GO:0000007\"");
        let stub = SearchProvider { source_tag: "web".into() };
        assert!(matches!(stub.occurrences(&[concept(1)]), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_distinct_counts() {
        let counts: Vec<u64> = (1..=100).collect();
        let a = bucketize(&occ(&counts), 50).unwrap();
        assert!(a.occupancies().iter().all(|&n| n == 2));
        for (i, r) in occ(&counts).iter().enumerate() {
            assert_eq!(a.bucket_of(&r.concept_id), Some(i / 2 + 1));
        }
    }

    #[test]
    fn heavy_zero_ties_fill_first_bucket() {
        // Sorted ranks 91..100 hold the positives; boundaries for j = 46..49
        // sit at ranks 92, 94, 96, 98.
        let mut counts = vec![0u64; 90];
        counts.extend([3, 5, 8, 13, 21, 34, 55, 89, 144, 233]);
        let a = bucketize(&occ(&counts), 50).unwrap();
        assert_eq!(a.occupancy(1), 90);
        let expected_tail = [46, 46, 47, 47, 48, 48, 49, 49, 50, 50];
        for (k, &b) in expected_tail.iter().enumerate() {
            let id = ConceptId::new(format!("GO:{:07}", 91 + k)).unwrap();
            assert_eq!(a.bucket_of(&id), Some(b));
        }
        assert_eq!(a.occupancies().iter().sum::<usize>(), 100);
    }

    #[test]
    fn single_bucket() {
        let a = bucketize(&occ(&[5, 1, 9]), 1).unwrap();
        assert_eq!(a.occupancies(), &[3]);
    }

    #[test]
    fn bucketize_errors() {
        assert!(bucketize(&[], 50).is_err());
        let mut dup = occ(&[1, 2]);
        dup[1].concept_id = dup[0].concept_id.clone();
        assert!(matches!(bucketize(&dup, 50), Err(Error::Usage(_))));
    }

    #[test]
    fn bias_ratio_worked_example() {
        // 1000 concepts, 50 buckets of 20; 10 of the top 500 in bucket 1.
        let counts: Vec<u64> = (1..=1000).collect();
        let a = bucketize(&occ(&counts), 50).unwrap();
        assert_eq!(a.occupancy(1), 20);
        let mut repeated: Vec<(ConceptId, usize)> = (1..=10)
            .map(|i| (ConceptId::new(format!("GO:{i:07}")).unwrap(), 100))
            .collect();
        repeated.extend((501..991).map(|i| (ConceptId::new(format!("GO:{i:07}")).unwrap(), 5)));
        let report = bias_ratio(&a, &repeated, 500).unwrap();
        assert_eq!(report.buckets[0].n_top, 10);
        assert_eq!(report.buckets[0].ratio, Some(1.0));
    }

    #[test]
    fn bias_ratio_counts_invented_separately() {
        let a = bucketize(&occ(&[1, 2, 3, 4]), 2).unwrap();
        let repeated = vec![
            (ConceptId::new("GO:0000004").unwrap(), 3),
            (ConceptId::new("GO:9999999").unwrap(), 2),
        ];
        let report = bias_ratio(&a, &repeated, 500).unwrap();
        assert_eq!(report.unassigned, 1);
        assert_eq!(report.buckets.iter().map(|b| b.n_top).sum::<usize>(), 1);
        assert!(matches!(bias_ratio(&a, &repeated, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn occurrence_file_round_trip() {
        let records = occ(&[0, 7, 1_000_000]);
        let text = write_occurrences(&records).unwrap();
        assert!(text.starts_with("source,id,occurrences\n"));
        assert_eq!(read_occurrences(text.as_bytes()).unwrap(), records);
        assert!(read_occurrences("source,id,occurrences\nweb,GO:0000001,-3\n".as_bytes()).is_err());
    }
}
