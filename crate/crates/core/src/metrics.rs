//! Scoring of probe outcomes and error-pattern measures.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::{Concept, ConceptId, Ontology, OntologyKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub concept: Concept,
    pub predicted: Option<ConceptId>,
    pub correct: bool,
    pub invented: bool,
    pub raw_text: String,
}

/// Correctness is exact-ID match, except for Wikidata where any ID sharing the
/// gold label counts.
pub fn score(ontology: &Ontology, concept: &Concept, predicted: Option<ConceptId>, raw_text: &str) -> ProbeRecord {
    let (correct, invented) = match &predicted {
        None => (false, false),
        Some(id) => {
            let correct = match ontology.kind() {
                OntologyKind::Wikidata => ontology
                    .ids_for_label(&concept.label)
                    .is_some_and(|ids| ids.contains(id)),
                _ => *id == concept.id,
            };
            (correct, !ontology.in_universe(id))
        }
    };
    ProbeRecord {
        concept: concept.clone(),
        predicted,
        correct,
        invented: invented && !correct,
        raw_text: raw_text.to_string(),
    }
}

pub fn accuracy(records: &[ProbeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedInput("accuracy of an empty record set".into()));
    }
    let correct = records.iter().filter(|r| r.correct).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if lc == sc {
                diag
            } else {
                1 + diag.min(above).min(row[j])
            };
            diag = above;
        }
    }
    row[short.len()]
}

fn label_tokens(s: &str) -> BTreeSet<String> {
    s.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Token-set Jaccard similarity of two labels. Two empty labels are identical.
pub fn jaccard_label_similarity(a: &str, b: &str) -> f64 {
    let ta = label_tokens(a);
    let tb = label_tokens(b);
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let inter = ta.intersection(&tb).count();
    let union = ta.union(&tb).count();
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSimilarity {
    pub mean_levenshtein: Option<f64>,
    pub mean_jaccard: Option<f64>,
    pub n_levenshtein: usize,
    pub n_jaccard: usize,
}

pub fn error_similarity<'a>(ontology: &Ontology, records: impl IntoIterator<Item = &'a ProbeRecord>) -> ErrorSimilarity {
    let mut lev_sum = 0usize;
    let mut n_lev = 0usize;
    let mut jac_sum = 0.0;
    let mut n_jac = 0usize;
    for record in records {
        if record.correct {
            continue;
        }
        let Some(predicted) = &record.predicted else {
            continue;
        };
        lev_sum += levenshtein(predicted.as_str(), record.concept.id.as_str());
        n_lev += 1;
        if let Some(other) = ontology.get(predicted) {
            jac_sum += jaccard_label_similarity(&record.concept.label, &other.label);
            n_jac += 1;
        }
    }
    ErrorSimilarity {
        mean_levenshtein: (n_lev > 0).then(|| lev_sum as f64 / n_lev as f64),
        mean_jaccard: (n_jac > 0).then(|| jac_sum / n_jac as f64),
        n_levenshtein: n_lev,
        n_jaccard: n_jac,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationStats {
    pub unique_predicted: usize,
    pub pct_unique_invented: Option<f64>,
    pub pct_errors_from_invented: Option<f64>,
}

pub fn hallucination_stats(ontology: &Ontology, records: &[ProbeRecord]) -> HallucinationStats {
    let unique: BTreeSet<&ConceptId> = records.iter().filter_map(|r| r.predicted.as_ref()).collect();
    let unique_invented = unique.iter().filter(|id| !ontology.in_universe(id)).count();
    let wrong = records.iter().filter(|r| !r.correct).count();
    let wrong_invented = records.iter().filter(|r| !r.correct && r.invented).count();
    HallucinationStats {
        unique_predicted: unique.len(),
        pct_unique_invented: (!unique.is_empty()).then(|| 100.0 * unique_invented as f64 / unique.len() as f64),
        pct_errors_from_invented: (wrong > 0).then(|| 100.0 * wrong_invented as f64 / wrong as f64),
    }
}

/// Predicted IDs by descending frequency; ties in canonical ID order.
pub fn repeated_id_counts(records: &[ProbeRecord]) -> Vec<(ConceptId, usize)> {
    let mut counts: HashMap<&ConceptId, usize> = HashMap::new();
    for id in records.iter().filter_map(|r| r.predicted.as_ref()) {
        *counts.entry(id).or_default() += 1;
    }
    let mut ranked: Vec<(ConceptId, usize)> = counts.into_iter().map(|(id, n)| (id.clone(), n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

pub fn top_k(ranked: &[(ConceptId, usize)], k: usize) -> &[(ConceptId, usize)] {
    &ranked[..k.min(ranked.len())]
}

/// Serialized form of a scored probe, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredLine {
    pub source: OntologyKind,
    pub gold_id: ConceptId,
    pub label: String,
    #[serde(default)]
    pub predicted_id: Option<ConceptId>,
    pub correct: bool,
    pub invented: bool,
    pub raw_text: String,
}

impl From<&ProbeRecord> for ScoredLine {
    fn from(r: &ProbeRecord) -> Self {
        ScoredLine {
            source: r.concept.source,
            gold_id: r.concept.id.clone(),
            label: r.concept.label.clone(),
            predicted_id: r.predicted.clone(),
            correct: r.correct,
            invented: r.invented,
            raw_text: r.raw_text.clone(),
        }
    }
}

impl From<ScoredLine> for ProbeRecord {
    fn from(l: ScoredLine) -> Self {
        ProbeRecord {
            concept: Concept {
                id: l.gold_id,
                label: l.label,
                source: l.source,
            },
            predicted: l.predicted_id,
            correct: l.correct,
            invented: l.invented,
            raw_text: l.raw_text,
        }
    }
}

pub fn write_scored(records: &[ProbeRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&ScoredLine::from(r))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_scored(text: &str) -> Result<Vec<ProbeRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<ScoredLine>(l)
                .map(ProbeRecord::from)
                .map_err(|e| Error::parse(i + 1, e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::parse_wikidata_sample;

    fn id(s: &str) -> ConceptId {
        ConceptId::new(s).unwrap()
    }

    fn go_ontology() -> Ontology {
        let concepts = [
            ("GO:0001822", "kidney development"),
            ("GO:0060219", "camera-type eye photoreceptor cell differentiation"),
            ("GO:0060519", "cell adhesion involved in prostatic bud elongation"),
        ]
        .into_iter()
        .map(|(i, l)| Concept {
            id: id(i),
            label: l.into(),
            source: OntologyKind::Go,
        })
        .collect();
        Ontology::new(OntologyKind::Go, concepts, []).unwrap()
    }

    #[test]
    fn exact_match_and_invention() {
        let onto = go_ontology();
        let gold = onto.concepts()[0].clone();
        let hit = score(&onto, &gold, Some(id("GO:0001822")), "GO:0001822");
        assert!(hit.correct && !hit.invented);
        let invented = score(&onto, &gold, Some(id("GO:9999999")), "GO:9999999");
        assert!(!invented.correct && invented.invented);
        let absent = score(&onto, &gold, None, "no idea");
        assert!(!absent.correct && !absent.invented);
    }

    #[test]
    fn wikidata_polysemy_counts_any_label_match() {
        let onto =
            parse_wikidata_sample("qid,label,qrank\nQ155,mercury,1\nQ308,mercury,2\n".as_bytes(), None::<&[u8]>)
                .unwrap();
        let gold = onto.concepts()[0].clone();
        assert!(score(&onto, &gold, Some(id("Q308")), "Q308").correct);
    }

    #[test]
    fn accuracy_arithmetic() {
        let onto = go_ontology();
        let gold = onto.concepts()[0].clone();
        let mut records = vec![score(&onto, &gold, Some(gold.id.clone()), "")];
        records.extend((0..3).map(|_| score(&onto, &gold, None, "")));
        assert_eq!(accuracy(&records).unwrap(), 0.25);
        assert!(matches!(accuracy(&[]), Err(Error::UndefinedInput(_))));
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("GO:0060219", "GO:0060519"), 1);
        assert_eq!(levenshtein("same", "same"), 0);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(
            jaccard_label_similarity("heart valve morphogenesis", "heart trabecula morphogenesis"),
            0.5
        );
        assert_eq!(
            jaccard_label_similarity("regulation of cell division", "regulation of cell motility"),
            0.6
        );
        assert_eq!(jaccard_label_similarity("kidney development", "kidney development"), 1.0);
        assert_eq!(jaccard_label_similarity("", "  "), 1.0);
        assert_eq!(jaccard_label_similarity("(Kidney), development.", "kidney development"), 1.0);
    }

    #[test]
    fn error_similarity_cases() {
        let onto = go_ontology();
        let empty = error_similarity(&onto, &[]);
        assert_eq!(empty.n_levenshtein, 0);
        assert!(empty.mean_levenshtein.is_none() && empty.mean_jaccard.is_none());

        let gold = onto.get(&id("GO:0060219")).unwrap().clone();
        let wrong = score(&onto, &gold, Some(id("GO:0060519")), "");
        let sim = error_similarity(&onto, [&wrong]);
        assert_eq!(sim.mean_levenshtein, Some(1.0));
        assert_eq!(sim.n_jaccard, 1);

        let invented = score(&onto, &gold, Some(id("GO:1234567")), "");
        let sim = error_similarity(&onto, [&invented]);
        assert_eq!(sim.n_levenshtein, 1);
        assert_eq!(sim.n_jaccard, 0);
    }

    #[test]
    fn hallucination_arithmetic() {
        let concepts = vec![
            Concept { id: id("GO:0000001"), label: "one".into(), source: OntologyKind::Go },
            Concept { id: id("GO:0000003"), label: "three".into(), source: OntologyKind::Go },
        ];
        let onto = Ontology::new(OntologyKind::Go, concepts, []).unwrap();
        let gold = onto.concepts()[1].clone();
        let records = vec![
            score(&onto, &gold, Some(id("GO:0000001")), ""),
            score(&onto, &gold, Some(id("GO:0000001")), ""),
            score(&onto, &gold, Some(id("GO:0000002")), ""),
        ];
        let stats = hallucination_stats(&onto, &records);
        assert_eq!(stats.unique_predicted, 2);
        assert_eq!(stats.pct_unique_invented, Some(50.0));
        assert!((stats.pct_errors_from_invented.unwrap() - 100.0 / 3.0).abs() < 1e-12);

        let all_right = vec![score(&onto, &gold, Some(gold.id.clone()), "")];
        assert!(hallucination_stats(&onto, &all_right).pct_errors_from_invented.is_none());
    }

    #[test]
    fn repeated_ids_ranked_with_ties_by_id() {
        let onto = go_ontology();
        let gold = onto.concepts()[0].clone();
        let mk = |s: &str| score(&onto, &gold, Some(id(s)), "");
        let records = vec![mk("GO:0000002"), mk("GO:0000001"), mk("GO:0000002"), mk("GO:0000003")];
        let ranked = repeated_id_counts(&records);
        assert_eq!(
            ranked,
            vec![(id("GO:0000002"), 2), (id("GO:0000001"), 1), (id("GO:0000003"), 1)]
        );
        assert_eq!(top_k(&ranked, 500).len(), 3);
        assert_eq!(top_k(&ranked, 1).len(), 1);
    }

    #[test]
    fn scored_file_round_trip() {
        let onto = go_ontology();
        let gold = onto.concepts()[0].clone();
        let records = vec![
            score(&onto, &gold, Some(gold.id.clone()), "The ID is GO:0001822."),
            score(&onto, &gold, None, "\"quoted\"\nnewline"),
        ];
        let text = write_scored(&records).unwrap();
        assert_eq!(read_scored(&text).unwrap(), records);
    }
}
