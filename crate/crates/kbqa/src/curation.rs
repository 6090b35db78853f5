//! Operator legitimacy curation.
//!
//! Weak supervision finds forms that reach the right answer for the wrong
//! reason. This pass asks, per question type, which operators actually carry
//! the successes: each operator is ablated from the search on a subset, and
//! operators whose removal barely dents the success ratio are ruled
//! illegitimate for that type. Cleaning then deletes every found form that
//! uses an illegitimate operator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::QuestionRecord;
use crate::grammar::OpSet;
use crate::kb::KnowledgeBase;
use crate::search::{self, SearchConfig, SearchResult};

/// The seven question types the pipeline distinguishes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionType {
    /// "which city was ada born in"
    SimpleDirect,
    /// Union / intersection / difference of two relations.
    Logical,
    /// Argmax/argmin over a class, possibly behind a degree filter.
    QuantitativeSet,
    /// "how many ..." over one relation or a union.
    QuantitativeCount,
    /// Degree comparison filters returning a set.
    ComparativeSet,
    /// Degree comparison filters returning a count.
    ComparativeCount,
    /// Yes/no membership checks.
    Verification,
}

impl QuestionType {
    pub const ALL: [QuestionType; 7] = [
        QuestionType::SimpleDirect,
        QuestionType::Logical,
        QuestionType::QuantitativeSet,
        QuestionType::QuantitativeCount,
        QuestionType::ComparativeSet,
        QuestionType::ComparativeCount,
        QuestionType::Verification,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::SimpleDirect => "simple-direct",
            QuestionType::Logical => "logical",
            QuestionType::QuantitativeSet => "quantitative-set",
            QuestionType::QuantitativeCount => "quantitative-count",
            QuestionType::ComparativeSet => "comparative-set",
            QuestionType::ComparativeCount => "comparative-count",
            QuestionType::Verification => "verification",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<QuestionType, String> {
        QuestionType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown question type {s:?}"))
    }
}

/// Per-type legitimate operator sets.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LegitimacyTable {
    table: BTreeMap<QuestionType, OpSet>,
}

impl LegitimacyTable {
    pub fn get(&self, t: QuestionType) -> OpSet {
        self.table.get(&t).copied().unwrap_or_else(OpSet::full)
    }

    pub fn set(&mut self, t: QuestionType, ops: OpSet) {
        self.table.insert(t, ops);
    }

    pub fn iter(&self) -> impl Iterator<Item = (QuestionType, OpSet)> + '_ {
        self.table.iter().map(|(t, o)| (*t, *o))
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        let body = serde_json::to_string_pretty(self).expect("table serializes");
        crate::metrics::write_atomic(path, body.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<LegitimacyTable> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum CurationError {
    #[error("question type {qtype} has only {got} questions in the subset, need {need}")]
    InsufficientData { qtype: QuestionType, got: usize, need: usize },
    #[error("search result for unknown question {0}")]
    UnknownQuestion(String),
}

/// Controls for [`derive_legitimate_ops`].
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    /// An operator is legitimate when removing it drops the success ratio by
    /// more than this fraction.
    pub drop_threshold: f64,
    /// Minimum subset questions per type; below this the estimate is noise.
    pub min_questions_per_type: usize,
}

impl Default for CurationConfig {
    fn default() -> CurationConfig {
        CurationConfig { drop_threshold: 0.01, min_questions_per_type: 30 }
    }
}

/// Derives the legitimacy table from naive search results on a subset.
///
/// `questions` and `results` are matched by question id; every result must
/// have a question. The ablation rerun for an operator `o` uses the same
/// budget with `allowed = all \ {o}` and no forced operators, so removing a
/// start producer or the constant machinery shows its real effect.
pub fn derive_legitimate_ops(
    questions: &[QuestionRecord],
    results: &[SearchResult],
    kb: &KnowledgeBase,
    config: &SearchConfig,
    curation: &CurationConfig,
) -> Result<LegitimacyTable, CurationError> {
    let by_qid: BTreeMap<&str, &QuestionRecord> =
        questions.iter().map(|q| (q.qid.as_str(), q)).collect();

    let mut grouped: BTreeMap<QuestionType, Vec<(&QuestionRecord, &SearchResult)>> =
        BTreeMap::new();
    for r in results {
        let q = by_qid
            .get(r.qid.as_str())
            .ok_or_else(|| CurationError::UnknownQuestion(r.qid.clone()))?;
        grouped.entry(q.qtype).or_default().push((q, r));
    }

    let mut table = LegitimacyTable::default();
    for (qtype, rows) in &grouped {
        if rows.len() < curation.min_questions_per_type {
            return Err(CurationError::InsufficientData {
                qtype: *qtype,
                got: rows.len(),
                need: curation.min_questions_per_type,
            });
        }
        let n = rows.len() as f64;
        let base = rows.iter().filter(|(_, r)| r.success()).count() as f64 / n;
        // Ablation reruns only need the success bit, so stopping at the first
        // matching form leaves every ratio unchanged and saves most of the
        // budget on easy questions.
        let mut ablation_config = config.clone();
        ablation_config.max_forms = 1;
        let mut legit = OpSet::empty();
        for op in crate::grammar::Op::ALL {
            let allowed = OpSet::full().without(op);
            let ablated = rows
                .iter()
                .filter(|(q, _)| {
                    search::search_with_ops(q, kb, allowed, &ablation_config).success()
                })
                .count() as f64
                / n;
            if base - ablated > curation.drop_threshold {
                legit.insert(op);
            }
        }
        table.set(*qtype, legit);
    }
    Ok(table)
}

/// Filters every found list down to forms whose operators are all legitimate
/// for the question's type. Questions whose list empties out stay in the
/// output with `found = []`; they count as search failures downstream.
pub fn clean(
    results: &[SearchResult],
    questions: &[QuestionRecord],
    table: &LegitimacyTable,
) -> Result<Vec<SearchResult>, CurationError> {
    let types: BTreeMap<&str, QuestionType> =
        questions.iter().map(|q| (q.qid.as_str(), q.qtype)).collect();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        let qtype = *types
            .get(r.qid.as_str())
            .ok_or_else(|| CurationError::UnknownQuestion(r.qid.clone()))?;
        let legit = table.get(qtype);
        let mut kept = r.clone();
        kept.found.retain(|f| f.operators().is_subset(legit));
        out.push(kept);
    }
    Ok(out)
}

/// Operator-predictor training labels: per successful question, the union of
/// operators over its kept forms. Failed questions are skipped.
pub fn operator_labels(results: &[SearchResult]) -> Vec<(String, OpSet)> {
    results
        .iter()
        .filter(|r| r.success())
        .map(|r| {
            let ops = r
                .found
                .iter()
                .map(|f| f.operators())
                .fold(OpSet::empty(), OpSet::union);
            (r.qid.clone(), ops)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_type_text_round_trips() {
        for t in QuestionType::ALL {
            assert_eq!(t.as_str().parse::<QuestionType>().unwrap(), t);
        }
        assert!("nonsense".parse::<QuestionType>().is_err());
        let js = serde_json::to_string(&QuestionType::QuantitativeSet).unwrap();
        assert_eq!(js, "\"quantitative-set\"");
    }

    #[test]
    fn legitimacy_table_json_shape() {
        let mut t = LegitimacyTable::default();
        t.set(QuestionType::Verification, "A3 A6 A15 A16".parse().unwrap());
        let js = serde_json::to_string(&t).unwrap();
        assert_eq!(js, r#"{"verification":["A3","A6","A15","A16"]}"#);
        let back: LegitimacyTable = serde_json::from_str(&js).unwrap();
        assert_eq!(back, t);
        // Unlisted types default to the full set.
        assert_eq!(back.get(QuestionType::Logical), OpSet::full());
    }
}
