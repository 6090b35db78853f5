//! Evaluation metrics: QA scores, search success, spurious-form detection via
//! counterfactual knowledge bases, predictor coverage, and report rendering.
//!
//! Spuriousness is decided without human inspection: a found form is correct
//! iff it agrees with the hidden gold form on every one of `num_perturbations`
//! randomly rewired copies of the knowledge base. A form that merely
//! coincides with the answer on the real KB disagrees somewhere among the
//! counterfactuals; an equivalent form never does. Counting is per *form*,
//! not per question, since one question may carry several found forms.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::QuestionType;
use crate::datagen::QuestionRecord;
use crate::executor::{self, answers_equal, Answer};
use crate::grammar::OpSet;
use crate::kb::KnowledgeBase;
use crate::search::SearchResult;

/// Writes `bytes` to `path` through a temp file in the same directory plus an
/// atomic rename, so readers never observe a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name")
    })?;
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut body = serde_json::to_vec_pretty(value)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    body.push(b'\n');
    write_atomic(path, &body)
}

#[derive(Error, Debug)]
pub enum MetricsError {
    #[error("question {0} has no gold logical form")]
    NoGold(String),
    #[error("oracle needs at least one perturbation")]
    NoPerturbations,
    #[error("logical form `{lf}` failed to execute: {source}")]
    BadForm {
        lf: String,
        #[source]
        source: executor::ExecError,
    },
}

// ---------------------------------------------------------------------------
// QA metrics
// ---------------------------------------------------------------------------

/// Macro-averaged scores over one group of questions.
///
/// Entity-set questions contribute to `precision`/`recall`/`f1`; boolean and
/// numeric questions contribute to exact-match `accuracy`. A group with no
/// questions of a kind reports 0.0 there; check the counts to distinguish
/// "no such questions" from "all wrong".
#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct QaSlice {
    pub count: usize,
    pub set_count: usize,
    pub exact_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub missing: usize,
}

#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct QaReport {
    pub overall: QaSlice,
    pub per_type: BTreeMap<QuestionType, QaSlice>,
    /// Questions that had no prediction; scored as zero.
    pub missing_qids: Vec<String>,
}

struct QaAccum {
    count: usize,
    set_count: usize,
    exact_count: usize,
    p_sum: f64,
    r_sum: f64,
    acc_sum: f64,
    missing: usize,
}

impl QaAccum {
    fn new() -> QaAccum {
        QaAccum { count: 0, set_count: 0, exact_count: 0, p_sum: 0.0, r_sum: 0.0, acc_sum: 0.0, missing: 0 }
    }

    fn add(&mut self, gold: &Answer, pred: Option<&Answer>) {
        self.count += 1;
        if pred.is_none() {
            self.missing += 1;
        }
        match gold {
            Answer::Entities(g) => {
                self.set_count += 1;
                let empty = Answer::empty_set();
                let p = match pred.unwrap_or(&empty) {
                    Answer::Entities(p) => p.clone(),
                    // A non-set prediction for a set question scores zero.
                    _ => Default::default(),
                };
                let inter = p.intersection(g).count() as f64;
                let precision = if p.is_empty() {
                    if g.is_empty() { 1.0 } else { 0.0 }
                } else {
                    inter / p.len() as f64
                };
                let recall = if g.is_empty() {
                    if p.is_empty() { 1.0 } else { 0.0 }
                } else {
                    inter / g.len() as f64
                };
                self.p_sum += precision;
                self.r_sum += recall;
            }
            other => {
                self.exact_count += 1;
                if pred.is_some_and(|p| answers_equal(p, other)) {
                    self.acc_sum += 1.0;
                }
            }
        }
    }

    fn slice(&self) -> QaSlice {
        let ratio = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
        let precision = ratio(self.p_sum, self.set_count);
        let recall = ratio(self.r_sum, self.set_count);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        QaSlice {
            count: self.count,
            set_count: self.set_count,
            exact_count: self.exact_count,
            precision,
            recall,
            f1,
            accuracy: ratio(self.acc_sum, self.exact_count),
            missing: self.missing,
        }
    }
}

/// Scores predicted answers against gold answers, macro-averaged per type and
/// overall. Questions absent from `preds` are flagged and scored zero.
pub fn qa_metrics(preds: &BTreeMap<String, Answer>, gold: &[QuestionRecord]) -> QaReport {
    let mut overall = QaAccum::new();
    let mut per_type: BTreeMap<QuestionType, QaAccum> = BTreeMap::new();
    let mut missing_qids = Vec::new();
    for rec in gold {
        let pred = preds.get(&rec.qid);
        if pred.is_none() {
            missing_qids.push(rec.qid.clone());
        }
        overall.add(&rec.gold_answer, pred);
        per_type.entry(rec.qtype).or_insert_with(QaAccum::new).add(&rec.gold_answer, pred);
    }
    QaReport {
        overall: overall.slice(),
        per_type: per_type.iter().map(|(t, a)| (*t, a.slice())).collect(),
        missing_qids,
    }
}

// ---------------------------------------------------------------------------
// Search statistics
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct SearchSlice {
    pub count: usize,
    pub succeeded: usize,
    pub success_ratio: f64,
    pub mean_explored: f64,
    pub mean_elapsed_ms: f64,
    pub mean_found: f64,
}

#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct SearchReport {
    pub overall: SearchSlice,
    pub per_type: BTreeMap<QuestionType, SearchSlice>,
}

struct SearchAccum {
    count: usize,
    succeeded: usize,
    explored: usize,
    elapsed_ms: u128,
    found: usize,
}

impl SearchAccum {
    fn new() -> SearchAccum {
        SearchAccum { count: 0, succeeded: 0, explored: 0, elapsed_ms: 0, found: 0 }
    }

    fn add(&mut self, r: &SearchResult) {
        self.count += 1;
        if r.success() {
            self.succeeded += 1;
        }
        self.explored += r.explored;
        self.elapsed_ms += r.elapsed.as_millis();
        self.found += r.found.len();
    }

    fn slice(&self) -> SearchSlice {
        let n = self.count.max(1) as f64;
        SearchSlice {
            count: self.count,
            succeeded: self.succeeded,
            success_ratio: if self.count == 0 { 0.0 } else { self.succeeded as f64 / n },
            mean_explored: self.explored as f64 / n,
            mean_elapsed_ms: self.elapsed_ms as f64 / n,
            mean_found: self.found as f64 / n,
        }
    }
}

/// Success ratio and throughput per question type and overall. Results whose
/// qid is not in `questions` are counted only in the overall slice.
pub fn search_stats(results: &[SearchResult], questions: &[QuestionRecord]) -> SearchReport {
    let types: BTreeMap<&str, QuestionType> =
        questions.iter().map(|q| (q.qid.as_str(), q.qtype)).collect();
    let mut overall = SearchAccum::new();
    let mut per_type: BTreeMap<QuestionType, SearchAccum> = BTreeMap::new();
    for r in results {
        overall.add(r);
        if let Some(t) = types.get(r.qid.as_str()) {
            per_type.entry(*t).or_insert_with(SearchAccum::new).add(r);
        }
    }
    SearchReport {
        overall: overall.slice(),
        per_type: per_type.iter().map(|(t, a)| (*t, a.slice())).collect(),
    }
}

/// Overall fraction of questions with at least one found form.
pub fn success_ratio(results: &[SearchResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.success()).count() as f64 / results.len() as f64
}

// ---------------------------------------------------------------------------
// Spurious-form oracle
// ---------------------------------------------------------------------------

/// Counterfactual oracle settings.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub num_perturbations: usize,
    pub rate: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> OracleConfig {
        OracleConfig { num_perturbations: 20, rate: 0.2, seed: 11 }
    }
}

#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct SpuriousSlice {
    pub correct_forms: usize,
    pub spurious_forms: usize,
    pub questions_with_spurious: usize,
    pub questions_with_forms: usize,
}

impl SpuriousSlice {
    /// Spurious forms over all found forms.
    pub fn ratio(&self) -> f64 {
        let total = self.correct_forms + self.spurious_forms;
        if total == 0 {
            0.0
        } else {
            self.spurious_forms as f64 / total as f64
        }
    }
}

#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct SpuriousReport {
    pub overall: SpuriousSlice,
    pub per_type: BTreeMap<QuestionType, SpuriousSlice>,
}

impl SpuriousReport {
    pub fn ratio(&self) -> f64 {
        self.overall.ratio()
    }
}

/// Judges every found form per question against the gold form on
/// `num_perturbations` seeded counterfactual KBs. A form that disagrees with
/// the gold on any counterfactual is spurious.
pub fn spurious_report(
    results: &[SearchResult],
    questions: &[QuestionRecord],
    kb: &KnowledgeBase,
    cfg: &OracleConfig,
) -> Result<SpuriousReport, MetricsError> {
    if cfg.num_perturbations == 0 {
        return Err(MetricsError::NoPerturbations);
    }
    let by_qid: BTreeMap<&str, &QuestionRecord> =
        questions.iter().map(|q| (q.qid.as_str(), q)).collect();

    struct Row<'a> {
        qtype: QuestionType,
        gold: &'a crate::grammar::LogicalForm,
        forms: &'a [crate::grammar::LogicalForm],
        agrees: Vec<bool>,
    }
    let mut rows: Vec<Row> = Vec::new();
    for r in results {
        if r.found.is_empty() {
            continue;
        }
        let rec = match by_qid.get(r.qid.as_str()) {
            Some(rec) => *rec,
            None => return Err(MetricsError::NoGold(r.qid.clone())),
        };
        let gold = rec.gold_lf.as_ref().ok_or_else(|| MetricsError::NoGold(r.qid.clone()))?;
        rows.push(Row { qtype: rec.qtype, gold, forms: &r.found, agrees: vec![true; r.found.len()] });
    }

    // One counterfactual KB in memory at a time; a form stays correct only
    // while it agrees with the gold on every counterfactual so far.
    for i in 0..cfg.num_perturbations {
        let kbp = kb.perturb(cfg.seed.wrapping_add(i as u64), cfg.rate);
        for row in rows.iter_mut() {
            if row.agrees.iter().all(|a| !a) {
                continue;
            }
            let want = executor::evaluate(row.gold, &kbp).map_err(|e| MetricsError::BadForm {
                lf: row.gold.to_string(),
                source: e,
            })?;
            for (lf, agree) in row.forms.iter().zip(row.agrees.iter_mut()) {
                if *agree {
                    *agree = executor::evaluate(lf, &kbp)
                        .is_ok_and(|got| answers_equal(&got, &want));
                }
            }
        }
    }

    let mut overall = SpuriousSlice::default();
    let mut per_type: BTreeMap<QuestionType, SpuriousSlice> = BTreeMap::new();
    for row in &rows {
        let slice = per_type.entry(row.qtype).or_default();
        let spurious = row.agrees.iter().filter(|a| !**a).count();
        let correct = row.agrees.len() - spurious;
        slice.correct_forms += correct;
        slice.spurious_forms += spurious;
        overall.correct_forms += correct;
        overall.spurious_forms += spurious;
        slice.questions_with_forms += 1;
        overall.questions_with_forms += 1;
        if spurious > 0 {
            slice.questions_with_spurious += 1;
            overall.questions_with_spurious += 1;
        }
    }
    Ok(SpuriousReport { overall, per_type })
}

/// Overall spurious-form fraction; see [`spurious_report`].
pub fn spurious_ratio(
    results: &[SearchResult],
    questions: &[QuestionRecord],
    kb: &KnowledgeBase,
    cfg: &OracleConfig,
) -> Result<f64, MetricsError> {
    Ok(spurious_report(results, questions, kb, cfg)?.ratio())
}

// ---------------------------------------------------------------------------
// Operator-predictor metrics
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct PredictorReport {
    /// Questions in the evaluation set (naive search succeeded).
    pub count: usize,
    /// Questions where some found form uses only predicted ∪ forced operators.
    pub covered: usize,
    pub question_coverage: f64,
    /// Mean predicted-set size over the 18 operators.
    pub remaining_pct: f64,
    pub per_type: BTreeMap<QuestionType, (usize, usize)>,
}

/// Coverage and remaining-percentage of operator predictions, evaluated on
/// questions where `results` found at least one valid form.
pub fn predictor_metrics(
    predicted: &BTreeMap<String, OpSet>,
    results: &[SearchResult],
    questions: &[QuestionRecord],
    forced: OpSet,
) -> PredictorReport {
    let types: BTreeMap<&str, QuestionType> =
        questions.iter().map(|q| (q.qid.as_str(), q.qtype)).collect();
    let mut report = PredictorReport::default();
    let mut size_sum = 0usize;
    for r in results {
        if r.found.is_empty() {
            continue;
        }
        let ops = predicted.get(&r.qid).copied().unwrap_or_else(OpSet::empty);
        report.count += 1;
        size_sum += ops.len();
        let allowed = ops.union(forced);
        let covered = r.found.iter().any(|lf| lf.operators().is_subset(allowed));
        if covered {
            report.covered += 1;
        }
        if let Some(t) = types.get(r.qid.as_str()) {
            let entry = report.per_type.entry(*t).or_insert((0, 0));
            entry.0 += 1;
            if covered {
                entry.1 += 1;
            }
        }
    }
    if report.count > 0 {
        report.question_coverage = report.covered as f64 / report.count as f64;
        report.remaining_pct = size_sum as f64 / (report.count * crate::grammar::Op::ALL.len()) as f64;
    }
    report
}

// ---------------------------------------------------------------------------
// Composite report rendering
// ---------------------------------------------------------------------------

/// Everything the pipeline knows how to measure, rendered together.
#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qa: Option<QaReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive_search: Option<SearchReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constrained_search: Option<SearchReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spurious_naive: Option<SpuriousReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spurious_constrained: Option<SpuriousReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor: Option<PredictorReport>,
}

fn pct(x: f64) -> String {
    format!("{:6.2}", 100.0 * x)
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plain-text tables, one block per populated section. All figures are
    /// percentages except counts and explored/elapsed means.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(qa) = &self.qa {
            out.push_str("QA metrics (macro-averaged, % | set questions: P/R/F1, others: accuracy)\n");
            out.push_str(&format!(
                "{:<20} {:>5} {:>7} {:>7} {:>7} {:>7}\n",
                "type", "n", "prec", "rec", "f1", "acc"
            ));
            for (t, s) in qa.per_type.iter().map(|(t, s)| (t.as_str(), s)).chain(
                std::iter::once(("overall", &qa.overall)),
            ) {
                out.push_str(&format!(
                    "{:<20} {:>5} {:>7} {:>7} {:>7} {:>7}\n",
                    t,
                    s.count,
                    pct(s.precision),
                    pct(s.recall),
                    pct(s.f1),
                    pct(s.accuracy)
                ));
            }
            if !qa.missing_qids.is_empty() {
                out.push_str(&format!("missing predictions: {}\n", qa.missing_qids.len()));
            }
            out.push('\n');
        }
        for (name, rep) in [
            ("naive search", &self.naive_search),
            ("constrained search", &self.constrained_search),
        ] {
            if let Some(rep) = rep {
                out.push_str(&format!(
                    "{name} (success %, mean explored, mean found)\n{:<20} {:>5} {:>9} {:>12} {:>10}\n",
                    "type", "n", "success", "explored", "found"
                ));
                for (t, s) in rep.per_type.iter().map(|(t, s)| (t.as_str(), s)).chain(
                    std::iter::once(("overall", &rep.overall)),
                ) {
                    out.push_str(&format!(
                        "{:<20} {:>5} {:>9} {:>12.1} {:>10.2}\n",
                        t,
                        s.count,
                        pct(s.success_ratio),
                        s.mean_explored,
                        s.mean_found
                    ));
                }
                out.push('\n');
            }
        }
        for (name, rep) in [
            ("spurious forms, naive", &self.spurious_naive),
            ("spurious forms, constrained", &self.spurious_constrained),
        ] {
            if let Some(rep) = rep {
                out.push_str(&format!(
                    "{name} (per found form)\n{:<20} {:>9} {:>9} {:>9}\n",
                    "type", "correct", "spurious", "ratio%"
                ));
                for (t, s) in rep.per_type.iter().map(|(t, s)| (t.as_str(), s)).chain(
                    std::iter::once(("overall", &rep.overall)),
                ) {
                    out.push_str(&format!(
                        "{:<20} {:>9} {:>9} {:>9}\n",
                        t,
                        s.correct_forms,
                        s.spurious_forms,
                        pct(s.ratio())
                    ));
                }
                out.push('\n');
            }
        }
        if let Some(p) = &self.predictor {
            out.push_str("operator predictor\n");
            out.push_str(&format!(
                "evaluated {} questions, coverage {}%, remaining {}%\n\n",
                p.count,
                pct(p.question_coverage).trim(),
                pct(p.remaining_pct).trim()
            ));
        }
        out
    }
}

/// CSV of per-type success ratios for naive vs constrained search.
pub fn success_csv(naive: &SearchReport, constrained: &SearchReport) -> String {
    let mut out = String::from("type,naive_success,constrained_success\n");
    for t in QuestionType::ALL {
        let n = naive.per_type.get(&t).map_or(0.0, |s| s.success_ratio);
        let c = constrained.per_type.get(&t).map_or(0.0, |s| s.success_ratio);
        out.push_str(&format!("{},{n:.4},{c:.4}\n", t.as_str()));
    }
    out.push_str(&format!(
        "overall,{:.4},{:.4}\n",
        naive.overall.success_ratio, constrained.overall.success_ratio
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{LfNode, LogicalForm, Op};
    use crate::kb::{EntityRecord, Triple};
    use crate::search::SearchResult;
    use std::time::Duration;

    fn rec(qid: &str, qtype: QuestionType, gold: Answer) -> QuestionRecord {
        QuestionRecord {
            qid: qid.into(),
            tokens: vec!["q".into()],
            qtype,
            pool: Default::default(),
            gold_answer: gold,
            gold_lf: None,
        }
    }

    fn set(ids: &[&str]) -> Answer {
        Answer::entities(ids.iter().copied())
    }

    #[test]
    fn write_atomic_replaces_previous_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("x.txt");
        write_atomic(&path, b"one").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"one");
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
    }

    #[test]
    fn qa_scores_follow_set_conventions() {
        let gold = vec![
            rec("q1", QuestionType::SimpleDirect, set(&["a", "c"])),
            rec("q2", QuestionType::SimpleDirect, set(&["a"])),
            rec("q3", QuestionType::Verification, Answer::Boolean(false)),
            rec("q4", QuestionType::QuantitativeCount, Answer::Number(3)),
            rec("q5", QuestionType::SimpleDirect, set(&["z"])),
        ];
        let mut preds = BTreeMap::new();
        preds.insert("q1".to_string(), set(&["a", "b"])); // P=0.5 R=0.5
        preds.insert("q2".to_string(), set(&["a"])); // 1/1
        preds.insert("q3".to_string(), Answer::Boolean(true)); // wrong
        preds.insert("q4".to_string(), Answer::Number(3)); // right
        preds.insert("q5".to_string(), Answer::empty_set()); // P=0 R=0
        let report = qa_metrics(&preds, &gold);
        let sd = &report.per_type[&QuestionType::SimpleDirect];
        assert!((sd.precision - 0.5).abs() < 1e-9);
        assert!((sd.recall - 0.5).abs() < 1e-9);
        assert!((report.overall.accuracy - 0.5).abs() < 1e-9);
        assert_eq!(report.overall.set_count, 3);
        assert_eq!(report.overall.exact_count, 2);
        assert!(report.missing_qids.is_empty());
    }

    #[test]
    fn missing_predictions_are_flagged_and_zero() {
        let gold = vec![
            rec("q1", QuestionType::SimpleDirect, set(&["a"])),
            rec("q2", QuestionType::Verification, Answer::Boolean(true)),
        ];
        let report = qa_metrics(&BTreeMap::new(), &gold);
        assert_eq!(report.missing_qids, vec!["q1", "q2"]);
        assert_eq!(report.overall.missing, 2);
        assert_eq!(report.overall.precision, 0.0);
        assert_eq!(report.overall.accuracy, 0.0);
        // Both empty is a correct empty answer.
        let gold = vec![rec("q1", QuestionType::SimpleDirect, Answer::empty_set())];
        let preds = BTreeMap::from([("q1".to_string(), Answer::empty_set())]);
        let report = qa_metrics(&preds, &gold);
        assert_eq!(report.overall.precision, 1.0);
        assert_eq!(report.overall.recall, 1.0);
    }

    #[test]
    fn qa_is_order_invariant() {
        let mut gold = vec![
            rec("q1", QuestionType::SimpleDirect, set(&["a", "b"])),
            rec("q2", QuestionType::Logical, set(&["c"])),
            rec("q3", QuestionType::Verification, Answer::Boolean(true)),
        ];
        let preds = BTreeMap::from([
            ("q1".to_string(), set(&["a"])),
            ("q2".to_string(), set(&["c", "d"])),
            ("q3".to_string(), Answer::Boolean(true)),
        ]);
        let fwd = qa_metrics(&preds, &gold);
        gold.reverse();
        let mut rev = qa_metrics(&preds, &gold);
        rev.missing_qids.sort();
        assert_eq!(fwd, rev);
    }

    fn result(qid: &str, found: &[&str], explored: usize) -> SearchResult {
        SearchResult {
            qid: qid.into(),
            found: found.iter().map(|s| s.parse::<LogicalForm>().unwrap()).collect(),
            explored,
            elapsed: Duration::from_millis(0),
            exhausted: false,
            first_found_at: if found.is_empty() { None } else { Some(explored.min(1)) },
        }
    }

    #[test]
    fn success_ratio_counts_nonempty_found_lists() {
        let results = vec![
            result("q1", &["A1 A15 A16:e1"], 5),
            result("q2", &[], 10),
            result("q3", &["A1 A15 A16:e1"], 5),
            result("q4", &["A1 A15 A16:e1"], 5),
        ];
        assert!((success_ratio(&results) - 0.75).abs() < 1e-9);
        assert_eq!(success_ratio(&[result("q1", &[], 3)]), 0.0);
        let questions = vec![
            rec("q1", QuestionType::SimpleDirect, set(&["a"])),
            rec("q2", QuestionType::Logical, set(&["a"])),
            rec("q3", QuestionType::Logical, set(&["a"])),
            rec("q4", QuestionType::SimpleDirect, set(&["a"])),
        ];
        let report = search_stats(&results, &questions);
        assert_eq!(report.overall.count, 4);
        assert_eq!(report.overall.succeeded, 3);
        assert!((report.per_type[&QuestionType::Logical].success_ratio - 0.5).abs() < 1e-9);
        assert!((report.overall.mean_explored - 6.25).abs() < 1e-9);
    }

    /// KB where a and b have identical images under P1, so Find(Set(a), P1)
    /// coincides with the union gold on the real KB but not counterfactually.
    fn ambiguous_kb() -> KnowledgeBase {
        let entities = vec![
            EntityRecord { id: "a".into(), type_label: "person".into(), mentions: vec!["a".into()] },
            EntityRecord { id: "b".into(), type_label: "person".into(), mentions: vec!["b".into()] },
            EntityRecord { id: "o1".into(), type_label: "city".into(), mentions: vec!["o1".into()] },
            EntityRecord { id: "o2".into(), type_label: "city".into(), mentions: vec!["o2".into()] },
            EntityRecord { id: "o3".into(), type_label: "city".into(), mentions: vec!["o3".into()] },
            EntityRecord { id: "o4".into(), type_label: "city".into(), mentions: vec!["o4".into()] },
            EntityRecord { id: "o5".into(), type_label: "city".into(), mentions: vec!["o5".into()] },
        ];
        let predicates = vec![("P1".into(), "born in".to_string())];
        let triples = vec![
            Triple::new("a", "P1", "o1"),
            Triple::new("a", "P1", "o2"),
            Triple::new("b", "P1", "o1"),
            Triple::new("b", "P1", "o2"),
        ];
        KnowledgeBase::from_parts(entities, predicates, triples).unwrap()
    }

    fn union_gold() -> LogicalForm {
        let find = |e: &str| {
            LfNode::new(
                Op::Find,
                vec![LfNode::singleton(crate::kb::EntityId::from(e)), LfNode::predicate("P1")],
            )
        };
        LogicalForm { root: LfNode::new(Op::StartSet, vec![LfNode::new(Op::Union, vec![find("a"), find("b")])]) }
    }

    #[test]
    fn oracle_separates_equivalent_from_coincidental_forms() {
        let kb = ambiguous_kb();
        let gold = union_gold();
        let single: LogicalForm = "A1 A4 A15 A16:a A17:P1".parse().unwrap();
        // Both execute to the same answer on the real KB.
        assert!(answers_equal(
            &executor::evaluate(&gold, &kb).unwrap(),
            &executor::evaluate(&single, &kb).unwrap()
        ));
        let mut question = rec("q1", QuestionType::Logical, executor::evaluate(&gold, &kb).unwrap());
        question.gold_lf = Some(gold.clone());
        let results = vec![SearchResult {
            qid: "q1".into(),
            found: vec![gold.clone(), single],
            explored: 10,
            elapsed: Duration::ZERO,
            exhausted: false,
            first_found_at: Some(1),
        }];
        let cfg = OracleConfig { num_perturbations: 20, rate: 0.2, seed: 3 };
        let report = spurious_report(&results, &[question.clone()], &kb, &cfg).unwrap();
        assert_eq!(report.overall.correct_forms, 1, "the gold itself is never spurious");
        assert_eq!(report.overall.spurious_forms, 1, "the single-entity form must break");
        assert_eq!(report.overall.questions_with_spurious, 1);
        assert!((report.ratio() - 0.5).abs() < 1e-9);

        // Strictness is monotone: correct under k+m implies correct under k
        // when the perturbation seeds are a prefix of the same sequence.
        for k in 1..20 {
            let small = spurious_report(
                &results,
                &[question.clone()],
                &kb,
                &OracleConfig { num_perturbations: k, ..cfg },
            )
            .unwrap();
            assert!(small.overall.spurious_forms <= report.overall.spurious_forms);
        }
        assert!(matches!(
            spurious_report(&results, &[question], &kb, &OracleConfig { num_perturbations: 0, ..cfg }),
            Err(MetricsError::NoPerturbations)
        ));
    }

    #[test]
    fn predictor_metrics_match_definitions() {
        let questions = vec![
            rec("q1", QuestionType::SimpleDirect, set(&["a"])),
            rec("q2", QuestionType::SimpleDirect, set(&["a"])),
            rec("q3", QuestionType::SimpleDirect, set(&["a"])),
        ];
        let results = vec![
            result("q1", &["A1 A4 A15 A16:a A17:P1"], 4),
            result("q2", &["A1 A4 A15 A16:a A17:P1"], 4),
            result("q3", &[], 9),
        ];
        let forced: OpSet = [Op::SetOf, Op::EntityConst, Op::PredicateConst]
            .into_iter()
            .collect();
        let mut predicted = BTreeMap::new();
        predicted.insert("q1".to_string(), [Op::StartSet, Op::Find].into_iter().collect::<OpSet>());
        predicted.insert("q2".to_string(), [Op::StartSet].into_iter().collect::<OpSet>());
        let report = predictor_metrics(&predicted, &results, &questions, forced);
        assert_eq!(report.count, 2, "only naive successes are evaluated");
        assert_eq!(report.covered, 1, "q2 misses Find");
        assert!((report.question_coverage - 0.5).abs() < 1e-9);
        assert!((report.remaining_pct - (2.0 + 1.0) / (2.0 * 18.0)).abs() < 1e-9);

        let all = OpSet::full();
        let predicted: BTreeMap<String, OpSet> =
            [("q1".to_string(), all), ("q2".to_string(), all)].into();
        let report = predictor_metrics(&predicted, &results, &questions, OpSet::empty());
        assert!((report.question_coverage - 1.0).abs() < 1e-9);
        assert!((report.remaining_pct - 1.0).abs() < 1e-9);
    }

    #[test]
    fn report_renders_all_sections() {
        let questions = vec![rec("q1", QuestionType::SimpleDirect, set(&["a"]))];
        let results = vec![result("q1", &["A1 A15 A16:a"], 2)];
        let report = MetricsReport {
            qa: Some(qa_metrics(
                &BTreeMap::from([("q1".to_string(), set(&["a"]))]),
                &questions,
            )),
            naive_search: Some(search_stats(&results, &questions)),
            constrained_search: Some(search_stats(&results, &questions)),
            ..Default::default()
        };
        let text = report.to_text();
        assert!(text.contains("QA metrics"));
        assert!(text.contains("overall"));
        assert!(text.contains("simple-direct"));
        let json: MetricsReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json, report);
        let csv = success_csv(
            report.naive_search.as_ref().unwrap(),
            report.constrained_search.as_ref().unwrap(),
        );
        assert!(csv.starts_with("type,naive_success"));
        assert!(csv.contains("overall,1.0000,1.0000"));
    }
}
