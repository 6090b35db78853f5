//! Budgeted enumeration of logical forms.
//!
//! Candidates are built bottom-up: a dynamic-programming table keeps every
//! well-typed subtree per (category, serialized size), and complete forms are
//! streamed in size-ascending order with each subtree's denotation computed
//! exactly once and shared. The weak-supervision entry points
//! ([`naive_search`], [`constrained_search`]) keep the forms whose denotation
//! equals the labelled answer.
//!
//! Candidate order is deterministic: size ascending, then operator alias
//! order, then argument-size splits in lexicographic order, then table order
//! of the children (which bottoms out in pool order for constants).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::datagen::QuestionRecord;
use crate::executor::Answer;
use crate::grammar::{Category, ConstantRef, LfNode, LogicalForm, Op, OpSet};
use crate::kb::{EntityId, KnowledgeBase, PredicateId};

/// Constants a search may instantiate for one question. Order is rank: the
/// linker puts likelier entities and predicates first, and the enumerator and
/// the parser both respect that order.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct ConstantPool {
    pub entities: Vec<EntityId>,
    pub predicates: Vec<PredicateId>,
    pub numbers: Vec<u64>,
}

impl ConstantPool {
    pub fn new(
        entities: Vec<EntityId>,
        predicates: Vec<PredicateId>,
        numbers: Vec<u64>,
    ) -> ConstantPool {
        ConstantPool { entities, predicates, numbers }
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.predicates.is_empty() && self.numbers.is_empty()
    }
}

mod duration_ms {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Limits for one enumeration run.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Maximum node count on any root-to-leaf path.
    pub max_depth: usize,
    /// Budget: number of complete candidates executed before giving up.
    pub max_candidates: usize,
    /// Operators the enumerator may use; gold-driven entry points may widen
    /// this (see [`forced_ops`]).
    pub allowed_ops: OpSet,
    /// Wall-clock cutoff per question.
    #[serde(rename = "timeout_ms", with = "duration_ms")]
    pub timeout: Duration,
    /// Drop candidates that duplicate an already-found form modulo
    /// commutative argument order.
    pub dedupe: bool,
    /// Stop after this many matching forms; keeps flood questions (many
    /// trivially valid candidates) from drowning everything else.
    pub max_forms: usize,
}

impl Default for SearchConfig {
    fn default() -> SearchConfig {
        SearchConfig {
            max_depth: 8,
            max_candidates: 50_000,
            allowed_ops: OpSet::full(),
            timeout: Duration::from_secs(5),
            dedupe: true,
            max_forms: 20,
        }
    }
}

/// Outcome of one question's search.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SearchResult {
    pub qid: String,
    /// Forms whose denotation equals the gold answer, in discovery order.
    pub found: Vec<LogicalForm>,
    /// Complete candidates executed.
    pub explored: usize,
    pub elapsed: Duration,
    /// True when the whole space fit inside the budget.
    pub exhausted: bool,
    /// Value of `explored` when the first form was found.
    pub first_found_at: Option<usize>,
}

impl SearchResult {
    pub fn success(&self) -> bool {
        !self.found.is_empty()
    }

    /// Serializable view. `elapsed_ms` is pinned to zero so that artifacts
    /// from identical seeds are byte-identical; real timings go to logs.
    pub fn to_record(&self) -> SearchRecord {
        SearchRecord {
            qid: self.qid.clone(),
            found: self.found.iter().map(|f| f.to_string()).collect(),
            explored: self.explored,
            elapsed_ms: 0,
            exhausted: self.exhausted,
            first_found_at: self.first_found_at,
            cleaned: false,
        }
    }

    pub fn from_record(rec: &SearchRecord) -> Result<SearchResult, crate::grammar::GrammarError> {
        let mut found = Vec::with_capacity(rec.found.len());
        for f in &rec.found {
            found.push(f.parse()?);
        }
        Ok(SearchResult {
            qid: rec.qid.clone(),
            found,
            explored: rec.explored,
            elapsed: Duration::from_millis(rec.elapsed_ms),
            exhausted: rec.exhausted,
            first_found_at: rec.first_found_at,
        })
    }
}

/// JSONL row for persisted search results.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SearchRecord {
    pub qid: String,
    pub found: Vec<String>,
    pub explored: usize,
    pub elapsed_ms: u64,
    pub exhausted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_found_at: Option<usize>,
    /// Set once the curation pass has filtered this row.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cleaned: bool,
}

/// Operators every constrained search keeps regardless of the predictor: the
/// start producer matching the answer plus the constant machinery. Without
/// them no prediction error could ever be recovered from.
pub fn forced_ops(gold: &Answer) -> OpSet {
    [gold.root_op(), Op::SetOf, Op::EntityConst, Op::PredicateConst, Op::NumberConst]
        .into_iter()
        .collect()
}

/// Unrestricted search over `config.allowed_ops` (all 18 by default).
pub fn naive_search(q: &QuestionRecord, kb: &KnowledgeBase, config: &SearchConfig) -> SearchResult {
    search_with_ops(q, kb, config.allowed_ops, config)
}

/// Search restricted to `ops` plus [`forced_ops`] for the gold answer.
pub fn constrained_search(
    q: &QuestionRecord,
    kb: &KnowledgeBase,
    ops: OpSet,
    config: &SearchConfig,
) -> SearchResult {
    search_with_ops(q, kb, ops.union(forced_ops(&q.gold_answer)), config)
}

/// Search with exactly `allowed` and no forced widening. Curation ablations
/// use this so that removing an operator genuinely removes it.
pub fn search_with_ops(
    q: &QuestionRecord,
    kb: &KnowledgeBase,
    allowed: OpSet,
    config: &SearchConfig,
) -> SearchResult {
    let started = Instant::now();
    let mut engine = Engine::new(Some(kb), &q.pool, allowed, config);
    let root = q.gold_answer.root_op();
    let mut out = SearchResult {
        qid: q.qid.clone(),
        found: Vec::new(),
        explored: 0,
        elapsed: Duration::ZERO,
        exhausted: false,
        first_found_at: None,
    };
    if !allowed.contains(root) {
        out.exhausted = true;
        return out;
    }
    let gold = engine.dense_answer(&q.gold_answer);
    let mut seen = BTreeSet::new();
    engine.run(&[root], started, |cand, explored, found_count| {
        if !cand.value_matches(&gold) {
            return Emit::Skip;
        }
        let lf = cand.to_form();
        if config.dedupe {
            let key = canonicalize(&lf).to_string();
            if !seen.insert(key) {
                return Emit::Skip;
            }
        }
        if out.first_found_at.is_none() {
            out.first_found_at = Some(explored);
        }
        out.found.push(lf);
        if found_count + 1 >= config.max_forms {
            Emit::KeepAndStop
        } else {
            Emit::Keep
        }
    });
    out.explored = engine.explored;
    out.exhausted = engine.exhausted;
    out.elapsed = started.elapsed();
    out
}

/// Enumerates every well-typed form over the pool within the limits, with no
/// knowledge base and no answer filter. Commutative-duplicate forms are all
/// kept: `A7(a,b)` and `A7(b,a)` are distinct trees.
pub fn enumerate(pool: &ConstantPool, config: &SearchConfig) -> Vec<LogicalForm> {
    let started = Instant::now();
    let mut engine = Engine::new(None, pool, config.allowed_ops, config);
    let roots: Vec<Op> = [Op::StartSet, Op::StartNum, Op::StartBool]
        .into_iter()
        .filter(|op| config.allowed_ops.contains(*op))
        .collect();
    let mut forms = Vec::new();
    engine.run(&roots, started, |cand, _, _| {
        forms.push(cand.to_form());
        Emit::Keep
    });
    forms
}

/// Normal form with commutative arguments (`Union`, `Inter`) sorted, so that
/// equivalent argument orders compare equal.
pub fn canonicalize(lf: &LogicalForm) -> LogicalForm {
    fn node_text(n: &LfNode) -> String {
        let mut s = n.op.alias().to_string();
        if let Some(c) = &n.constant {
            s.push(':');
            s.push_str(&c.to_string());
        }
        for ch in &n.children {
            s.push(' ');
            s.push_str(&node_text(ch));
        }
        s
    }
    fn walk(n: &LfNode) -> LfNode {
        let mut children: Vec<LfNode> = n.children.iter().map(walk).collect();
        if matches!(n.op, Op::Union | Op::Inter) {
            children.sort_by(|a, b| node_text(a).cmp(&node_text(b)));
        }
        LfNode { op: n.op, constant: n.constant.clone(), children }
    }
    LogicalForm::new(walk(&lf.root))
}

// ---------------------------------------------------------------------------
// Enumeration engine
// ---------------------------------------------------------------------------

/// Denotation of a subtree, shared across every candidate embedding it.
///
/// Entities are interned to dense `u32` ids for the lifetime of one engine
/// (see [`DenseKb`]); sets are ascending id vectors. At full KB scale a
/// single class set has thousands of members and the table holds tens of
/// thousands of set fragments, so the compact representation is what keeps a
/// search inside a few dozen megabytes.
#[derive(Clone, PartialEq, Eq, Debug)]
enum Value {
    Set(Rc<Vec<u32>>),
    Num(u64),
    Bool(bool),
    Ent(u32),
    /// Position of the predicate in the question pool.
    Pred(u16),
    /// Constant not present in the knowledge base; poisons every ancestor.
    Invalid,
    /// Enumeration without a knowledge base.
    Unvalued,
}

/// Gold answer translated into the engine's dense value space.
enum DenseAnswer {
    Set(Vec<u32>),
    Num(u64),
    Bool(bool),
    /// Gold mentions an entity outside the KB; no candidate can match.
    Unreachable,
}

/// Per-engine entity interner plus adjacency restricted to the pool's
/// predicates. Built from one pass over the triples.
struct DenseKb {
    /// `adj[pool predicate position][subject id]` → ascending object ids.
    adj: Vec<HashMap<u32, Vec<u32>>>,
}

impl DenseKb {
    fn build(kb: &KnowledgeBase, pool: &ConstantPool, index: &HashMap<&str, u32>) -> DenseKb {
        let mut adj: Vec<HashMap<u32, Vec<u32>>> =
            vec![HashMap::new(); pool.predicates.len()];
        let pos: HashMap<&str, usize> =
            pool.predicates.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        for t in kb.triples() {
            if let Some(&pi) = pos.get(t.predicate.as_str()) {
                let (s, o) = (index[t.subject.as_str()], index[t.object.as_str()]);
                adj[pi].entry(s).or_default().push(o);
            }
        }
        for per_pred in &mut adj {
            for objects in per_pred.values_mut() {
                objects.sort_unstable();
                objects.dedup();
            }
        }
        DenseKb { adj }
    }

    fn objects(&self, pred: u16, subject: u32) -> &[u32] {
        self.adj[pred as usize].get(&subject).map_or(&[], |v| v.as_slice())
    }

    fn degree(&self, pred: u16, subject: u32) -> u64 {
        self.objects(pred, subject).len() as u64
    }
}

fn merge_union(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn merge_inter(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn merge_diff(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() {
        if j >= b.len() || a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else if a[i] > b[j] {
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    out
}

struct Node {
    op: Op,
    constant: Option<ConstantRef>,
    children: Vec<Rc<Node>>,
    depth: u8,
    value: Value,
}

impl Node {
    fn to_lf_node(&self) -> LfNode {
        LfNode {
            op: self.op,
            constant: self.constant.clone(),
            children: self.children.iter().map(|c| c.to_lf_node()).collect(),
        }
    }
}

/// A complete candidate handed to the emit callback.
struct Candidate<'a> {
    root: Op,
    child: &'a Rc<Node>,
}

impl Candidate<'_> {
    fn value_matches(&self, gold: &DenseAnswer) -> bool {
        match (&self.child.value, gold) {
            (Value::Set(s), DenseAnswer::Set(g)) => s.as_ref() == g,
            (Value::Num(n), DenseAnswer::Num(g)) => n == g,
            (Value::Bool(b), DenseAnswer::Bool(g)) => b == g,
            _ => false,
        }
    }

    fn to_form(&self) -> LogicalForm {
        LogicalForm::new(LfNode::new(self.root, vec![self.child.to_lf_node()]))
    }
}

enum Emit {
    Skip,
    Keep,
    KeepAndStop,
}

/// Consecutive sizes that may produce nothing before the space is declared
/// exhausted. Compositions can skip sizes (set sizes grow in steps of up to
/// three), so a single empty size proves nothing.
const EXHAUST_WINDOW: usize = 8;

/// Safety net on subtree size; never reached under realistic budgets.
const MAX_SIZE: usize = 60;

struct Engine<'a> {
    /// False in pure enumeration mode (no knowledge base).
    valued: bool,
    dense: Option<DenseKb>,
    /// Entity id → dense id, in sorted entity order.
    entity_ix: HashMap<&'a str, u32>,
    /// Whether each pool predicate exists in the KB.
    pred_known: Vec<bool>,
    allowed: OpSet,
    max_child_depth: usize,
    max_candidates: usize,
    timeout: Duration,
    /// `tables[cat][size]` holds every subtree of that category and size.
    tables: [Vec<Vec<Rc<Node>>>; 6],
    pool: &'a ConstantPool,
    explored: usize,
    exhausted: bool,
}

impl<'a> Engine<'a> {
    fn new(
        kb: Option<&'a KnowledgeBase>,
        pool: &'a ConstantPool,
        allowed: OpSet,
        config: &SearchConfig,
    ) -> Engine<'a> {
        let mut entity_ix: HashMap<&'a str, u32> = HashMap::new();
        let mut dense = None;
        let mut pred_known = Vec::new();
        if let Some(kb) = kb {
            entity_ix.reserve(kb.entity_count());
            for (i, e) in kb.entity_ids().enumerate() {
                entity_ix.insert(e.as_str(), i as u32);
            }
            dense = Some(DenseKb::build(kb, pool, &entity_ix));
            pred_known = pool.predicates.iter().map(|p| kb.has_predicate(p)).collect();
        }
        Engine {
            valued: kb.is_some(),
            dense,
            entity_ix,
            pred_known,
            allowed,
            max_child_depth: config.max_depth.saturating_sub(1),
            max_candidates: config.max_candidates,
            timeout: config.timeout,
            tables: Default::default(),
            pool,
            explored: 0,
            exhausted: false,
        }
    }

    /// Gold answer in dense form; must be computed before streaming starts.
    fn dense_answer(&self, gold: &Answer) -> DenseAnswer {
        match gold {
            Answer::Number(n) => DenseAnswer::Num(*n),
            Answer::Boolean(b) => DenseAnswer::Bool(*b),
            Answer::Entities(es) => {
                let mut ids = Vec::with_capacity(es.len());
                for e in es {
                    match self.entity_ix.get(e.as_str()) {
                        Some(i) => ids.push(*i),
                        None => return DenseAnswer::Unreachable,
                    }
                }
                ids.sort_unstable();
                DenseAnswer::Set(ids)
            }
        }
    }

    /// Streams complete candidates rooted at `roots` (alias order) to `emit`
    /// until the budget, the form cap, the timeout, or exhaustion stops it.
    fn run<F>(&mut self, roots: &[Op], started: Instant, mut emit: F)
    where
        F: FnMut(&Candidate, usize, usize) -> Emit,
    {
        for cat in 0..6 {
            self.tables[cat].push(Vec::new()); // size 0 is always empty
        }
        let mut found_count = 0usize;
        let mut empty_window = 0usize;
        for size in 1..=MAX_SIZE {
            let mut added = 0usize;
            // Build child-category tables for this size first and stream their
            // roots immediately, so the budget caps table work too. Remaining
            // categories are only needed from the next size on.
            let mut yield_cats: Vec<Category> = Vec::new();
            for root in roots {
                let cat = root.signature().args[0];
                if !yield_cats.contains(&cat) {
                    yield_cats.push(cat);
                }
            }
            for cat in yield_cats.iter() {
                added += self.build_size(*cat, size);
            }
            for root in roots {
                let cat = root.signature().args[0];
                // Cheap clone of the Rc handles so the table borrow does not
                // overlap the counters below.
                let table: Vec<Rc<Node>> = self.tables[cat.index()][size].clone();
                for child in &table {
                    self.explored += 1;
                    let cand = Candidate { root: *root, child };
                    match emit(&cand, self.explored, found_count) {
                        Emit::Skip => {}
                        Emit::Keep => found_count += 1,
                        Emit::KeepAndStop => return,
                    }
                    if self.explored >= self.max_candidates {
                        return;
                    }
                    if self.explored % 256 == 0 && started.elapsed() > self.timeout {
                        return;
                    }
                }
            }
            for cat in [Category::Set, Category::Num, Category::Bool, Category::Ent, Category::Pred]
            {
                if !yield_cats.contains(&cat) {
                    added += self.build_size(cat, size);
                }
            }
            if started.elapsed() > self.timeout {
                return;
            }
            if added == 0 {
                empty_window += 1;
                if empty_window >= EXHAUST_WINDOW {
                    self.exhausted = true;
                    return;
                }
            } else {
                empty_window = 0;
            }
        }
    }

    /// Fills `tables[cat][size]`; returns how many subtrees were added.
    fn build_size(&mut self, cat: Category, size: usize) -> usize {
        while self.tables[cat.index()].len() <= size {
            self.tables[cat.index()].push(Vec::new());
        }
        if !self.tables[cat.index()][size].is_empty() {
            return 0; // already built (shared child category)
        }
        let mut out: Vec<Rc<Node>> = Vec::new();
        for op in self.allowed.iter() {
            let sig = op.signature();
            if sig.result != cat || op.is_start() {
                continue;
            }
            match sig.arity() {
                0 => {
                    if size == 1 {
                        self.push_constants(op, &mut out);
                    }
                }
                1 => {
                    self.compose(op, &[size - 1], &mut out);
                }
                2 => {
                    for s1 in 1..size.saturating_sub(1) {
                        self.compose(op, &[s1, size - 1 - s1], &mut out);
                    }
                }
                3 => {
                    for s1 in 1..size.saturating_sub(2) {
                        for s2 in 1..size - 1 - s1 {
                            self.compose(op, &[s1, s2, size - 1 - s1 - s2], &mut out);
                        }
                    }
                }
                _ => unreachable!("arity is at most 3"),
            }
        }
        let n = out.len();
        self.tables[cat.index()][size] = out;
        n
    }

    fn push_constants(&self, op: Op, out: &mut Vec<Rc<Node>>) {
        let mk = |constant: ConstantRef, value: Value| {
            Rc::new(Node { op, constant: Some(constant), children: Vec::new(), depth: 1, value })
        };
        match op {
            Op::EntityConst => {
                for e in &self.pool.entities {
                    let value = if !self.valued {
                        Value::Unvalued
                    } else {
                        match self.entity_ix.get(e.as_str()) {
                            Some(i) => Value::Ent(*i),
                            None => Value::Invalid,
                        }
                    };
                    out.push(mk(ConstantRef::Entity(e.clone()), value));
                }
            }
            Op::PredicateConst => {
                for (pos, p) in self.pool.predicates.iter().enumerate() {
                    let value = if !self.valued {
                        Value::Unvalued
                    } else if self.pred_known[pos] {
                        Value::Pred(pos as u16)
                    } else {
                        Value::Invalid
                    };
                    out.push(mk(ConstantRef::Predicate(p.clone()), value));
                }
            }
            Op::NumberConst => {
                for n in &self.pool.numbers {
                    let value = if self.valued { Value::Num(*n) } else { Value::Unvalued };
                    out.push(mk(ConstantRef::Number(*n), value));
                }
            }
            _ => unreachable!("only instantiators have arity 0"),
        }
    }

    fn compose(&mut self, op: Op, sizes: &[usize], out: &mut Vec<Rc<Node>>) {
        let args = op.signature().args;
        debug_assert_eq!(args.len(), sizes.len());
        for (arg, sz) in args.iter().zip(sizes) {
            if self.tables[arg.index()].len() <= *sz || self.tables[arg.index()][*sz].is_empty() {
                return;
            }
        }
        // Cartesian product over child tables, first argument outermost.
        let mut stack: Vec<usize> = vec![0; sizes.len()];
        'outer: loop {
            let children: Vec<Rc<Node>> = args
                .iter()
                .zip(sizes)
                .zip(&stack)
                .map(|((arg, sz), i)| Rc::clone(&self.tables[arg.index()][*sz][*i]))
                .collect();
            let depth = 1 + children.iter().map(|c| c.depth as usize).max().unwrap_or(0);
            if depth <= self.max_child_depth {
                let value = self.compose_value(op, &children);
                out.push(Rc::new(Node {
                    op,
                    constant: None,
                    children,
                    depth: depth as u8,
                    value,
                }));
            }
            // Advance the last index, odometer style.
            for pos in (0..stack.len()).rev() {
                let arg = args[pos];
                stack[pos] += 1;
                if stack[pos] < self.tables[arg.index()][sizes[pos]].len() {
                    continue 'outer;
                }
                stack[pos] = 0;
                if pos == 0 {
                    break 'outer;
                }
            }
        }
    }

    fn compose_value(&self, op: Op, children: &[Rc<Node>]) -> Value {
        let kb = match &self.dense {
            Some(kb) => kb,
            None => return Value::Unvalued,
        };
        if children.iter().any(|c| matches!(c.value, Value::Invalid)) {
            return Value::Invalid;
        }
        let set = |i: usize| match &children[i].value {
            Value::Set(s) => Rc::clone(s),
            _ => unreachable!("type checked"),
        };
        let num = |i: usize| match &children[i].value {
            Value::Num(n) => *n,
            _ => unreachable!("type checked"),
        };
        let ent = |i: usize| match &children[i].value {
            Value::Ent(e) => *e,
            _ => unreachable!("type checked"),
        };
        let pred = |i: usize| match &children[i].value {
            Value::Pred(p) => *p,
            _ => unreachable!("type checked"),
        };
        match op {
            Op::Find => {
                let (subjects, p) = (set(0), pred(1));
                let mut out: Vec<u32> = Vec::new();
                for s in subjects.iter() {
                    out.extend_from_slice(kb.objects(p, *s));
                }
                out.sort_unstable();
                out.dedup();
                Value::Set(Rc::new(out))
            }
            Op::Count => Value::Num(set(0).len() as u64),
            Op::In => Value::Bool(set(1).binary_search(&ent(0)).is_ok()),
            Op::Union => Value::Set(Rc::new(merge_union(&set(0), &set(1)))),
            Op::Inter => Value::Set(Rc::new(merge_inter(&set(0), &set(1)))),
            Op::Diff => Value::Set(Rc::new(merge_diff(&set(0), &set(1)))),
            Op::Greater | Op::Less | Op::Equal => {
                let (s, p, n) = (set(0), pred(1), num(2));
                let keep = |d: u64| match op {
                    Op::Greater => d > n,
                    Op::Less => d < n,
                    _ => d == n,
                };
                Value::Set(Rc::new(
                    s.iter().copied().filter(|x| keep(kb.degree(p, *x))).collect(),
                ))
            }
            Op::Argmax | Op::Argmin => {
                let (s, p) = (set(0), pred(1));
                if s.is_empty() {
                    return Value::Set(Rc::new(Vec::new()));
                }
                let degrees: Vec<u64> = s.iter().map(|x| kb.degree(p, *x)).collect();
                let extreme = degrees
                    .iter()
                    .copied()
                    .reduce(|a, b| if op == Op::Argmax { a.max(b) } else { a.min(b) })
                    .expect("nonempty");
                Value::Set(Rc::new(
                    s.iter()
                        .zip(&degrees)
                        .filter(|(_, d)| **d == extreme)
                        .map(|(x, _)| *x)
                        .collect(),
                ))
            }
            Op::SetOf => Value::Set(Rc::new(vec![ent(0)])),
            _ => unreachable!("start producers and instantiators never compose"),
        }
    }
}

// ---------------------------------------------------------------------------
// JSONL helpers
// ---------------------------------------------------------------------------

/// Writes one JSON object per line.
pub fn write_records(path: &std::path::Path, records: &[SearchRecord]) -> std::io::Result<()> {
    let mut body = String::new();
    for r in records {
        body.push_str(&serde_json::to_string(r).expect("search records always serialize"));
        body.push('\n');
    }
    crate::metrics::write_atomic(path, body.as_bytes())
}

pub fn read_records(path: &std::path::Path) -> std::io::Result<Vec<SearchRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SearchRecord = serde_json::from_str(line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Results keyed by question id.
pub fn results_by_qid(results: &[SearchResult]) -> BTreeMap<&str, &SearchResult> {
    results.iter().map(|r| (r.qid.as_str(), r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::QuestionRecord;
    use crate::executor;
    use crate::kb::{EntityRecord, Triple};

    fn kb() -> KnowledgeBase {
        let mk = |id: &str, ty: &str| EntityRecord {
            id: id.into(),
            type_label: ty.into(),
            mentions: vec![id.into()],
        };
        KnowledgeBase::from_parts(
            vec![mk("a", "person"), mk("b", "person"), mk("c", "city"), mk("d", "city")],
            vec![("p1".into(), "visited".into()), ("p2".into(), "born in".into())],
            vec![
                Triple::new("a", "p1", "c"),
                Triple::new("a", "p1", "d"),
                Triple::new("b", "p1", "c"),
                Triple::new("a", "p2", "c"),
                Triple::new("b", "p2", "d"),
            ],
        )
        .unwrap()
    }

    fn question(pool: ConstantPool, gold: Answer) -> QuestionRecord {
        QuestionRecord {
            qid: "q0".into(),
            tokens: vec![],
            qtype: crate::curation::QuestionType::SimpleDirect,
            pool,
            gold_answer: gold,
            gold_lf: None,
        }
    }

    #[test]
    fn depth_four_single_constant_space_is_exactly_two_forms() {
        let pool = ConstantPool::new(vec!["e1".into()], vec!["p1".into()], vec![]);
        let cfg = SearchConfig {
            max_depth: 4,
            allowed_ops: "A1 A4 A15 A16 A17".parse().unwrap(),
            ..SearchConfig::default()
        };
        let forms = enumerate(&pool, &cfg);
        let texts: Vec<String> = forms.iter().map(|f| f.to_string()).collect();
        assert_eq!(texts, vec!["A1 A15 A16:e1", "A1 A4 A15 A16:e1 A17:p1"]);
    }

    #[test]
    fn search_agrees_with_the_executor_on_every_form() {
        let kb = kb();
        let pool = ConstantPool::new(
            vec!["a".into(), "b".into()],
            vec!["p1".into(), "p2".into()],
            vec![1],
        );
        let cfg = SearchConfig {
            max_depth: 5,
            max_candidates: 100_000,
            dedupe: false,
            max_forms: usize::MAX,
            ..SearchConfig::default()
        };
        let gold = Answer::entities(["c", "d"]);
        let q = question(pool.clone(), gold.clone());
        let result = naive_search(&q, &kb, &cfg);
        assert!(result.exhausted, "depth-5 space should fit the budget");

        // Independent check: enumerate without a KB, execute every form, and
        // keep those matching gold. Must equal the search's found list.
        let all = enumerate(&pool, &cfg);
        let expected: Vec<String> = all
            .iter()
            .filter(|f| executor::evaluate(f, &kb).ok().as_ref() == Some(&gold))
            .map(|f| f.to_string())
            .collect();
        let got: Vec<String> = result.found.iter().map(|f| f.to_string()).collect();
        assert_eq!(got, expected);
        assert!(!got.is_empty());
    }

    #[test]
    fn budget_caps_explored() {
        let kb = kb();
        let pool = ConstantPool::new(
            vec!["a".into(), "b".into()],
            vec!["p1".into(), "p2".into()],
            vec![1, 2],
        );
        let cfg = SearchConfig { max_candidates: 7, ..SearchConfig::default() };
        let q = question(pool, Answer::Number(999));
        let r = naive_search(&q, &kb, &cfg);
        assert_eq!(r.explored, 7);
        assert!(!r.exhausted);
        assert!(r.found.is_empty());
    }

    #[test]
    fn tiny_spaces_report_exhaustion() {
        let kb = kb();
        let pool = ConstantPool::new(vec!["a".into()], vec![], vec![]);
        let cfg = SearchConfig {
            max_depth: 3,
            allowed_ops: "A1 A15 A16".parse().unwrap(),
            ..SearchConfig::default()
        };
        let q = question(pool, Answer::entities(["a"]));
        let r = naive_search(&q, &kb, &cfg);
        assert!(r.exhausted);
        assert_eq!(r.found.len(), 1);
        assert_eq!(r.first_found_at, Some(1));
    }

    #[test]
    fn searches_are_deterministic() {
        let kb = kb();
        let pool = ConstantPool::new(
            vec!["a".into(), "b".into()],
            vec!["p1".into(), "p2".into()],
            vec![2],
        );
        let cfg = SearchConfig { max_candidates: 3000, ..SearchConfig::default() };
        let q = question(pool, Answer::entities(["c"]));
        let r1 = naive_search(&q, &kb, &cfg);
        let r2 = naive_search(&q, &kb, &cfg);
        assert_eq!(r1.found, r2.found);
        assert_eq!(r1.explored, r2.explored);
        assert_eq!(r1.to_record(), r2.to_record());
    }

    #[test]
    fn dedupe_collapses_commutative_twins() {
        let kb = kb();
        // gold = visited(a) ∪ visited(b) = {c,d}; Union(a,b) and Union(b,a)
        // both reach it.
        let pool = ConstantPool::new(vec!["a".into(), "b".into()], vec!["p1".into()], vec![]);
        let gold = Answer::entities(["c", "d"]);
        let base = SearchConfig {
            max_depth: 6,
            max_candidates: 100_000,
            max_forms: usize::MAX,
            ..SearchConfig::default()
        };
        let q = question(pool, gold);
        let deduped = naive_search(&q, &kb, &base);
        let raw = naive_search(&q, &kb, &SearchConfig { dedupe: false, ..base.clone() });
        let unions = |r: &SearchResult| {
            r.found.iter().filter(|f| f.operators().contains(Op::Union)).count()
        };
        assert!(unions(&raw) > unions(&deduped));
        assert_eq!(raw.explored, deduped.explored);
    }

    #[test]
    fn constrained_search_forces_the_root_and_constants() {
        let kb = kb();
        let pool = ConstantPool::new(vec!["a".into()], vec!["p1".into()], vec![]);
        let q = question(pool, Answer::entities(["c", "d"]));
        // The predictor says only Find; forcing adds A1/A15/A16/A17.
        let r = constrained_search(&q, &kb, OpSet::single(Op::Find), &SearchConfig::default());
        assert!(r.success());
        assert_eq!(r.found[0].to_string(), "A1 A4 A15 A16:a A17:p1");
        // The raw variant with the same set finds nothing: no start producer.
        let raw = search_with_ops(&q, &kb, OpSet::single(Op::Find), &SearchConfig::default());
        assert!(!raw.success());
        assert_eq!(raw.explored, 0);
        assert!(raw.exhausted);
    }

    #[test]
    fn canonicalize_sorts_commutative_args_recursively() {
        let a: LogicalForm = "A1 A7 A15 A16:b A7 A15 A16:a A15 A16:c".parse().unwrap();
        let b: LogicalForm = "A1 A7 A7 A15 A16:c A15 A16:a A15 A16:b".parse().unwrap();
        assert_eq!(canonicalize(&a), canonicalize(&b));
        // Diff is order sensitive and must stay put.
        let d1: LogicalForm = "A1 A9 A15 A16:b A15 A16:a".parse().unwrap();
        assert_eq!(canonicalize(&d1), d1);
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let kb = kb();
        let pool = ConstantPool::new(vec!["a".into()], vec!["p1".into()], vec![]);
        let q = question(pool, Answer::entities(["c", "d"]));
        let r = naive_search(&q, &kb, &SearchConfig::default());
        let rec = r.to_record();
        assert_eq!(rec.elapsed_ms, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("search.jsonl");
        write_records(&path, &[rec.clone()]).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back, vec![rec.clone()]);
        let restored = SearchResult::from_record(&back[0]).unwrap();
        assert_eq!(restored.found, r.found);
        assert_eq!(restored.explored, r.explored);
    }
}
