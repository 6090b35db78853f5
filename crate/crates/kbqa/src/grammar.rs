//! Typed operator grammar for logical forms.
//!
//! Eighteen operators (`A1`..`A18`) combine into trees over five semantic
//! categories plus a distinguished `Start` root. Trees serialize to preorder
//! action sequences and back; [`legal_continuations`] reports which operators
//! may extend a sequence prefix, which is what both the enumerator and the
//! beam parser use to stay inside the grammar.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::kb::{EntityId, PredicateId};

/// Semantic category of a grammar node.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Category {
    /// Root-only category; produced by `A1`/`A2`/`A3` and nothing else.
    Start,
    Set,
    Num,
    Bool,
    Ent,
    Pred,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Start,
        Category::Set,
        Category::Num,
        Category::Bool,
        Category::Ent,
        Category::Pred,
    ];

    pub fn index(self) -> usize {
        match self {
            Category::Start => 0,
            Category::Set => 1,
            Category::Num => 2,
            Category::Bool => 3,
            Category::Ent => 4,
            Category::Pred => 5,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Start => "start",
            Category::Set => "set",
            Category::Num => "num",
            Category::Bool => "bool",
            Category::Ent => "ent",
            Category::Pred => "pred",
        };
        f.write_str(s)
    }
}

/// Grammar operator. Variants are declared in alias order, so the derived
/// `Ord` matches the `A1 < A2 < ... < A18` ordering used everywhere.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Op {
    /// A1: start -> set
    StartSet,
    /// A2: start -> num
    StartNum,
    /// A3: start -> bool
    StartBool,
    /// A4: Find(set, pred) -> set
    Find,
    /// A5: Count(set) -> num
    Count,
    /// A6: In(ent, set) -> bool
    In,
    /// A7: Union(set, set) -> set
    Union,
    /// A8: Inter(set, set) -> set
    Inter,
    /// A9: Diff(set, set) -> set
    Diff,
    /// A10: Greater(set, pred, num) -> set
    Greater,
    /// A11: Less(set, pred, num) -> set
    Less,
    /// A12: Equal(set, pred, num) -> set
    Equal,
    /// A13: Argmax(set, pred) -> set
    Argmax,
    /// A14: Argmin(set, pred) -> set
    Argmin,
    /// A15: Set(ent) -> set
    SetOf,
    /// A16: instantiate an entity constant
    EntityConst,
    /// A17: instantiate a predicate constant
    PredicateConst,
    /// A18: instantiate a number constant
    NumberConst,
}

/// Argument list and result category of an operator.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Signature {
    pub result: Category,
    pub args: &'static [Category],
}

impl Signature {
    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

use Category::{Bool, Ent, Num, Pred, Set, Start};

const SIGNATURES: [Signature; 18] = [
    Signature { result: Start, args: &[Set] },        // A1
    Signature { result: Start, args: &[Num] },        // A2
    Signature { result: Start, args: &[Bool] },       // A3
    Signature { result: Set, args: &[Set, Pred] },    // A4 Find
    Signature { result: Num, args: &[Set] },          // A5 Count
    Signature { result: Bool, args: &[Ent, Set] },    // A6 In
    Signature { result: Set, args: &[Set, Set] },     // A7 Union
    Signature { result: Set, args: &[Set, Set] },     // A8 Inter
    Signature { result: Set, args: &[Set, Set] },     // A9 Diff
    Signature { result: Set, args: &[Set, Pred, Num] }, // A10 Greater
    Signature { result: Set, args: &[Set, Pred, Num] }, // A11 Less
    Signature { result: Set, args: &[Set, Pred, Num] }, // A12 Equal
    Signature { result: Set, args: &[Set, Pred] },    // A13 Argmax
    Signature { result: Set, args: &[Set, Pred] },    // A14 Argmin
    Signature { result: Set, args: &[Ent] },          // A15 Set
    Signature { result: Ent, args: &[] },             // A16
    Signature { result: Pred, args: &[] },            // A17
    Signature { result: Num, args: &[] },             // A18
];

impl Op {
    pub const ALL: [Op; 18] = [
        Op::StartSet,
        Op::StartNum,
        Op::StartBool,
        Op::Find,
        Op::Count,
        Op::In,
        Op::Union,
        Op::Inter,
        Op::Diff,
        Op::Greater,
        Op::Less,
        Op::Equal,
        Op::Argmax,
        Op::Argmin,
        Op::SetOf,
        Op::EntityConst,
        Op::PredicateConst,
        Op::NumberConst,
    ];

    /// Zero-based position in alias order (`A1` is 0).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Op> {
        Op::ALL.get(i).copied()
    }

    /// Short alias, `"A1"` through `"A18"`.
    pub fn alias(self) -> &'static str {
        const ALIASES: [&str; 18] = [
            "A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11", "A12", "A13",
            "A14", "A15", "A16", "A17", "A18",
        ];
        ALIASES[self.index()]
    }

    pub fn from_alias(s: &str) -> Option<Op> {
        let rest = s.strip_prefix('A')?;
        let n: usize = rest.parse().ok()?;
        if (1..=18).contains(&n) {
            Op::from_index(n - 1)
        } else {
            None
        }
    }

    pub fn signature(self) -> &'static Signature {
        &SIGNATURES[self.index()]
    }

    /// True for `A1`/`A2`/`A3`, the only producers of [`Category::Start`].
    pub fn is_start(self) -> bool {
        matches!(self, Op::StartSet | Op::StartNum | Op::StartBool)
    }

    /// True for `A16`/`A17`/`A18`, the only operators carrying a constant.
    pub fn is_instantiator(self) -> bool {
        self.constant_kind().is_some()
    }

    /// Which constant kind this operator carries, if any.
    pub fn constant_kind(self) -> Option<ConstKind> {
        match self {
            Op::EntityConst => Some(ConstKind::Entity),
            Op::PredicateConst => Some(ConstKind::Predicate),
            Op::NumberConst => Some(ConstKind::Number),
            _ => None,
        }
    }

    /// The start producer whose argument category is `cat`, if one exists.
    pub fn start_for(cat: Category) -> Option<Op> {
        match cat {
            Category::Set => Some(Op::StartSet),
            Category::Num => Some(Op::StartNum),
            Category::Bool => Some(Op::StartBool),
            _ => None,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.alias())
    }
}

impl Serialize for Op {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.alias())
    }
}

impl<'de> Deserialize<'de> for Op {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Op::from_alias(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown operator {s}")))
    }
}

/// Kind tag for the three constant-carrying operators.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum ConstKind {
    Entity,
    Predicate,
    Number,
}

/// A constant attached to an instantiator node.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ConstantRef {
    Entity(EntityId),
    Predicate(PredicateId),
    Number(u64),
}

impl ConstantRef {
    pub fn kind(&self) -> ConstKind {
        match self {
            ConstantRef::Entity(_) => ConstKind::Entity,
            ConstantRef::Predicate(_) => ConstKind::Predicate,
            ConstantRef::Number(_) => ConstKind::Number,
        }
    }
}

impl fmt::Display for ConstantRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstantRef::Entity(e) => f.write_str(e.as_str()),
            ConstantRef::Predicate(p) => f.write_str(p.as_str()),
            ConstantRef::Number(n) => write!(f, "{n}"),
        }
    }
}

/// Bit set over the 18 operators.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct OpSet(u32);

impl OpSet {
    const MASK: u32 = (1 << 18) - 1;

    pub fn empty() -> OpSet {
        OpSet(0)
    }

    /// All 18 operators.
    pub fn full() -> OpSet {
        OpSet(Self::MASK)
    }

    pub fn single(op: Op) -> OpSet {
        OpSet(1 << op.index())
    }

    pub fn contains(self, op: Op) -> bool {
        self.0 & (1 << op.index()) != 0
    }

    #[must_use]
    pub fn with(self, op: Op) -> OpSet {
        OpSet(self.0 | (1 << op.index()))
    }

    #[must_use]
    pub fn without(self, op: Op) -> OpSet {
        OpSet(self.0 & !(1 << op.index()))
    }

    pub fn insert(&mut self, op: Op) {
        self.0 |= 1 << op.index();
    }

    pub fn union(self, other: OpSet) -> OpSet {
        OpSet(self.0 | other.0)
    }

    pub fn intersect(self, other: OpSet) -> OpSet {
        OpSet(self.0 & other.0)
    }

    pub fn minus(self, other: OpSet) -> OpSet {
        OpSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: OpSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Op> {
        Op::ALL.into_iter().filter(move |op| self.contains(*op))
    }
}

impl FromIterator<Op> for OpSet {
    fn from_iter<I: IntoIterator<Item = Op>>(iter: I) -> OpSet {
        let mut s = OpSet::empty();
        for op in iter {
            s.insert(op);
        }
        s
    }
}

impl fmt::Display for OpSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for op in self.iter() {
            if !first {
                f.write_str(" ")?;
            }
            f.write_str(op.alias())?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for OpSet {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<OpSet, GrammarError> {
        let mut set = OpSet::empty();
        for (i, part) in s.split_whitespace().enumerate() {
            let op = Op::from_alias(part).ok_or(GrammarError::Token {
                position: i,
                token: part.to_string(),
            })?;
            set.insert(op);
        }
        Ok(set)
    }
}

impl Serialize for OpSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let aliases: Vec<&str> = self.iter().map(Op::alias).collect();
        aliases.serialize(s)
    }
}

impl<'de> Deserialize<'de> for OpSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let aliases = Vec::<String>::deserialize(d)?;
        let mut set = OpSet::empty();
        for a in &aliases {
            let op = Op::from_alias(a)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown operator {a}")))?;
            set.insert(op);
        }
        Ok(set)
    }
}

/// One node of a logical-form tree.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct LfNode {
    pub op: Op,
    pub constant: Option<ConstantRef>,
    pub children: Vec<LfNode>,
}

impl LfNode {
    /// Non-instantiator node.
    pub fn new(op: Op, children: Vec<LfNode>) -> LfNode {
        LfNode { op, constant: None, children }
    }

    /// `A16` leaf.
    pub fn entity(id: impl Into<EntityId>) -> LfNode {
        LfNode {
            op: Op::EntityConst,
            constant: Some(ConstantRef::Entity(id.into())),
            children: Vec::new(),
        }
    }

    /// `A17` leaf.
    pub fn predicate(id: impl Into<PredicateId>) -> LfNode {
        LfNode {
            op: Op::PredicateConst,
            constant: Some(ConstantRef::Predicate(id.into())),
            children: Vec::new(),
        }
    }

    /// `A18` leaf.
    pub fn number(n: u64) -> LfNode {
        LfNode {
            op: Op::NumberConst,
            constant: Some(ConstantRef::Number(n)),
            children: Vec::new(),
        }
    }

    /// `A15(A16:id)`, the singleton-set idiom.
    pub fn singleton(id: impl Into<EntityId>) -> LfNode {
        LfNode::new(Op::SetOf, vec![LfNode::entity(id)])
    }

    fn node_count(&self) -> usize {
        1 + self.children.iter().map(LfNode::node_count).sum::<usize>()
    }

    fn depth(&self) -> usize {
        1 + self.children.iter().map(LfNode::depth).max().unwrap_or(0)
    }
}

/// A logical form: a tree rooted at a start producer.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct LogicalForm {
    pub root: LfNode,
}

impl LogicalForm {
    pub fn new(root: LfNode) -> LogicalForm {
        LogicalForm { root }
    }

    /// Total number of nodes; equals the serialized sequence length.
    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Node count along the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Union of the operators appearing in the tree.
    pub fn operators(&self) -> OpSet {
        fn walk(n: &LfNode, acc: &mut OpSet) {
            acc.insert(n.op);
            for c in &n.children {
                walk(c, acc);
            }
        }
        let mut acc = OpSet::empty();
        walk(&self.root, &mut acc);
        acc
    }

    /// Constants in preorder.
    pub fn constants(&self) -> Vec<&ConstantRef> {
        fn walk<'a>(n: &'a LfNode, acc: &mut Vec<&'a ConstantRef>) {
            if let Some(c) = &n.constant {
                acc.push(c);
            }
            for ch in &n.children {
                walk(ch, acc);
            }
        }
        let mut acc = Vec::new();
        walk(&self.root, &mut acc);
        acc
    }

    /// Entity ids referenced by the tree.
    pub fn entity_refs(&self) -> BTreeSet<&EntityId> {
        self.constants()
            .into_iter()
            .filter_map(|c| match c {
                ConstantRef::Entity(e) => Some(e),
                _ => None,
            })
            .collect()
    }
}

/// Raw preorder dump; does not require the tree to be well typed.
impl fmt::Display for LogicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn walk(n: &LfNode, f: &mut fmt::Formatter<'_>, first: &mut bool) -> fmt::Result {
            if !*first {
                f.write_str(" ")?;
            }
            *first = false;
            f.write_str(n.op.alias())?;
            if let Some(c) = &n.constant {
                write!(f, ":{c}")?;
            }
            for ch in &n.children {
                walk(ch, f, first)?;
            }
            Ok(())
        }
        let mut first = true;
        walk(&self.root, f, &mut first)
    }
}

impl FromStr for LogicalForm {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<LogicalForm, GrammarError> {
        deserialize(&s.parse::<LfSequence>()?)
    }
}

impl Serialize for LogicalForm {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match serialize(self) {
            Ok(seq) => s.serialize_str(&seq.to_string()),
            Err(e) => Err(serde::ser::Error::custom(e.to_string())),
        }
    }
}

impl<'de> Deserialize<'de> for LogicalForm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One token of a serialized form: an operator plus its constant when the
/// operator is an instantiator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct LfToken {
    pub op: Op,
    pub constant: Option<ConstantRef>,
}

impl LfToken {
    pub fn plain(op: Op) -> LfToken {
        LfToken { op, constant: None }
    }

    pub fn with_constant(op: Op, c: ConstantRef) -> LfToken {
        LfToken { op, constant: Some(c) }
    }
}

impl fmt::Display for LfToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.op.alias())?;
        if let Some(c) = &self.constant {
            write!(f, ":{c}")?;
        }
        Ok(())
    }
}

/// Preorder action sequence for a logical form.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct LfSequence {
    pub tokens: Vec<LfToken>,
}

impl LfSequence {
    pub fn new(tokens: Vec<LfToken>) -> LfSequence {
        LfSequence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Space-joined text form, e.g. `A2 A5 A4 A15 A16:Q7 A17:P3`.
impl fmt::Display for LfSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for LfSequence {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<LfSequence, GrammarError> {
        let mut tokens = Vec::new();
        for (i, raw) in s.split_whitespace().enumerate() {
            let bad = || GrammarError::Token { position: i, token: raw.to_string() };
            let (alias, constant) = match raw.split_once(':') {
                Some((a, c)) => (a, Some(c)),
                None => (raw, None),
            };
            let op = Op::from_alias(alias).ok_or_else(bad)?;
            let constant = match (op.constant_kind(), constant) {
                (Some(ConstKind::Entity), Some(c)) => Some(ConstantRef::Entity(c.into())),
                (Some(ConstKind::Predicate), Some(c)) => Some(ConstantRef::Predicate(c.into())),
                (Some(ConstKind::Number), Some(c)) => {
                    Some(ConstantRef::Number(c.parse().map_err(|_| bad())?))
                }
                (None, None) => None,
                _ => return Err(bad()),
            };
            tokens.push(LfToken { op, constant });
        }
        Ok(LfSequence { tokens })
    }
}

/// First type violation found in a tree, in preorder.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TypeViolation {
    /// Child indexes from the root to the offending node.
    pub path: Vec<usize>,
    pub message: String,
}

impl fmt::Display for TypeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at path {:?}: {}", self.path, self.message)
    }
}

#[derive(Error, Clone, PartialEq, Eq, Debug)]
pub enum GrammarError {
    #[error("ill-typed logical form: {0}")]
    IllTyped(TypeViolation),
    /// Sequence rejected at the given token index; an index equal to the
    /// sequence length means the sequence ended before the tree was complete.
    #[error("cannot parse sequence at token {position}")]
    Parse { position: usize },
    #[error("prefix is not extendable at token {position}")]
    InvalidPrefix { position: usize },
    #[error("unreadable token {token:?} at position {position}")]
    Token { position: usize, token: String },
}

/// Checks that the tree is rooted at a start producer and respects every
/// operator signature and constant kind.
pub fn type_check(lf: &LogicalForm) -> bool {
    check(lf).is_ok()
}

/// Like [`type_check`] but reports the first violating node.
pub fn check(lf: &LogicalForm) -> Result<(), TypeViolation> {
    fn walk(node: &LfNode, expected: Category, path: &mut Vec<usize>) -> Result<(), TypeViolation> {
        let sig = node.op.signature();
        let fail = |message: String, path: &[usize]| TypeViolation { path: path.to_vec(), message };
        if sig.result != expected {
            return Err(fail(
                format!("{} produces {} where {} is expected", node.op, sig.result, expected),
                path,
            ));
        }
        if node.children.len() != sig.arity() {
            return Err(fail(
                format!("{} wants {} arguments, got {}", node.op, sig.arity(), node.children.len()),
                path,
            ));
        }
        match (node.op.constant_kind(), &node.constant) {
            (Some(k), Some(c)) if c.kind() != k => {
                return Err(fail(format!("{} carries a {:?} constant", node.op, c.kind()), path));
            }
            (Some(_), None) => {
                return Err(fail(format!("{} is missing its constant", node.op), path));
            }
            (None, Some(_)) => {
                return Err(fail(format!("{} cannot carry a constant", node.op), path));
            }
            _ => {}
        }
        for (i, (child, cat)) in node.children.iter().zip(sig.args).enumerate() {
            path.push(i);
            walk(child, *cat, path)?;
            path.pop();
        }
        Ok(())
    }
    walk(&lf.root, Category::Start, &mut Vec::new())
}

/// Preorder serialization. Fails on ill-typed trees.
pub fn serialize(lf: &LogicalForm) -> Result<LfSequence, GrammarError> {
    check(lf).map_err(GrammarError::IllTyped)?;
    fn walk(n: &LfNode, out: &mut Vec<LfToken>) {
        out.push(LfToken { op: n.op, constant: n.constant.clone() });
        for c in &n.children {
            walk(c, out);
        }
    }
    let mut tokens = Vec::new();
    walk(&lf.root, &mut tokens);
    Ok(LfSequence { tokens })
}

/// Rebuilds the tree from a preorder sequence. The error position is the
/// index of the offending token (`tokens.len()` for truncated input).
pub fn deserialize(seq: &LfSequence) -> Result<LogicalForm, GrammarError> {
    fn parse(tokens: &[LfToken], pos: &mut usize, expected: Category) -> Result<LfNode, GrammarError> {
        let here = *pos;
        let tok = tokens.get(here).ok_or(GrammarError::Parse { position: here })?;
        let sig = tok.op.signature();
        if sig.result != expected {
            return Err(GrammarError::Parse { position: here });
        }
        match (tok.op.constant_kind(), &tok.constant) {
            (Some(k), Some(c)) if c.kind() == k => {}
            (None, None) => {}
            _ => return Err(GrammarError::Parse { position: here }),
        }
        *pos += 1;
        let mut children = Vec::with_capacity(sig.arity());
        for cat in sig.args {
            children.push(parse(tokens, pos, *cat)?);
        }
        Ok(LfNode { op: tok.op, constant: tok.constant.clone(), children })
    }
    let mut pos = 0;
    let root = parse(&seq.tokens, &mut pos, Category::Start)?;
    if pos != seq.tokens.len() {
        return Err(GrammarError::Parse { position: pos });
    }
    Ok(LogicalForm { root })
}

/// Operators from `allowed` that can legally extend `prefix`.
///
/// Returns the empty set when the prefix is already a complete form, and an
/// error when the prefix itself is not a valid preorder fragment.
pub fn legal_continuations(prefix: &[LfToken], allowed: OpSet) -> Result<OpSet, GrammarError> {
    let mut stack = vec![Category::Start];
    for (i, tok) in prefix.iter().enumerate() {
        let expected = match stack.pop() {
            Some(c) => c,
            None => return Err(GrammarError::InvalidPrefix { position: i }),
        };
        let sig = tok.op.signature();
        if sig.result != expected {
            return Err(GrammarError::InvalidPrefix { position: i });
        }
        match (tok.op.constant_kind(), &tok.constant) {
            (Some(k), Some(c)) if c.kind() == k => {}
            (None, None) => {}
            _ => return Err(GrammarError::InvalidPrefix { position: i }),
        }
        for cat in sig.args.iter().rev() {
            stack.push(*cat);
        }
    }
    Ok(match stack.last() {
        None => OpSet::empty(),
        Some(expected) => allowed
            .iter()
            .filter(|op| op.signature().result == *expected)
            .collect(),
    })
}

/// Minimum serialized length of a complete tree per category, using only
/// operators from `allowed`. `None` means the category is unreachable.
///
/// Index the result with [`Category::index`] order: Start, Set, Num, Bool,
/// Ent, Pred.
pub fn min_tree_sizes(allowed: OpSet) -> [Option<usize>; 6] {
    let mut best: [Option<usize>; 6] = [None; 6];
    loop {
        let mut changed = false;
        for op in allowed.iter() {
            let sig = op.signature();
            let mut total = 1usize;
            let mut feasible = true;
            for arg in sig.args {
                match best[arg.index()] {
                    Some(s) => total += s,
                    None => {
                        feasible = false;
                        break;
                    }
                }
            }
            if !feasible {
                continue;
            }
            let slot = &mut best[sig.result.index()];
            if slot.map_or(true, |cur| total < cur) {
                *slot = Some(total);
                changed = true;
            }
        }
        if !changed {
            return best;
        }
    }
}
