//! Executes logical forms against a knowledge base.
//!
//! Evaluation is total on well-typed forms whose constants resolve: set
//! operators work on entity sets, the comparatives filter by out-degree, and
//! `Argmax`/`Argmin` keep every entity tied at the extreme. Entities with no
//! links under a predicate count as degree 0.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grammar::{self, Category, ConstantRef, LfNode, LogicalForm, Op, TypeViolation};
use crate::kb::{EntityId, KnowledgeBase, PredicateId};

/// Denotation of a complete logical form.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Answer {
    Entities(BTreeSet<EntityId>),
    Number(u64),
    Boolean(bool),
}

impl Answer {
    /// The grammar category a form must produce to yield this answer.
    pub fn category(&self) -> Category {
        match self {
            Answer::Entities(_) => Category::Set,
            Answer::Number(_) => Category::Num,
            Answer::Boolean(_) => Category::Bool,
        }
    }

    /// The start producer matching [`Answer::category`].
    pub fn root_op(&self) -> Op {
        Op::start_for(self.category()).expect("answer categories always have a start producer")
    }

    pub fn entities<I, T>(ids: I) -> Answer
    where
        I: IntoIterator<Item = T>,
        T: Into<EntityId>,
    {
        Answer::Entities(ids.into_iter().map(Into::into).collect())
    }

    /// The empty entity set.
    pub fn empty_set() -> Answer {
        Answer::Entities(BTreeSet::new())
    }
}

/// Text form: `set:{a,b}`, `num:3`, or `bool:true`.
impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Entities(s) => {
                f.write_str("set:{")?;
                for (i, e) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    f.write_str(e.as_str())?;
                }
                f.write_str("}")
            }
            Answer::Number(n) => write!(f, "num:{n}"),
            Answer::Boolean(b) => write!(f, "bool:{b}"),
        }
    }
}

#[derive(Error, Clone, PartialEq, Eq, Debug)]
#[error("cannot parse answer {0:?}")]
pub struct AnswerParseError(String);

impl FromStr for Answer {
    type Err = AnswerParseError;

    fn from_str(s: &str) -> Result<Answer, AnswerParseError> {
        let bad = || AnswerParseError(s.to_string());
        if let Some(body) = s.strip_prefix("set:") {
            let inner = body.strip_prefix('{').and_then(|b| b.strip_suffix('}')).ok_or_else(bad)?;
            let set: BTreeSet<EntityId> = if inner.is_empty() {
                BTreeSet::new()
            } else {
                inner.split(',').map(EntityId::from).collect()
            };
            Ok(Answer::Entities(set))
        } else if let Some(n) = s.strip_prefix("num:") {
            Ok(Answer::Number(n.parse().map_err(|_| bad())?))
        } else if let Some(b) = s.strip_prefix("bool:") {
            Ok(Answer::Boolean(b.parse().map_err(|_| bad())?))
        } else {
            Err(bad())
        }
    }
}

impl serde::Serialize for Answer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Answer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Exact denotation equality; the measure of search success everywhere.
pub fn answers_equal(a: &Answer, b: &Answer) -> bool {
    a == b
}

#[derive(Error, Clone, PartialEq, Eq, Debug)]
pub enum ExecError {
    #[error("ill-typed form: {0}")]
    IllTyped(TypeViolation),
    #[error("unresolved entity {0}")]
    UnresolvedEntity(EntityId),
    #[error("unresolved predicate {0}")]
    UnresolvedPredicate(PredicateId),
}

enum Value {
    Set(BTreeSet<EntityId>),
    Num(u64),
    Bool(bool),
    Ent(EntityId),
    Pred(PredicateId),
}

impl Value {
    fn set(self) -> BTreeSet<EntityId> {
        match self {
            Value::Set(s) => s,
            _ => unreachable!("type checked"),
        }
    }

    fn num(self) -> u64 {
        match self {
            Value::Num(n) => n,
            _ => unreachable!("type checked"),
        }
    }

    fn ent(self) -> EntityId {
        match self {
            Value::Ent(e) => e,
            _ => unreachable!("type checked"),
        }
    }

    fn pred(self) -> PredicateId {
        match self {
            Value::Pred(p) => p,
            _ => unreachable!("type checked"),
        }
    }
}

fn eval_node(node: &LfNode, kb: &KnowledgeBase) -> Result<Value, ExecError> {
    let mut args = Vec::with_capacity(node.children.len());
    for c in &node.children {
        args.push(eval_node(c, kb)?);
    }
    let mut args = args.into_iter();
    let mut next = || args.next().expect("arity checked");

    Ok(match node.op {
        Op::StartSet | Op::StartNum | Op::StartBool => next(),
        Op::Find => {
            let subjects = next().set();
            let p = next().pred();
            Value::Set(kb.objects(&subjects, &p))
        }
        Op::Count => Value::Num(next().set().len() as u64),
        Op::In => {
            let e = next().ent();
            let s = next().set();
            Value::Bool(s.contains(&e))
        }
        Op::Union => {
            let mut a = next().set();
            a.extend(next().set());
            Value::Set(a)
        }
        Op::Inter => {
            let a = next().set();
            let b = next().set();
            Value::Set(a.intersection(&b).cloned().collect())
        }
        Op::Diff => {
            let a = next().set();
            let b = next().set();
            Value::Set(a.difference(&b).cloned().collect())
        }
        Op::Greater | Op::Less | Op::Equal => {
            let s = next().set();
            let p = next().pred();
            let n = next().num();
            let keep = |d: u64| match node.op {
                Op::Greater => d > n,
                Op::Less => d < n,
                _ => d == n,
            };
            Value::Set(s.into_iter().filter(|x| keep(kb.out_degree(x, &p))).collect())
        }
        Op::Argmax | Op::Argmin => {
            let s = next().set();
            let p = next().pred();
            if s.is_empty() {
                Value::Set(s)
            } else {
                let degrees: Vec<(EntityId, u64)> =
                    s.into_iter().map(|x| { let d = kb.out_degree(&x, &p); (x, d) }).collect();
                let extreme = degrees
                    .iter()
                    .map(|(_, d)| *d)
                    .reduce(|a, b| if node.op == Op::Argmax { a.max(b) } else { a.min(b) })
                    .expect("nonempty");
                Value::Set(degrees.into_iter().filter(|(_, d)| *d == extreme).map(|(x, _)| x).collect())
            }
        }
        Op::SetOf => Value::Set([next().ent()].into()),
        Op::EntityConst => {
            let e = match node.constant.as_ref().expect("checked") {
                ConstantRef::Entity(e) => e.clone(),
                _ => unreachable!("type checked"),
            };
            if !kb.has_entity(&e) {
                return Err(ExecError::UnresolvedEntity(e));
            }
            Value::Ent(e)
        }
        Op::PredicateConst => {
            let p = match node.constant.as_ref().expect("checked") {
                ConstantRef::Predicate(p) => p.clone(),
                _ => unreachable!("type checked"),
            };
            if !kb.has_predicate(&p) {
                return Err(ExecError::UnresolvedPredicate(p));
            }
            Value::Pred(p)
        }
        Op::NumberConst => match node.constant.as_ref().expect("checked") {
            ConstantRef::Number(n) => Value::Num(*n),
            _ => unreachable!("type checked"),
        },
    })
}

/// Evaluates a well-typed form against `kb`.
pub fn evaluate(lf: &LogicalForm, kb: &KnowledgeBase) -> Result<Answer, ExecError> {
    grammar::check(lf).map_err(ExecError::IllTyped)?;
    Ok(match eval_node(&lf.root, kb)? {
        Value::Set(s) => Answer::Entities(s),
        Value::Num(n) => Answer::Number(n),
        Value::Bool(b) => Answer::Boolean(b),
        _ => unreachable!("start producers yield set/num/bool"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{EntityRecord, Triple};

    /// Two people linked to cities; `e5` has no links at all.
    fn kb() -> KnowledgeBase {
        let mk = |id: &str, ty: &str| EntityRecord {
            id: id.into(),
            type_label: ty.into(),
            mentions: vec![id.into()],
        };
        KnowledgeBase::from_parts(
            vec![mk("a", "person"), mk("b", "person"), mk("c", "city"), mk("d", "city"), mk("e5", "person")],
            vec![("p1".into(), "visited".into()), ("p2".into(), "born in".into())],
            vec![
                Triple::new("a", "p1", "c"),
                Triple::new("a", "p1", "d"),
                Triple::new("b", "p1", "c"),
                Triple::new("a", "p2", "c"),
            ],
        )
        .unwrap()
    }

    fn run(text: &str) -> Answer {
        let lf: LogicalForm = text.parse().unwrap();
        evaluate(&lf, &kb()).unwrap()
    }

    #[test]
    fn find_count_and_membership() {
        assert_eq!(run("A1 A4 A15 A16:a A17:p1"), Answer::entities(["c", "d"]));
        assert_eq!(run("A2 A5 A4 A15 A16:a A17:p1"), Answer::Number(2));
        assert_eq!(run("A3 A6 A16:c A4 A15 A16:a A17:p1"), Answer::Boolean(true));
        assert_eq!(run("A3 A6 A16:b A4 A15 A16:a A17:p1"), Answer::Boolean(false));
        // Find over an entity with no links is empty, and counting it gives 0.
        assert_eq!(run("A1 A4 A15 A16:e5 A17:p1"), Answer::empty_set());
        assert_eq!(run("A2 A5 A4 A15 A16:e5 A17:p1"), Answer::Number(0));
    }

    #[test]
    fn set_algebra() {
        // visited(a) = {c,d}, visited(b) = {c}
        assert_eq!(
            run("A1 A7 A4 A15 A16:a A17:p1 A4 A15 A16:b A17:p1"),
            Answer::entities(["c", "d"])
        );
        assert_eq!(
            run("A1 A8 A4 A15 A16:a A17:p1 A4 A15 A16:b A17:p1"),
            Answer::entities(["c"])
        );
        assert_eq!(
            run("A1 A9 A4 A15 A16:a A17:p1 A4 A15 A16:b A17:p1"),
            Answer::entities(["d"])
        );
    }

    #[test]
    fn degree_comparatives_treat_unlinked_as_zero() {
        // Union of singletons a, b, e5; degrees under p1: a=2, b=1, e5=0.
        let all = "A7 A15 A16:a A7 A15 A16:b A15 A16:e5";
        assert_eq!(run(&format!("A1 A10 {all} A17:p1 A18:1")), Answer::entities(["a"]));
        assert_eq!(run(&format!("A1 A11 {all} A17:p1 A18:2")), Answer::entities(["b", "e5"]));
        assert_eq!(run(&format!("A1 A12 {all} A17:p1 A18:0")), Answer::entities(["e5"]));
        assert_eq!(run(&format!("A1 A13 {all} A17:p1")), Answer::entities(["a"]));
        assert_eq!(run(&format!("A1 A14 {all} A17:p1")), Answer::entities(["e5"]));
        // Ties are all kept: under p2 degrees are a=1, b=0, e5=0.
        assert_eq!(run(&format!("A1 A14 {all} A17:p2")), Answer::entities(["b", "e5"]));
    }

    #[test]
    fn argmax_of_empty_set_is_empty() {
        assert_eq!(
            run("A1 A13 A9 A15 A16:a A15 A16:a A17:p1"),
            Answer::empty_set()
        );
    }

    #[test]
    fn unresolved_constants_error() {
        let lf: LogicalForm = "A1 A15 A16:ghost".parse().unwrap();
        assert_eq!(
            evaluate(&lf, &kb()),
            Err(ExecError::UnresolvedEntity("ghost".into()))
        );
        let lf: LogicalForm = "A1 A4 A15 A16:a A17:p9".parse().unwrap();
        assert_eq!(
            evaluate(&lf, &kb()),
            Err(ExecError::UnresolvedPredicate("p9".into()))
        );
    }

    #[test]
    fn ill_typed_forms_are_rejected_before_execution() {
        let bad = LogicalForm::new(LfNode::new(Op::StartSet, vec![LfNode::number(3)]));
        assert!(matches!(evaluate(&bad, &kb()), Err(ExecError::IllTyped(_))));
    }

    #[test]
    fn answer_text_round_trips() {
        for a in [
            Answer::entities(["x", "y"]),
            Answer::empty_set(),
            Answer::Number(0),
            Answer::Boolean(false),
        ] {
            let s = a.to_string();
            assert_eq!(s.parse::<Answer>().unwrap(), a, "{s}");
        }
        assert_eq!(Answer::entities(["b", "a"]).to_string(), "set:{a,b}");
        assert!("junk".parse::<Answer>().is_err());
        assert!("num:x".parse::<Answer>().is_err());
    }
}
