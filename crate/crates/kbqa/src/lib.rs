//! Weakly supervised question answering over a triple-store knowledge base.
//!
//! The crate implements a search-then-train pipeline. Answers are the only
//! supervision: a budgeted enumerator searches a typed operator grammar for
//! logical forms that execute to the labelled answer, a curation pass prunes
//! operators that are illegitimate for a question type, lightweight linear
//! predictors narrow the search space per question, and a grammar-constrained
//! beam parser is trained on the surviving forms.
//!
//! Start with [`grammar`] for the operator inventory and the tree/sequence
//! codec, [`search`] for enumeration, and [`pipeline`] notes in the guide for
//! how the stages chain together.

pub mod curation;
pub mod datagen;
pub mod executor;
pub mod features;
pub mod grammar;
pub mod kb;
pub mod linear;
pub mod metrics;
pub mod parser;
pub mod predictors;
pub mod search;

pub use executor::{answers_equal, evaluate, Answer};
pub use grammar::{Category, LogicalForm, Op, OpSet};
pub use kb::{EntityId, KnowledgeBase, PredicateId, Triple};
