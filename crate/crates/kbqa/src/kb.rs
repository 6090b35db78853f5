//! Triple-store knowledge base with typed entities and surface mentions.
//!
//! A base is three catalogs — entities, predicates, triples — kept in sorted
//! containers so that iteration order, serialization, and equality are all
//! deterministic. [`KnowledgeBase::perturb`] produces the seeded counterfactual
//! bases used by the spuriousness oracle in [`crate::metrics`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize, Default,
        )]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_newtype!(
    /// Opaque entity identifier.
    EntityId
);
id_newtype!(
    /// Opaque predicate identifier.
    PredicateId
);

/// A directed labelled edge `subject --predicate--> object`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(
        subject: impl Into<EntityId>,
        predicate: impl Into<PredicateId>,
        object: impl Into<EntityId>,
    ) -> Triple {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }
}

/// Catalog row for one entity.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EntityRecord {
    pub id: EntityId,
    pub type_label: String,
    /// Surface forms, most canonical first. Lowercase, space-separated tokens.
    pub mentions: Vec<String>,
}

#[derive(Error, Debug)]
pub enum KbError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {message}")]
    Format { file: String, line: usize, message: String },
    #[error("{file}:{line}: unknown id {id}")]
    Dangling { file: String, line: usize, id: String },
    #[error("triple references unknown id {id}")]
    DanglingRef { id: String },
    #[error("duplicate catalog id {id}")]
    DuplicateRef { id: String },
}

#[derive(Clone, PartialEq, Eq, Debug)]
struct EntityInfo {
    type_label: String,
    mentions: Vec<String>,
}

/// In-memory knowledge base. Equality compares catalogs and triples.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct KnowledgeBase {
    entities: BTreeMap<EntityId, EntityInfo>,
    predicates: BTreeMap<PredicateId, String>,
    triples: BTreeSet<Triple>,
    // subject -> predicate -> objects; rebuilt from `triples`, never persisted.
    forward: BTreeMap<EntityId, BTreeMap<PredicateId, BTreeSet<EntityId>>>,
}

impl KnowledgeBase {
    /// Builds a base, checking that every triple resolves against the
    /// catalogs. Duplicate triples collapse silently; duplicate catalog ids
    /// are an error.
    pub fn from_parts(
        entities: Vec<EntityRecord>,
        predicates: Vec<(PredicateId, String)>,
        triples: Vec<Triple>,
    ) -> Result<KnowledgeBase, KbError> {
        let mut kb = KnowledgeBase::default();
        for e in entities {
            let dup = kb
                .entities
                .insert(e.id.clone(), EntityInfo { type_label: e.type_label, mentions: e.mentions });
            if dup.is_some() {
                return Err(KbError::DuplicateRef { id: e.id.to_string() });
            }
        }
        for (id, name) in predicates {
            if kb.predicates.insert(id.clone(), name).is_some() {
                return Err(KbError::DuplicateRef { id: id.to_string() });
            }
        }
        for t in triples {
            kb.check_triple(&t).map_err(|id| KbError::DanglingRef { id })?;
            kb.insert_triple(t);
        }
        Ok(kb)
    }

    fn check_triple(&self, t: &Triple) -> Result<(), String> {
        for e in [&t.subject, &t.object] {
            if !self.entities.contains_key(e) {
                return Err(e.to_string());
            }
        }
        if !self.predicates.contains_key(&t.predicate) {
            return Err(t.predicate.to_string());
        }
        Ok(())
    }

    fn insert_triple(&mut self, t: Triple) {
        if self.triples.insert(t.clone()) {
            self.forward
                .entry(t.subject)
                .or_default()
                .entry(t.predicate)
                .or_default()
                .insert(t.object);
        }
    }

    /// Reads `entities.tsv`, `predicates.tsv`, and `triples.tsv` from `dir`.
    pub fn load(dir: &Path) -> Result<KnowledgeBase, KbError> {
        let mut kb = KnowledgeBase::default();

        let read = |name: &str| -> Result<Vec<(usize, String)>, KbError> {
            let text = fs::read_to_string(dir.join(name))?;
            Ok(text
                .lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.to_string()))
                .filter(|(_, l)| !l.trim().is_empty())
                .collect())
        };
        let format_err = |file: &str, line: usize, message: &str| KbError::Format {
            file: file.to_string(),
            line,
            message: message.to_string(),
        };

        for (line, row) in read("entities.tsv")? {
            let cols: Vec<&str> = row.split('\t').collect();
            if cols.len() != 3 {
                return Err(format_err("entities.tsv", line, "expected id<TAB>type<TAB>mentions"));
            }
            let id = EntityId::from(cols[0]);
            if kb.entities.contains_key(&id) {
                return Err(format_err("entities.tsv", line, "duplicate entity id"));
            }
            let mentions: Vec<String> =
                cols[2].split('|').filter(|m| !m.is_empty()).map(str::to_string).collect();
            kb.entities.insert(id, EntityInfo { type_label: cols[1].to_string(), mentions });
        }

        for (line, row) in read("predicates.tsv")? {
            let cols: Vec<&str> = row.split('\t').collect();
            if cols.len() != 2 {
                return Err(format_err("predicates.tsv", line, "expected id<TAB>name"));
            }
            let id = PredicateId::from(cols[0]);
            if kb.predicates.contains_key(&id) {
                return Err(format_err("predicates.tsv", line, "duplicate predicate id"));
            }
            kb.predicates.insert(id, cols[1].to_string());
        }

        for (line, row) in read("triples.tsv")? {
            let cols: Vec<&str> = row.split('\t').collect();
            if cols.len() != 3 {
                return Err(format_err("triples.tsv", line, "expected s<TAB>p<TAB>o"));
            }
            let t = Triple::new(cols[0], cols[1], cols[2]);
            kb.check_triple(&t).map_err(|id| KbError::Dangling {
                file: "triples.tsv".to_string(),
                line,
                id,
            })?;
            kb.insert_triple(t);
        }
        Ok(kb)
    }

    /// Writes the three TSV files into `dir` with canonically sorted rows, so
    /// `load(save(kb))` reproduces `kb` byte for byte.
    pub fn save(&self, dir: &Path) -> Result<(), KbError> {
        fs::create_dir_all(dir)?;
        let write = |name: &str, body: String| -> Result<(), std::io::Error> {
            let tmp = dir.join(format!(".{name}.tmp"));
            let mut f = fs::File::create(&tmp)?;
            f.write_all(body.as_bytes())?;
            f.sync_all()?;
            fs::rename(tmp, dir.join(name))
        };

        let mut out = String::new();
        for (id, info) in &self.entities {
            out.push_str(&format!("{id}\t{}\t{}\n", info.type_label, info.mentions.join("|")));
        }
        write("entities.tsv", out)?;

        let mut out = String::new();
        for (id, name) in &self.predicates {
            out.push_str(&format!("{id}\t{name}\n"));
        }
        write("predicates.tsv", out)?;

        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&format!("{}\t{}\t{}\n", t.subject, t.predicate, t.object));
        }
        write("triples.tsv", out)?;
        Ok(())
    }

    pub fn has_entity(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn has_predicate(&self, id: &PredicateId) -> bool {
        self.predicates.contains_key(id)
    }

    pub fn entity_type(&self, id: &EntityId) -> Option<&str> {
        self.entities.get(id).map(|i| i.type_label.as_str())
    }

    pub fn mentions(&self, id: &EntityId) -> &[String] {
        self.entities.get(id).map(|i| i.mentions.as_slice()).unwrap_or(&[])
    }

    pub fn predicate_name(&self, id: &PredicateId) -> Option<&str> {
        self.predicates.get(id).map(String::as_str)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.keys()
    }

    pub fn predicate_ids(&self) -> impl Iterator<Item = &PredicateId> {
        self.predicates.keys()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn predicate_count(&self) -> usize {
        self.predicates.len()
    }

    /// Objects reachable from `subject` via `predicate`; `None` when there is
    /// no such edge.
    pub fn objects_of(&self, subject: &EntityId, predicate: &PredicateId) -> Option<&BTreeSet<EntityId>> {
        self.forward.get(subject)?.get(predicate)
    }

    /// Union of `objects_of` over a subject set. Missing subjects contribute
    /// nothing.
    pub fn objects(&self, subjects: &BTreeSet<EntityId>, predicate: &PredicateId) -> BTreeSet<EntityId> {
        let mut out = BTreeSet::new();
        for s in subjects {
            if let Some(objs) = self.objects_of(s, predicate) {
                out.extend(objs.iter().cloned());
            }
        }
        out
    }

    /// Number of `predicate` edges leaving `subject`; 0 when unlinked.
    pub fn out_degree(&self, subject: &EntityId, predicate: &PredicateId) -> u64 {
        self.objects_of(subject, predicate).map_or(0, |o| o.len() as u64)
    }

    /// Entities grouped by type label, each group sorted by id.
    pub fn entities_by_type(&self) -> BTreeMap<&str, Vec<&EntityId>> {
        let mut groups: BTreeMap<&str, Vec<&EntityId>> = BTreeMap::new();
        for (id, info) in &self.entities {
            groups.entry(info.type_label.as_str()).or_default().push(id);
        }
        groups
    }

    /// Seeded counterfactual copy: each triple is independently selected with
    /// probability `rate` and its object rewired to a random entity of the
    /// same type. A rewire that would collide with an existing object of the
    /// same subject/predicate keeps the original triple instead, so the triple
    /// count never changes.
    ///
    /// Panics unless `0 < rate < 1`.
    pub fn perturb(&self, seed: u64, rate: f64) -> KnowledgeBase {
        assert!(
            rate > 0.0 && rate < 1.0,
            "perturbation rate must lie strictly between 0 and 1, got {rate}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let by_type = self.entities_by_type();

        let mut out = KnowledgeBase {
            entities: self.entities.clone(),
            predicates: self.predicates.clone(),
            triples: BTreeSet::new(),
            forward: BTreeMap::new(),
        };

        // Selection bits first, in canonical triple order, so that the rewire
        // draws that follow are insensitive to how collisions resolve.
        let triples: Vec<&Triple> = self.triples.iter().collect();
        let selected: Vec<bool> = triples.iter().map(|_| rng.gen::<f64>() < rate).collect();

        // Objects already spoken for per (subject, predicate): all original
        // objects plus rewires chosen so far. Keeping rewires off the original
        // objects guarantees every kept original still fits.
        let mut taken: BTreeMap<(&EntityId, &PredicateId), BTreeSet<EntityId>> = BTreeMap::new();
        for t in &triples {
            taken.entry((&t.subject, &t.predicate)).or_default().insert(t.object.clone());
        }

        for (t, sel) in triples.iter().zip(&selected) {
            let replacement = if *sel {
                let class = self
                    .entity_type(&t.object)
                    .and_then(|ty| by_type.get(ty))
                    .expect("object type class");
                let cand = class[rng.gen_range(0..class.len())].clone();
                let slot = taken.get_mut(&(&t.subject, &t.predicate)).expect("slot");
                if slot.contains(&cand) {
                    None // collision (possibly with the original itself): keep
                } else {
                    slot.insert(cand.clone());
                    Some(cand)
                }
            } else {
                None
            };
            let new = match replacement {
                Some(obj) => Triple { subject: t.subject.clone(), predicate: t.predicate.clone(), object: obj },
                None => (*t).clone(),
            };
            out.insert_triple(new);
        }
        out
    }
}
