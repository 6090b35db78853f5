//! Synthetic knowledge base and question generator.
//!
//! A fixed schema — nine entity types, nineteen relational predicates plus
//! `is a` — is instantiated at a configurable scale. Every question is built
//! from a hidden gold logical form that is executed to produce the answer, so
//! datasets carry exact weak supervision plus the (normally unused) gold form
//! for diagnostics. Question text is formulaic but carries consistent cue
//! words ("or", "and also", "more than", "how many", ...) per operator.
//!
//! Question types differ deliberately in gold-form depth: simple lookups sit
//! at serialized size 5, while logical compositions, filtered superlatives,
//! and comparative counts sit at sizes 8-11 where an uninformed enumerator's
//! budget runs out.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::QuestionType;
use crate::executor::{self, Answer};
use crate::grammar::{LfNode, LogicalForm, Op};
use crate::kb::{EntityId, EntityRecord, KnowledgeBase, PredicateId, Triple};
use crate::search::ConstantPool;

/// One question with its weak label and diagnostic gold form.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub qid: String,
    pub tokens: Vec<String>,
    pub qtype: QuestionType,
    pub pool: ConstantPool,
    pub gold_answer: Answer,
    /// Hidden gold form. Stripped from the pipeline view of the dataset;
    /// only evaluation tooling may read it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_lf: Option<LogicalForm>,
}

impl QuestionRecord {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Train/dev/test question sets.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Dataset {
    pub train: Vec<QuestionRecord>,
    pub dev: Vec<QuestionRecord>,
    pub test: Vec<QuestionRecord>,
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "dev", "test"];

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[QuestionRecord]> {
        match name {
            "train" => Some(&self.train),
            "dev" => Some(&self.dev),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &QuestionRecord> {
        self.train.iter().chain(self.dev.iter()).chain(self.test.iter())
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `train.jsonl` / `dev.jsonl` / `test.jsonl` into `dir`. With
    /// `with_gold_lf` false this is the pipeline view: gold forms stripped.
    pub fn save(&self, dir: &Path, with_gold_lf: bool) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for name in SPLIT_NAMES {
            let records = self.split(name).expect("known split");
            write_questions(&dir.join(format!("{name}.jsonl")), records, with_gold_lf)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> std::io::Result<Dataset> {
        Ok(Dataset {
            train: read_questions(&dir.join("train.jsonl"))?,
            dev: read_questions(&dir.join("dev.jsonl"))?,
            test: read_questions(&dir.join("test.jsonl"))?,
        })
    }
}

pub fn write_questions(
    path: &Path,
    records: &[QuestionRecord],
    with_gold_lf: bool,
) -> std::io::Result<()> {
    let mut body = String::new();
    for r in records {
        let mut r = r.clone();
        if !with_gold_lf {
            r.gold_lf = None;
        }
        body.push_str(&serde_json::to_string(&r).expect("records serialize"));
        body.push('\n');
    }
    crate::metrics::write_atomic(path, body.as_bytes())
}

pub fn read_questions(path: &Path) -> std::io::Result<Vec<QuestionRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionRecord = serde_json::from_str(line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Generator scale and seeding.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    /// Regular entities, distributed over the nine types by fixed weights.
    pub entity_count: usize,
    /// Total predicates including `is a`; the first `n-1` schema relations.
    pub predicate_count: usize,
    /// Scales mean out-degree; 1.0 gives roughly 50k triples at full scale.
    pub triple_density: f64,
    pub questions_per_type: usize,
    /// Resampling bound per question before giving up.
    pub max_retries: usize,
    pub train_fraction: f64,
    pub dev_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            seed: 17,
            entity_count: 5000,
            predicate_count: 20,
            triple_density: 1.0,
            questions_per_type: 286,
            max_retries: 60,
            train_fraction: 0.8,
            dev_fraction: 0.1,
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("type {type_label} supports at most {have} entities, asked for {need}")]
    Capacity { type_label: String, need: usize, have: usize },
    #[error("could not instantiate a {qtype} question after {retries} attempts")]
    Exhausted { qtype: QuestionType, retries: usize },
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

struct TypeSpec {
    label: &'static str,
    singular: &'static str,
    plural: &'static str,
    weight: f64,
}

const TYPES: [TypeSpec; 9] = [
    TypeSpec { label: "person", singular: "person", plural: "people", weight: 0.30 },
    TypeSpec { label: "city", singular: "city", plural: "cities", weight: 0.16 },
    TypeSpec { label: "country", singular: "country", plural: "countries", weight: 0.06 },
    TypeSpec { label: "river", singular: "river", plural: "rivers", weight: 0.08 },
    TypeSpec { label: "occupation", singular: "occupation", plural: "occupations", weight: 0.04 },
    TypeSpec { label: "company", singular: "company", plural: "companies", weight: 0.10 },
    TypeSpec { label: "university", singular: "university", plural: "universities", weight: 0.06 },
    TypeSpec { label: "movie", singular: "movie", plural: "movies", weight: 0.12 },
    TypeSpec { label: "team", singular: "team", plural: "teams", weight: 0.08 },
];

struct PredSpec {
    name: &'static str,
    /// Relational phrase used inside question templates.
    rel: &'static str,
    /// Counting noun for comparative templates ("more than 2 trade partners").
    counter: &'static str,
    subject: &'static str,
    object: &'static str,
}

const PREDICATES: [PredSpec; 19] = [
    PredSpec { name: "born in", rel: "born in", counter: "birth cities", subject: "person", object: "city" },
    PredSpec { name: "lives in", rel: "living in", counter: "home cities", subject: "person", object: "city" },
    PredSpec { name: "works at", rel: "working at", counter: "employers", subject: "person", object: "company" },
    PredSpec { name: "works as", rel: "working as", counter: "listed occupations", subject: "person", object: "occupation" },
    PredSpec { name: "studied at", rel: "trained at", counter: "alma maters", subject: "person", object: "university" },
    PredSpec { name: "acted in", rel: "credited in", counter: "movie credits", subject: "person", object: "movie" },
    PredSpec { name: "supports", rel: "cheering for", counter: "followed teams", subject: "person", object: "team" },
    PredSpec { name: "visited", rel: "known to have visited", counter: "stamped countries", subject: "person", object: "country" },
    PredSpec { name: "located in", rel: "located in", counter: "claiming countries", subject: "city", object: "country" },
    PredSpec { name: "twinned with", rel: "twinned with", counter: "twin cities", subject: "city", object: "city" },
    PredSpec { name: "flows through", rel: "flowing through", counter: "crossed countries", subject: "river", object: "country" },
    PredSpec { name: "trades with", rel: "trading with", counter: "trade partners", subject: "country", object: "country" },
    PredSpec { name: "borders", rel: "bordering", counter: "border neighbors", subject: "country", object: "country" },
    PredSpec { name: "filmed in", rel: "filmed in", counter: "shoot cities", subject: "movie", object: "city" },
    PredSpec { name: "set in", rel: "set in", counter: "setting countries", subject: "movie", object: "country" },
    PredSpec { name: "based in", rel: "registered in", counter: "office cities", subject: "company", object: "city" },
    PredSpec { name: "partnered with", rel: "partnered with", counter: "campus partners", subject: "company", object: "university" },
    PredSpec { name: "sponsors", rel: "bankrolling", counter: "sponsored teams", subject: "company", object: "team" },
    PredSpec { name: "plays in", rel: "hosted in", counter: "home cities", subject: "team", object: "city" },
];

pub const ISA_NAME: &str = "is a";

/// The `is a` predicate of a generated base, found by name.
pub fn isa_predicate(kb: &KnowledgeBase) -> Option<PredicateId> {
    kb.predicate_ids().find(|p| kb.predicate_name(p) == Some(ISA_NAME)).cloned()
}

// Name pools. Pools are disjoint enough that full mention strings never
// collide across entities; a debug assertion enforces it at build time.

const PERSON_FIRST: [&str; 40] = [
    "ada", "bo", "cyr", "dona", "edri", "fay", "gil", "hana", "ivo", "jun", "kira", "lars",
    "mira", "nilo", "ola", "pia", "quin", "rafa", "sera", "timo", "ursa", "vito", "wren", "xeni",
    "yara", "zeno", "abel", "brin", "cleo", "dara", "eron", "fern", "gwen", "hale", "iris",
    "jory", "kane", "lena", "moss", "nora",
];
const PERSON_LAST: [&str; 40] = [
    "abara", "bryce", "calder", "droste", "ellert", "fabian", "garrel", "hollis", "ibsen",
    "jarvis", "keller", "lindov", "marek", "nylund", "oberon", "prewitt", "quessa", "rundel",
    "sorel", "tverin", "ulman", "vance", "welby", "xirau", "ybarra", "zelter", "ashdown",
    "bellweather", "crane", "duval", "ekren", "farrow", "gessler", "hartley", "inglis", "joven",
    "kasprzak", "lorimer", "madsen", "norrell",
];
const CITY_A: [&str; 30] = [
    "ash", "bel", "cor", "dun", "els", "fen", "gar", "hol", "ing", "jor", "kel", "lun", "mor",
    "nar", "ost", "pel", "quor", "ras", "sel", "tor", "ulm", "ver", "wil", "xan", "yor", "zel",
    "bran", "crest", "dov", "fal",
];
const CITY_B: [&str; 30] = [
    "ford", "haven", "dale", "mont", "wick", "stead", "burgh", "port", "mere", "gate", "field",
    "holm", "bury", "cliff", "moor", "shore", "vale", "water", "bridge", "minster", "combe",
    "thorpe", "leigh", "garth", "hithe", "strand", "marsh", "beck", "rigg", "fell",
];
const COUNTRY_A: [&str; 18] = [
    "vel", "nor", "est", "bal", "cas", "dor", "fir", "gal", "hes", "ist", "jut", "kar", "lum",
    "mav", "ned", "ops", "pyr", "ruv",
];
const COUNTRY_B: [&str; 17] = [
    "garia", "landia", "markia", "stania", "nia", "via", "donia", "vania", "thia", "rica",
    "lundia", "heimia", "gardia", "moria", "tania", "sia", "covia",
];
const RIVER_A: [&str; 20] = [
    "tor", "ser", "val", "mir", "kal", "dren", "osk", "pav", "rud", "silt", "tam", "ulv", "ver",
    "wen", "yal", "zan", "bram", "cald", "durn", "fisk",
];
const RIVER_B: [&str; 20] = [
    "en", "ak", "ina", "ova", "eth", "ur", "im", "osa", "ette", "ann", "ika", "ona", "ev", "ul",
    "esk", "ara", "ine", "oss", "ey", "ia",
];
const OCC_ADJ: [&str; 15] = [
    "senior", "chief", "master", "deputy", "junior", "royal", "staff", "lead", "night",
    "harbor", "guild", "court", "border", "market", "festival",
];
const OCC_ROLE: [&str; 14] = [
    "broker", "mason", "scribe", "warden", "smith", "clerk", "pilot", "ranger", "curator",
    "bard", "envoy", "weaver", "falconer", "gilder",
];
const COMPANY_A: [&str; 24] = [
    "halcyon", "vertex", "emberline", "quartzite", "argent", "borealis", "cindra", "dovela",
    "eastmere", "fennic", "gildren", "hartwell", "ironvale", "juniper", "kestrel", "larkspur",
    "meridian", "northgate", "opaline", "pinnacle", "quillon", "rosewood", "sablecrest",
    "tidewater",
];
const COMPANY_B: [&str; 22] = [
    "logistics", "holdings", "freight", "systems", "mills", "labs", "traders", "works",
    "foundry", "lines", "group", "partners", "motors", "textiles", "media", "farms", "tools",
    "banking", "shipping", "salt", "timber", "glass",
];
const UNI_A: [&str; 18] = [
    "kel", "mar", "tren", "vos", "hald", "rin", "sten", "lor", "pax", "quil", "ber", "cran",
    "dray", "fenwick", "grat", "hollow", "ives", "jarl",
];
const UNI_B: [&str; 17] = [
    "more", "wick", "ton", "by", "ham", "ley", "worth", "stow", "den", "sett", "ridge", "holt",
    "mead", "croft", "burn", "shaw", "tree",
];
const MOVIE_ADJ: [&str; 25] = [
    "silent", "crimson", "last", "golden", "hidden", "iron", "broken", "distant", "burning",
    "frozen", "silver", "lonely", "wild", "gentle", "dark", "bright", "final", "first", "lost",
    "quiet", "savage", "tender", "hollow", "painted", "shattered",
];
const MOVIE_NOUN: [&str; 25] = [
    "harbor", "voyage", "garden", "empire", "signal", "forest", "promise", "circus", "orchard",
    "tides", "lantern", "meadow", "compass", "bastion", "mirage", "paradox", "carnival",
    "monsoon", "aurora", "citadel", "prairie", "sonata", "eclipse", "labyrinth", "horizon",
];
const TEAM_COLOR: [&str; 20] = [
    "red", "blue", "green", "black", "white", "amber", "violet", "copper", "jade", "scarlet",
    "cobalt", "ivory", "onyx", "coral", "slate", "bronze", "teal", "maroon", "umber", "pearl",
];
const TEAM_ANIMAL: [&str; 20] = [
    "stags", "wolves", "ravens", "otters", "lynxes", "herons", "badgers", "vipers", "falcons",
    "bisons", "martens", "ibexes", "pikes", "cranes", "boars", "hornets", "aurochs", "magpies",
    "shrikes", "plovers",
];

fn type_mention(label: &str, i: usize) -> Option<String> {
    let two = |a: &[&str], b: &[&str]| {
        (i < a.len() * b.len()).then(|| format!("{} {}", a[i % a.len()], b[i / a.len()]))
    };
    let joined = |a: &[&str], b: &[&str]| {
        (i < a.len() * b.len()).then(|| format!("{}{}", a[i % a.len()], b[i / a.len()]))
    };
    match label {
        "person" => two(&PERSON_FIRST, &PERSON_LAST),
        "city" => joined(&CITY_A, &CITY_B),
        "country" => joined(&COUNTRY_A, &COUNTRY_B),
        "river" => joined(&RIVER_A, &RIVER_B).map(|s| format!("{s} river")),
        "occupation" => two(&OCC_ADJ, &OCC_ROLE),
        "company" => two(&COMPANY_A, &COMPANY_B),
        "university" => joined(&UNI_A, &UNI_B).map(|s| format!("university of {s}")),
        "movie" => two(&MOVIE_ADJ, &MOVIE_NOUN).map(|s| format!("the {s}")),
        "team" => two(&TEAM_COLOR, &TEAM_ANIMAL),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// World building
// ---------------------------------------------------------------------------

struct World {
    kb: KnowledgeBase,
    /// Relational predicate ids in schema order.
    rels: Vec<PredicateId>,
    isa: PredicateId,
    /// Class entity per type label.
    class_of: BTreeMap<&'static str, EntityId>,
    /// Subjects with at least one edge, per relational predicate.
    subjects: BTreeMap<PredicateId, Vec<EntityId>>,
    /// object -> subjects, per relational predicate.
    by_object: BTreeMap<PredicateId, BTreeMap<EntityId, Vec<EntityId>>>,
    /// Members per type label (regular entities only), sorted by id.
    members: BTreeMap<&'static str, Vec<EntityId>>,
    /// All regular entity ids.
    regulars: Vec<EntityId>,
    spec_of: BTreeMap<PredicateId, &'static PredSpec>,
}

impl World {
    fn pred_spec(&self, p: &PredicateId) -> &'static PredSpec {
        self.spec_of[p]
    }

    fn mention(&self, e: &EntityId) -> String {
        self.kb.mentions(e)[0].clone()
    }

    fn plural_of_object(&self, p: &PredicateId) -> &'static str {
        let obj = self.pred_spec(p).object;
        TYPES.iter().find(|t| t.label == obj).expect("known type").plural
    }

    fn degree(&self, e: &EntityId, p: &PredicateId) -> u64 {
        self.kb.out_degree(e, p)
    }
}

/// Probability that a subject clones the object set of an earlier same-predicate
/// subject; these duplicate profiles guarantee inject_ambiguity always finds
/// entity pairs with identical relation images.
const DUP_PROFILE_RATE: f64 = 0.08;
/// Probability of a subject having no edges under a predicate.
const ZERO_DEGREE_RATE: f64 = 0.15;

fn build_world(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Result<World, GenError> {
    if cfg.predicate_count < 2 || cfg.predicate_count > PREDICATES.len() + 1 {
        return Err(GenError::Config(format!(
            "predicate_count must be in 2..={}, got {}",
            PREDICATES.len() + 1,
            cfg.predicate_count
        )));
    }
    if cfg.entity_count < TYPES.len() {
        return Err(GenError::Config("entity_count must cover all nine types".into()));
    }
    let f_ok = |f: f64| f > 0.0 && f < 1.0;
    if !f_ok(cfg.train_fraction) || !f_ok(cfg.dev_fraction)
        || cfg.train_fraction + cfg.dev_fraction >= 1.0
    {
        return Err(GenError::Config("split fractions must be positive and sum below 1".into()));
    }
    if cfg.triple_density <= 0.0 {
        return Err(GenError::Config("triple_density must be positive".into()));
    }

    // Per-type entity counts proportional to weights, exact total.
    let mut counts: Vec<usize> = TYPES
        .iter()
        .map(|t| ((cfg.entity_count as f64) * t.weight).floor().max(1.0) as usize)
        .collect();
    let mut total: usize = counts.iter().sum();
    let mut i = 0;
    while total < cfg.entity_count {
        let j = i % counts.len();
        counts[j] += 1;
        total += 1;
        i += 1;
    }
    while total > cfg.entity_count {
        let j = i % counts.len();
        if counts[j] > 1 {
            counts[j] -= 1;
            total -= 1;
        }
        i += 1;
    }

    let mut entities: Vec<EntityRecord> = Vec::new();
    let mut members: BTreeMap<&'static str, Vec<EntityId>> = BTreeMap::new();
    let mut next_id = 1usize;
    let mut seen_mentions: BTreeSet<String> = BTreeSet::new();
    for (t, n) in TYPES.iter().zip(&counts) {
        for k in 0..*n {
            let mention = type_mention(t.label, k).ok_or_else(|| GenError::Capacity {
                type_label: t.label.to_string(),
                need: *n,
                have: k,
            })?;
            debug_assert!(seen_mentions.insert(mention.clone()), "mention clash: {mention}");
            let id = EntityId::from(format!("Q{next_id}"));
            next_id += 1;
            members.entry(t.label).or_default().push(id.clone());
            entities.push(EntityRecord {
                id,
                type_label: t.label.to_string(),
                mentions: vec![mention],
            });
        }
    }
    let mut class_of = BTreeMap::new();
    for (k, t) in TYPES.iter().enumerate() {
        let id = EntityId::from(format!("T{}", k + 1));
        class_of.insert(t.label, id.clone());
        entities.push(EntityRecord {
            id,
            type_label: "class".to_string(),
            mentions: vec![t.singular.to_string(), t.plural.to_string()],
        });
    }

    let n_rel = cfg.predicate_count - 1;
    let mut predicates: Vec<(PredicateId, String)> = Vec::new();
    let mut rels = Vec::new();
    let mut spec_of = BTreeMap::new();
    for (k, spec) in PREDICATES.iter().take(n_rel).enumerate() {
        let id = PredicateId::from(format!("P{}", k + 1));
        rels.push(id.clone());
        spec_of.insert(id.clone(), spec);
        predicates.push((id, spec.name.to_string()));
    }
    let isa = PredicateId::from(format!("P{}", n_rel + 1));
    predicates.push((isa.clone(), ISA_NAME.to_string()));

    // Degree model: zero with fixed probability, else 1 + Binomial(5, c).
    let c = (0.4 * cfg.triple_density).clamp(0.02, 0.9);
    let draw_degree = |rng: &mut ChaCha8Rng| -> usize {
        if rng.gen::<f64>() < ZERO_DEGREE_RATE {
            0
        } else {
            1 + (0..5).filter(|_| rng.gen::<f64>() < c).count()
        }
    };

    let mut triples: Vec<Triple> = Vec::new();
    for p in &rels {
        let spec = spec_of[p];
        let subjects = &members[spec.subject];
        let objects = &members[spec.object];
        // Object sets of earlier subjects, for duplicate profiles.
        let mut profiles: Vec<Vec<EntityId>> = Vec::new();
        for s in subjects {
            let objs: Vec<EntityId> = if !profiles.is_empty() && rng.gen::<f64>() < DUP_PROFILE_RATE
            {
                profiles[rng.gen_range(0..profiles.len())].clone()
            } else {
                let k = draw_degree(rng).min(objects.len().saturating_sub(1));
                let mut picked: BTreeSet<usize> = BTreeSet::new();
                let mut guard = 0;
                while picked.len() < k && guard < 20 * k + 20 {
                    let j = rng.gen_range(0..objects.len());
                    if objects[j] != *s {
                        picked.insert(j);
                    }
                    guard += 1;
                }
                picked.iter().map(|j| objects[*j].clone()).collect()
            };
            if !objs.is_empty() {
                profiles.push(objs.clone());
            }
            for o in objs {
                triples.push(Triple { subject: s.clone(), predicate: p.clone(), object: o });
            }
        }
    }
    let mut regulars = Vec::new();
    for t in &TYPES {
        for e in &members[t.label] {
            triples.push(Triple {
                subject: class_of[t.label].clone(),
                predicate: isa.clone(),
                object: e.clone(),
            });
            regulars.push(e.clone());
        }
    }

    let kb = KnowledgeBase::from_parts(entities, predicates, triples)
        .expect("generated ids are consistent");

    let mut subjects: BTreeMap<PredicateId, Vec<EntityId>> = BTreeMap::new();
    let mut by_object: BTreeMap<PredicateId, BTreeMap<EntityId, Vec<EntityId>>> = BTreeMap::new();
    for t in kb.triples() {
        if t.predicate == isa {
            continue;
        }
        let subs = subjects.entry(t.predicate.clone()).or_default();
        if subs.last() != Some(&t.subject) {
            subs.push(t.subject.clone());
        }
        by_object
            .entry(t.predicate.clone())
            .or_default()
            .entry(t.object.clone())
            .or_default()
            .push(t.subject.clone());
    }
    for subs in subjects.values_mut() {
        subs.dedup();
    }

    Ok(World { kb, rels, isa, class_of, subjects, by_object, members, regulars, spec_of })
}

// ---------------------------------------------------------------------------
// Question templates
// ---------------------------------------------------------------------------
//
// Text is formulaic, but each operator carries a stable cue ("or" for union,
// "and also" for intersection, "but not" for difference, "more than" /
// "fewer than" / "exactly" for comparisons, "most" / "fewest" for
// superlatives, "how many" / "count" for counting, "is it true" / "whether"
// for verification). Relational phrases are participles so one surface frame
// fits every predicate. In verification questions the candidate object is
// always mentioned before the subject so mention order is predictable.

const SD_T: [&str; 3] = [
    "which {objp} is {s} {rel}",
    "find the {objp} that {s} is {rel}",
    "tell me every {objp} {s} is {rel}",
];
const V_T: [&str; 3] = [
    "is {o} one of the {objp} {s} is {rel}",
    "is it true that {o} is among the {objp} {s} is {rel}",
    "check whether {o} belongs to the {objp} {s} is {rel}",
];
const LOG_UNION_T: [&str; 3] = [
    "which {objp} is {a} or {b} {rel}",
    "list the {objp} that {a} or {b} is {rel}",
    "find every {objp} where {a} or {b} is {rel}",
];
const LOG_INTER_T: [&str; 3] = [
    "which {objp} is both {a} and also {b} {rel}",
    "list the {objp} that both {a} and also {b} are {rel}",
    "find the {objp} where {a} and also {b} are {rel}",
];
const LOG_DIFF_T: [&str; 3] = [
    "which {objp} is {a} but not {b} {rel}",
    "list the {objp} that {a} but not {b} is {rel}",
    "find the {objp} where {a} but not {b} is {rel}",
];
const QC_SIMPLE_T: [&str; 3] = [
    "how many {objp} is {s} {rel}",
    "count the {objp} that {s} is {rel}",
    "what is the number of {objp} {s} is {rel}",
];
const QC_UNION_T: [&str; 2] = [
    "how many {objp} is {a} or {b} {rel}",
    "count the {objp} that {a} or {b} is {rel}",
];
const QS_MAX_T: [&str; 3] = [
    "which {clp} has the most {cn}",
    "among all {clp} which one has the highest count of {cn}",
    "which of the {clp} holds the most {cn}",
];
const QS_MIN_FILTER_T: [&str; 2] = [
    "among the {clp} with more than {n} {cnf} which has the fewest {cn}",
    "of the {clp} having more than {n} {cnf} which one has the lowest count of {cn}",
];
const QS_MAX_FILTER_T: [&str; 2] = [
    "among the {clp} with more than {n} {cnf} which has the most {cn}",
    "of the {clp} having more than {n} {cnf} which one has the highest count of {cn}",
];
const CS_G_T: [&str; 2] =
    ["which {clp} have more than {n} {cn}", "list the {clp} with more than {n} {cn}"];
const CS_L_T: [&str; 2] =
    ["which {clp} have fewer than {n} {cn}", "list the {clp} with fewer than {n} {cn}"];
const CS_E_T: [&str; 2] =
    ["which {clp} have exactly {n} {cn}", "list the {clp} with exactly {n} {cn}"];
const CC_G_T: [&str; 2] =
    ["how many {clp} have more than {n} {cn}", "count the {clp} with more than {n} {cn}"];
const CC_L_T: [&str; 2] =
    ["how many {clp} have fewer than {n} {cn}", "count the {clp} with fewer than {n} {cn}"];
const CC_E_T: [&str; 2] =
    ["how many {clp} have exactly {n} {cn}", "count the {clp} with exactly {n} {cn}"];

fn render(tpl: &str, subs: &[(&str, &str)]) -> Vec<String> {
    let mut s = tpl.to_string();
    for (k, v) in subs {
        s = s.replace(&format!("{{{k}}}"), v);
    }
    debug_assert!(!s.contains('{'), "unfilled placeholder in: {s}");
    s.split_whitespace().map(str::to_string).collect()
}

fn find_node(e: &EntityId, p: &PredicateId) -> LfNode {
    LfNode::new(Op::Find, vec![LfNode::singleton(e.clone()), LfNode::predicate(p.clone())])
}

fn rooted(start: Op, child: LfNode) -> LogicalForm {
    LogicalForm { root: LfNode::new(start, vec![child]) }
}

/// Builds a pool with gold constants first (entities keep mention order; the
/// predicate list is shuffled whole so position never identifies the gold).
#[allow(clippy::too_many_arguments)]
fn make_pool(
    rng: &mut ChaCha8Rng,
    regulars: &[EntityId],
    rels: &[PredicateId],
    gold_ents: &[EntityId],
    gold_preds: &[PredicateId],
    numbers: &[u64],
    ent_extra: usize,
    pred_extra: usize,
) -> ConstantPool {
    let mut ents: Vec<EntityId> = gold_ents.to_vec();
    let mut guard = 0;
    while ents.len() < gold_ents.len() + ent_extra && guard < 500 {
        let cand = &regulars[rng.gen_range(0..regulars.len())];
        if !ents.contains(cand) {
            ents.push(cand.clone());
        }
        guard += 1;
    }
    let mut preds: Vec<PredicateId> = gold_preds.to_vec();
    let mut guard = 0;
    while preds.len() < gold_preds.len() + pred_extra && guard < 500 {
        let cand = &rels[rng.gen_range(0..rels.len())];
        if !preds.contains(cand) {
            preds.push(cand.clone());
        }
        guard += 1;
    }
    preds.shuffle(rng);
    ConstantPool { entities: ents, predicates: preds, numbers: numbers.to_vec() }
}

// ---------------------------------------------------------------------------
// Question builders
// ---------------------------------------------------------------------------

struct QuestionBuilder<'a> {
    world: &'a World,
    /// Relational predicates that actually have subjects.
    active: Vec<PredicateId>,
    /// Predicates grouped by subject type, for filtered superlatives.
    by_subject_type: BTreeMap<&'static str, Vec<PredicateId>>,
    /// Per predicate: objects shared by at least two subjects.
    shared_objects: BTreeMap<PredicateId, Vec<EntityId>>,
}

impl<'a> QuestionBuilder<'a> {
    fn new(world: &'a World) -> QuestionBuilder<'a> {
        let active: Vec<PredicateId> = world
            .rels
            .iter()
            .filter(|p| world.subjects.get(*p).is_some_and(|v| v.len() >= 2))
            .cloned()
            .collect();
        let mut by_subject_type: BTreeMap<&'static str, Vec<PredicateId>> = BTreeMap::new();
        for p in &active {
            by_subject_type.entry(world.pred_spec(p).subject).or_default().push(p.clone());
        }
        let mut shared_objects = BTreeMap::new();
        for p in &active {
            let objs: Vec<EntityId> = world.by_object[p]
                .iter()
                .filter(|(_, subs)| subs.len() >= 2)
                .map(|(o, _)| o.clone())
                .collect();
            shared_objects.insert(p.clone(), objs);
        }
        QuestionBuilder { world, active, by_subject_type, shared_objects }
    }

    fn eval(&self, lf: &LogicalForm) -> Answer {
        executor::evaluate(lf, &self.world.kb).expect("generated gold form executes")
    }

    fn pool(
        &self,
        rng: &mut ChaCha8Rng,
        gold_ents: &[EntityId],
        gold_preds: &[PredicateId],
        numbers: &[u64],
        ent_extra: usize,
        pred_extra: usize,
    ) -> ConstantPool {
        make_pool(
            rng,
            &self.world.regulars,
            &self.active,
            gold_ents,
            gold_preds,
            numbers,
            ent_extra,
            pred_extra,
        )
    }

    fn pick_pred(&self, rng: &mut ChaCha8Rng) -> &PredicateId {
        &self.active[rng.gen_range(0..self.active.len())]
    }

    fn two_subjects(&self, rng: &mut ChaCha8Rng, p: &PredicateId) -> (&EntityId, &EntityId) {
        let subs = &self.world.subjects[p];
        let i = rng.gen_range(0..subs.len());
        let mut j = rng.gen_range(0..subs.len() - 1);
        if j >= i {
            j += 1;
        }
        (&subs[i], &subs[j])
    }

    fn build(
        &self,
        qtype: QuestionType,
        rng: &mut ChaCha8Rng,
    ) -> Option<(Vec<String>, ConstantPool, LogicalForm)> {
        let w = self.world;
        match qtype {
            QuestionType::SimpleDirect => {
                let p = self.pick_pred(rng);
                let subs = &w.subjects[p];
                let s = &subs[rng.gen_range(0..subs.len())];
                let spec = w.pred_spec(p);
                let tokens = render(
                    SD_T[rng.gen_range(0..SD_T.len())],
                    &[
                        ("objp", w.plural_of_object(p)),
                        ("s", &w.mention(s)),
                        ("rel", spec.rel),
                    ],
                );
                let lf = rooted(Op::StartSet, find_node(s, p));
                let ent_extra = rng.gen_range(2..=4);
                let pred_extra = rng.gen_range(3..=5);
                let pool =
                    self.pool(rng, &[s.clone()], &[p.clone()], &[], ent_extra, pred_extra);
                Some((tokens, pool, lf))
            }
            QuestionType::Verification => {
                let p = self.pick_pred(rng);
                let spec = w.pred_spec(p);
                let truthy = rng.gen::<f64>() < 0.5;
                let subs = &w.subjects[p];
                let (s, o) = if truthy {
                    let s = subs[rng.gen_range(0..subs.len())].clone();
                    let objs: Vec<&EntityId> =
                        w.kb.objects_of(&s, p).expect("subject has edges").iter().collect();
                    let o = objs[rng.gen_range(0..objs.len())].clone();
                    (s, o)
                } else {
                    let cands = &w.members[spec.subject];
                    let s = cands[rng.gen_range(0..cands.len())].clone();
                    let objs = w.kb.objects_of(&s, p);
                    let pool = &w.members[spec.object];
                    let mut o = None;
                    for _ in 0..30 {
                        let c = &pool[rng.gen_range(0..pool.len())];
                        if !objs.is_some_and(|set| set.contains(c)) && *c != s {
                            o = Some(c.clone());
                            break;
                        }
                    }
                    (s, o?)
                };
                let tokens = render(
                    V_T[rng.gen_range(0..V_T.len())],
                    &[
                        ("o", &w.mention(&o)),
                        ("objp", w.plural_of_object(p)),
                        ("s", &w.mention(&s)),
                        ("rel", spec.rel),
                    ],
                );
                let lf = rooted(
                    Op::StartBool,
                    LfNode::new(Op::In, vec![LfNode::entity(o.clone()), find_node(&s, p)]),
                );
                let ent_extra = rng.gen_range(1..=3);
                let pred_extra = rng.gen_range(1..=3);
                let pool = self.pool(rng, &[o, s], &[p.clone()], &[], ent_extra, pred_extra);
                Some((tokens, pool, lf))
            }
            QuestionType::Logical => {
                let roll = rng.gen::<f64>();
                let p = self.pick_pred(rng).clone();
                let spec = w.pred_spec(&p);
                let (conn, tpls): (Op, &[&str]) = if roll < 0.5 {
                    (Op::Union, &LOG_UNION_T)
                } else if roll < 0.75 {
                    (Op::Inter, &LOG_INTER_T)
                } else {
                    (Op::Diff, &LOG_DIFF_T)
                };
                let (a, b) = if conn == Op::Inter {
                    let shared = &self.shared_objects[&p];
                    if shared.is_empty() {
                        return None;
                    }
                    let o = &shared[rng.gen_range(0..shared.len())];
                    let subs = &w.by_object[&p][o];
                    let i = rng.gen_range(0..subs.len());
                    let mut j = rng.gen_range(0..subs.len() - 1);
                    if j >= i {
                        j += 1;
                    }
                    (subs[i].clone(), subs[j].clone())
                } else {
                    let (a, b) = self.two_subjects(rng, &p);
                    (a.clone(), b.clone())
                };
                let lf = rooted(
                    Op::StartSet,
                    LfNode::new(conn, vec![find_node(&a, &p), find_node(&b, &p)]),
                );
                if let Answer::Entities(s) = self.eval(&lf) {
                    if s.is_empty() {
                        return None;
                    }
                } else {
                    unreachable!("set-rooted gold");
                }
                let tokens = render(
                    tpls[rng.gen_range(0..tpls.len())],
                    &[
                        ("objp", w.plural_of_object(&p)),
                        ("a", &w.mention(&a)),
                        ("b", &w.mention(&b)),
                        ("rel", spec.rel),
                    ],
                );
                let pred_extra = rng.gen_range(1..=2);
                let pool = self.pool(rng, &[a, b], &[p.clone()], &[], 2, pred_extra);
                Some((tokens, pool, lf))
            }
            QuestionType::QuantitativeCount => {
                if rng.gen::<f64>() < 0.6 {
                    let p = self.pick_pred(rng);
                    let subs = &w.subjects[p];
                    let s = &subs[rng.gen_range(0..subs.len())];
                    let spec = w.pred_spec(p);
                    let tokens = render(
                        QC_SIMPLE_T[rng.gen_range(0..QC_SIMPLE_T.len())],
                        &[
                            ("objp", w.plural_of_object(p)),
                            ("s", &w.mention(s)),
                            ("rel", spec.rel),
                        ],
                    );
                    let lf = rooted(
                        Op::StartNum,
                        LfNode::new(Op::Count, vec![find_node(s, p)]),
                    );
                    let ent_extra = rng.gen_range(2..=4);
                    let pred_extra = rng.gen_range(3..=5);
                    let pool =
                        self.pool(rng, &[s.clone()], &[p.clone()], &[], ent_extra, pred_extra);
                    Some((tokens, pool, lf))
                } else {
                    let p = self.pick_pred(rng).clone();
                    let spec = w.pred_spec(&p);
                    let (a, b) = self.two_subjects(rng, &p);
                    let (a, b) = (a.clone(), b.clone());
                    let lf = rooted(
                        Op::StartNum,
                        LfNode::new(
                            Op::Count,
                            vec![LfNode::new(
                                Op::Union,
                                vec![find_node(&a, &p), find_node(&b, &p)],
                            )],
                        ),
                    );
                    let tokens = render(
                        QC_UNION_T[rng.gen_range(0..QC_UNION_T.len())],
                        &[
                            ("objp", w.plural_of_object(&p)),
                            ("a", &w.mention(&a)),
                            ("b", &w.mention(&b)),
                            ("rel", spec.rel),
                        ],
                    );
                    let pred_extra = rng.gen_range(1..=2);
                    let pool = self.pool(rng, &[a, b], &[p.clone()], &[], 2, pred_extra);
                    Some((tokens, pool, lf))
                }
            }
            QuestionType::QuantitativeSet => {
                let roll = rng.gen::<f64>();
                if roll < 0.4 {
                    let p = self.pick_pred(rng).clone();
                    let spec = w.pred_spec(&p);
                    let class = &w.class_of[spec.subject];
                    let lf = rooted(
                        Op::StartSet,
                        LfNode::new(
                            Op::Argmax,
                            vec![find_node(class, &w.isa), LfNode::predicate(p.clone())],
                        ),
                    );
                    let ok = matches!(&self.eval(&lf), Answer::Entities(s)
                        if !s.is_empty() && s.len() <= 25);
                    if !ok {
                        return None;
                    }
                    let clp =
                        TYPES.iter().find(|t| t.label == spec.subject).expect("known").plural;
                    let tokens = render(
                        QS_MAX_T[rng.gen_range(0..QS_MAX_T.len())],
                        &[("clp", clp), ("cn", spec.counter)],
                    );
                    let pool = self.pool(
                        rng,
                        &[class.clone()],
                        &[w.isa.clone(), p.clone()],
                        &[],
                        2,
                        1,
                    );
                    Some((tokens, pool, lf))
                } else {
                    let argmin = roll < 0.7;
                    let (pf, p2) = if argmin {
                        let pf = self.pick_pred(rng).clone();
                        (pf.clone(), pf)
                    } else {
                        let multi: Vec<&&'static str> = self
                            .by_subject_type
                            .iter()
                            .filter(|(_, v)| v.len() >= 2)
                            .map(|(t, _)| t)
                            .collect();
                        if multi.is_empty() {
                            return None;
                        }
                        let t = *multi[rng.gen_range(0..multi.len())];
                        let preds = &self.by_subject_type[t];
                        let i = rng.gen_range(0..preds.len());
                        let mut j = rng.gen_range(0..preds.len() - 1);
                        if j >= i {
                            j += 1;
                        }
                        (preds[i].clone(), preds[j].clone())
                    };
                    let spec_f = w.pred_spec(&pf);
                    let spec_2 = w.pred_spec(&p2);
                    let class = &w.class_of[spec_f.subject];
                    let n = rng.gen_range(1..=3u64);
                    let base = w.members[spec_f.subject]
                        .iter()
                        .filter(|e| w.degree(e, &pf) > n)
                        .count();
                    if base < 2 {
                        return None;
                    }
                    let superl = if argmin { Op::Argmin } else { Op::Argmax };
                    let lf = rooted(
                        Op::StartSet,
                        LfNode::new(
                            superl,
                            vec![
                                LfNode::new(
                                    Op::Greater,
                                    vec![
                                        find_node(class, &w.isa),
                                        LfNode::predicate(pf.clone()),
                                        LfNode::number(n),
                                    ],
                                ),
                                LfNode::predicate(p2.clone()),
                            ],
                        ),
                    );
                    let ok = matches!(&self.eval(&lf), Answer::Entities(s)
                        if !s.is_empty() && s.len() <= 25);
                    if !ok {
                        return None;
                    }
                    let clp =
                        TYPES.iter().find(|t| t.label == spec_f.subject).expect("known").plural;
                    let tpls: &[&str] = if argmin { &QS_MIN_FILTER_T } else { &QS_MAX_FILTER_T };
                    let n_text = n.to_string();
                    let tokens = render(
                        tpls[rng.gen_range(0..tpls.len())],
                        &[
                            ("clp", clp),
                            ("n", n_text.as_str()),
                            ("cnf", spec_f.counter),
                            ("cn", spec_2.counter),
                        ],
                    );
                    let mut gold_preds = vec![w.isa.clone(), pf.clone()];
                    if p2 != pf {
                        gold_preds.push(p2.clone());
                    }
                    // Keep the predicate pool at exactly three entries; the
                    // size-10 gold is only reachable in-budget that way.
                    let pred_extra = 3usize.saturating_sub(gold_preds.len());
                    let pool = self.pool(rng, &[class.clone()], &gold_preds, &[n], 2, pred_extra);
                    Some((tokens, pool, lf))
                }
            }
            QuestionType::ComparativeSet | QuestionType::ComparativeCount => {
                let p = self.pick_pred(rng).clone();
                let spec = w.pred_spec(&p);
                let class = &w.class_of[spec.subject];
                let (cmp, n, tpls): (Op, u64, &[&str]) = match rng.gen_range(0..3) {
                    0 => (
                        Op::Greater,
                        rng.gen_range(1..=4),
                        if qtype == QuestionType::ComparativeSet { &CS_G_T } else { &CC_G_T },
                    ),
                    1 => (
                        Op::Less,
                        rng.gen_range(1..=2),
                        if qtype == QuestionType::ComparativeSet { &CS_L_T } else { &CC_L_T },
                    ),
                    _ => (
                        Op::Equal,
                        rng.gen_range(1..=4),
                        if qtype == QuestionType::ComparativeSet { &CS_E_T } else { &CC_E_T },
                    ),
                };
                let body = LfNode::new(
                    cmp,
                    vec![
                        find_node(class, &w.isa),
                        LfNode::predicate(p.clone()),
                        LfNode::number(n),
                    ],
                );
                let lf = if qtype == QuestionType::ComparativeSet {
                    rooted(Op::StartSet, body)
                } else {
                    rooted(Op::StartNum, LfNode::new(Op::Count, vec![body]))
                };
                let nonempty = match &self.eval(&lf) {
                    Answer::Entities(s) => !s.is_empty(),
                    Answer::Number(k) => *k > 0,
                    Answer::Boolean(_) => unreachable!("comparative gold"),
                };
                if !nonempty {
                    return None;
                }
                let clp = TYPES.iter().find(|t| t.label == spec.subject).expect("known").plural;
                let n_text = n.to_string();
                let tokens = render(
                    tpls[rng.gen_range(0..tpls.len())],
                    &[("clp", clp), ("n", n_text.as_str()), ("cn", spec.counter)],
                );
                let ent_extra = rng.gen_range(2..=4);
                let pred_extra = rng.gen_range(4..=5);
                let pool = self.pool(
                    rng,
                    &[class.clone()],
                    &[w.isa.clone(), p.clone()],
                    &[n],
                    ent_extra,
                    pred_extra,
                );
                Some((tokens, pool, lf))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Top-level generation
// ---------------------------------------------------------------------------

/// Generates a knowledge base and a question dataset from one seed.
pub fn generate(cfg: &GenConfig) -> Result<(KnowledgeBase, Dataset), GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let world = build_world(cfg, &mut rng)?;
    let builder = QuestionBuilder::new(&world);
    if builder.active.is_empty() {
        return Err(GenError::Config("no relational predicate has two subjects".into()));
    }

    let mut qrng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut records = Vec::new();
    let mut qnum = 0usize;
    for qtype in QuestionType::ALL {
        for _ in 0..cfg.questions_per_type {
            let mut built = None;
            for _ in 0..cfg.max_retries.max(1) {
                if let Some(parts) = builder.build(qtype, &mut qrng) {
                    built = Some(parts);
                    break;
                }
            }
            let (tokens, pool, lf) = built.ok_or(GenError::Exhausted {
                qtype,
                retries: cfg.max_retries.max(1),
            })?;
            qnum += 1;
            let gold_answer = builder.eval(&lf);
            records.push(QuestionRecord {
                qid: format!("q{qnum:05}"),
                tokens,
                qtype,
                pool,
                gold_answer,
                gold_lf: Some(lf),
            });
        }
    }

    let mut srng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5350_4c49_5453_4c54);
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut srng);
    let n = records.len();
    let n_train = ((n as f64) * cfg.train_fraction).floor() as usize;
    let n_dev = ((n as f64) * cfg.dev_fraction).floor() as usize;
    let mut slots: Vec<u8> = vec![2; n];
    for (rank, idx) in order.iter().enumerate() {
        slots[*idx] = if rank < n_train {
            0
        } else if rank < n_train + n_dev {
            1
        } else {
            2
        };
    }
    let mut dataset = Dataset::default();
    for (rec, slot) in records.into_iter().zip(&slots) {
        match slot {
            0 => dataset.train.push(rec),
            1 => dataset.dev.push(rec),
            _ => dataset.test.push(rec),
        }
    }
    Ok((world.kb, dataset))
}

/// Rewrites a fraction of union-rooted Logical questions so the two mentioned
/// entities have *identical* relation images: the answer no longer separates
/// the union gold from a single-entity lookup, so search alone cannot tell
/// them apart. Returns the qids that were rewritten.
pub fn inject_ambiguity(
    dataset: &mut Dataset,
    kb: &KnowledgeBase,
    rate: f64,
    seed: u64,
) -> Result<Vec<String>, GenError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(GenError::Config(format!("ambiguity rate must be in [0,1], got {rate}")));
    }
    let isa = isa_predicate(kb);
    let spec_by_name: BTreeMap<&'static str, &'static PredSpec> =
        PREDICATES.iter().map(|s| (s.name, s)).collect();

    // Subject pairs with identical object sets, per relational predicate.
    let mut image: BTreeMap<PredicateId, BTreeMap<&EntityId, BTreeSet<EntityId>>> =
        BTreeMap::new();
    for t in kb.triples() {
        if Some(&t.predicate) == isa.as_ref() {
            continue;
        }
        image
            .entry(t.predicate.clone())
            .or_default()
            .entry(&t.subject)
            .or_default()
            .insert(t.object.clone());
    }
    let mut groups: Vec<(PredicateId, Vec<Vec<EntityId>>)> = Vec::new();
    for (p, subs) in &image {
        let name = match kb.predicate_name(p) {
            Some(n) => n,
            None => continue,
        };
        if !spec_by_name.contains_key(name) {
            continue;
        }
        let mut by_set: BTreeMap<&BTreeSet<EntityId>, Vec<EntityId>> = BTreeMap::new();
        for (s, objs) in subs {
            by_set.entry(objs).or_default().push((*s).clone());
        }
        let shared: Vec<Vec<EntityId>> =
            by_set.into_values().filter(|v| v.len() >= 2).collect();
        if !shared.is_empty() {
            groups.push((p.clone(), shared));
        }
    }
    if groups.is_empty() {
        return Ok(Vec::new());
    }

    let regulars: Vec<EntityId> = kb
        .entity_ids()
        .filter(|e| kb.entity_type(e) != Some("class"))
        .cloned()
        .collect();
    let rels: Vec<PredicateId> =
        kb.predicate_ids().filter(|p| Some(*p) != isa.as_ref()).cloned().collect();

    let mut eligible: Vec<(usize, usize)> = Vec::new();
    for (si, name) in SPLIT_NAMES.iter().enumerate() {
        for (i, rec) in dataset.split(name).expect("known split").iter().enumerate() {
            let unionish = rec.qtype == QuestionType::Logical
                && rec
                    .gold_lf
                    .as_ref()
                    .is_some_and(|lf| lf.root.children.first().map(|c| c.op) == Some(Op::Union));
            if unionish {
                eligible.push((si, i));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    let take = ((eligible.len() as f64) * rate).floor() as usize;

    let mut modified = Vec::new();
    for (si, i) in eligible.into_iter().take(take) {
        let (p, shared) = &groups[rng.gen_range(0..groups.len())];
        let group = &shared[rng.gen_range(0..shared.len())];
        let ai = rng.gen_range(0..group.len());
        let mut bi = rng.gen_range(0..group.len() - 1);
        if bi >= ai {
            bi += 1;
        }
        let (a, b) = (group[ai].clone(), group[bi].clone());
        let spec = spec_by_name[kb.predicate_name(p).expect("relational predicate")];
        let objp = TYPES.iter().find(|t| t.label == spec.object).expect("known type").plural;
        let lf = rooted(
            Op::StartSet,
            LfNode::new(Op::Union, vec![find_node(&a, p), find_node(&b, p)]),
        );
        let gold_answer = executor::evaluate(&lf, kb).expect("gold executes");
        let tokens = render(
            LOG_UNION_T[rng.gen_range(0..LOG_UNION_T.len())],
            &[
                ("objp", objp),
                ("a", &kb.mentions(&a)[0].clone()),
                ("b", &kb.mentions(&b)[0].clone()),
                ("rel", spec.rel),
            ],
        );
        let pred_extra = rng.gen_range(1..=2);
        let pool =
            make_pool(&mut rng, &regulars, &rels, &[a, b], &[p.clone()], &[], 2, pred_extra);
        let rec = match si {
            0 => &mut dataset.train[i],
            1 => &mut dataset.dev[i],
            _ => &mut dataset.test[i],
        };
        rec.tokens = tokens;
        rec.pool = pool;
        rec.gold_answer = gold_answer;
        rec.gold_lf = Some(lf);
        modified.push(rec.qid.clone());
    }
    modified.sort();
    Ok(modified)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> GenConfig {
        GenConfig {
            seed: 5,
            entity_count: 400,
            questions_per_type: 12,
            max_retries: 200,
            ..GenConfig::default()
        }
    }

    #[test]
    fn generated_golds_execute_to_the_stored_answer() {
        let (kb, data) = generate(&small_cfg()).unwrap();
        assert_eq!(kb.entity_count(), 400 + 9);
        assert_eq!(data.len(), 7 * 12);
        let mut qids = BTreeSet::new();
        for rec in data.all() {
            assert!(qids.insert(rec.qid.clone()), "duplicate qid {}", rec.qid);
            assert!(!rec.tokens.is_empty());
            let lf = rec.gold_lf.as_ref().expect("full view keeps gold forms");
            assert_eq!(executor::evaluate(lf, &kb).unwrap(), rec.gold_answer, "{}", rec.qid);
            // Every constant the gold form uses must be offered by the pool.
            for e in lf.entity_refs() {
                assert!(rec.pool.entities.contains(e), "{}: entity {e} not in pool", rec.qid);
            }
            for c in lf.constants() {
                match c {
                    crate::grammar::ConstantRef::Predicate(p) => {
                        assert!(rec.pool.predicates.contains(&p), "{}: {p}", rec.qid)
                    }
                    crate::grammar::ConstantRef::Number(n) => {
                        assert!(rec.pool.numbers.contains(&n), "{}: {n}", rec.qid)
                    }
                    crate::grammar::ConstantRef::Entity(_) => {}
                }
            }
        }
    }

    #[test]
    fn gold_sizes_match_the_type_design() {
        let (_, data) = generate(&small_cfg()).unwrap();
        for rec in data.all() {
            let size = rec.gold_lf.as_ref().unwrap().node_count();
            let expected: &[usize] = match rec.qtype {
                QuestionType::SimpleDirect => &[5],
                QuestionType::Verification => &[7],
                QuestionType::Logical => &[10],
                QuestionType::QuantitativeCount => &[6, 11],
                QuestionType::QuantitativeSet => &[7, 10],
                QuestionType::ComparativeSet => &[8],
                QuestionType::ComparativeCount => &[9],
            };
            assert!(expected.contains(&size), "{}: size {size} for {}", rec.qid, rec.qtype);
        }
    }

    #[test]
    fn answer_kind_follows_question_type() {
        let (_, data) = generate(&small_cfg()).unwrap();
        for rec in data.all() {
            let ok = match rec.qtype {
                QuestionType::QuantitativeCount | QuestionType::ComparativeCount => {
                    matches!(rec.gold_answer, Answer::Number(_))
                }
                QuestionType::Verification => matches!(rec.gold_answer, Answer::Boolean(_)),
                _ => matches!(rec.gold_answer, Answer::Entities(_)),
            };
            assert!(ok, "{}: {:?}", rec.qid, rec.gold_answer);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (kb1, d1) = generate(&small_cfg()).unwrap();
        let (kb2, d2) = generate(&small_cfg()).unwrap();
        assert_eq!(d1, d2);
        let t1: Vec<_> = kb1.triples().collect();
        let t2: Vec<_> = kb2.triples().collect();
        assert_eq!(t1, t2);
        let (_, d3) = generate(&GenConfig { seed: 6, ..small_cfg() }).unwrap();
        assert_ne!(d1, d3);
    }

    #[test]
    fn split_sizes_follow_fractions() {
        let (_, data) = generate(&small_cfg()).unwrap();
        let n = data.len();
        assert_eq!(data.train.len(), (n as f64 * 0.8).floor() as usize);
        assert_eq!(data.dev.len(), (n as f64 * 0.1).floor() as usize);
        assert_eq!(data.test.len(), n - data.train.len() - data.dev.len());
        for name in SPLIT_NAMES {
            let recs = data.split(name).unwrap();
            let mut sorted: Vec<_> = recs.iter().map(|r| r.qid.clone()).collect();
            let orig = sorted.clone();
            sorted.sort();
            assert_eq!(orig, sorted, "{name} split keeps qid order");
        }
    }

    #[test]
    fn ambiguity_injection_makes_union_arms_indistinguishable() {
        let mut cfg = small_cfg();
        cfg.questions_per_type = 40;
        let (kb, mut data) = generate(&cfg).unwrap();
        let eligible = data
            .all()
            .filter(|r| {
                r.qtype == QuestionType::Logical
                    && r.gold_lf
                        .as_ref()
                        .is_some_and(|lf| lf.root.children[0].op == Op::Union)
            })
            .count();
        assert!(eligible >= 10, "need union questions to test on, got {eligible}");
        let modified = inject_ambiguity(&mut data, &kb, 0.5, 99).unwrap();
        assert_eq!(modified.len(), (eligible as f64 * 0.5).floor() as usize);
        for qid in &modified {
            let rec = data.all().find(|r| &r.qid == qid).unwrap();
            let lf = rec.gold_lf.as_ref().unwrap();
            let union = &lf.root.children[0];
            assert_eq!(union.op, Op::Union);
            let ents: Vec<_> = lf.entity_refs().into_iter().collect();
            assert_eq!(ents.len(), 2);
            let p = match lf.constants().into_iter().find_map(|c| match c {
                crate::grammar::ConstantRef::Predicate(p) => Some(p),
                _ => None,
            }) {
                Some(p) => p,
                None => unreachable!("union gold has a predicate"),
            };
            assert_eq!(
                kb.objects_of(ents[0], &p).cloned().unwrap_or_default(),
                kb.objects_of(ents[1], &p).cloned().unwrap_or_default(),
                "{qid}: images must be identical"
            );
            assert_eq!(executor::evaluate(lf, &kb).unwrap(), rec.gold_answer);
        }
        // Unmodified records are untouched by a rerun with rate 0.
        let before = data.clone();
        let none = inject_ambiguity(&mut data, &kb, 0.0, 99).unwrap();
        assert!(none.is_empty());
        assert_eq!(data, before);
    }

    #[test]
    fn jsonl_round_trip_and_pipeline_view() {
        let (_, data) = generate(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        data.save(dir.path(), true).unwrap();
        let full = Dataset::load(dir.path()).unwrap();
        assert_eq!(full, data);
        data.save(dir.path(), false).unwrap();
        let stripped = Dataset::load(dir.path()).unwrap();
        assert!(stripped.all().all(|r| r.gold_lf.is_none()));
        assert_eq!(stripped.train.len(), data.train.len());
        let text = std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
        assert!(!text.contains("gold_lf"));
    }

    #[test]
    fn isa_predicate_is_found_by_name() {
        let (kb, _) = generate(&small_cfg()).unwrap();
        let isa = isa_predicate(&kb).unwrap();
        assert_eq!(kb.predicate_name(&isa), Some(ISA_NAME));
        assert_eq!(isa.as_str(), "P20");
    }
}
