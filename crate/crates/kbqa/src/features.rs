//! Deterministic sparse featurization with feature hashing.
//!
//! Questions become bags of lowercased unigrams, ordered bigrams, and a
//! length bucket, hashed into a fixed-size space (default `2^18`). The same
//! hashing entry point also serves the parser, which crosses question tokens
//! with decode-state descriptors; everything lands in one shared space so a
//! single weight vector per head covers all feature kinds.

use std::collections::BTreeMap;

/// Default log2 of the hash space size.
pub const DEFAULT_HASH_BITS: u32 = 18;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hashes a feature name into `2^bits` buckets.
pub fn feature_index(name: &str, bits: u32) -> u32 {
    (fnv1a(name.as_bytes()) & ((1u64 << bits) - 1)) as u32
}

/// Sparse feature vector: bucket index → accumulated weight, sorted by index.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct FeatureVector {
    entries: BTreeMap<u32, f64>,
}

impl FeatureVector {
    pub fn new() -> FeatureVector {
        FeatureVector::default()
    }

    /// Adds `value` to the bucket for `name`.
    pub fn add(&mut self, name: &str, value: f64, bits: u32) {
        *self.entries.entry(feature_index(name, bits)).or_insert(0.0) += value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().map(|(i, v)| (*i, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dot product against a dense weight vector.
    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.iter().map(|(i, v)| weights[i as usize] * v).sum()
    }

    /// `weights[i] += scale * v` for every entry.
    pub fn add_scaled_into(&self, weights: &mut [f64], scale: f64) {
        for (i, v) in self.iter() {
            weights[i as usize] += scale * v;
        }
    }

    /// Squared L2 norm of the stored values.
    pub fn norm_sq(&self) -> f64 {
        self.iter().map(|(_, v)| v * v).sum()
    }
}

impl FromIterator<(u32, f64)> for FeatureVector {
    fn from_iter<T: IntoIterator<Item = (u32, f64)>>(iter: T) -> FeatureVector {
        let mut fv = FeatureVector::new();
        for (i, v) in iter {
            *fv.entries.entry(i).or_insert(0.0) += v;
        }
        fv
    }
}

/// Stateless featurizer parameterized by hash-space size.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Featurizer {
    pub bits: u32,
}

impl Default for Featurizer {
    fn default() -> Featurizer {
        Featurizer { bits: DEFAULT_HASH_BITS }
    }
}

impl Featurizer {
    pub fn new(bits: u32) -> Featurizer {
        assert!((8..=30).contains(&bits), "hash bits out of range: {bits}");
        Featurizer { bits }
    }

    /// Size of the dense weight vector this featurizer indexes into.
    pub fn dim(&self) -> usize {
        1usize << self.bits
    }

    /// Question representation: bias, lowercased unigram counts, ordered
    /// bigrams, and a length bucket. Token order matters only through the
    /// bigrams.
    pub fn question(&self, tokens: &[String]) -> FeatureVector {
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        let mut fv = FeatureVector::new();
        fv.add("bias", 1.0, self.bits);
        for t in &lower {
            fv.add(&format!("u:{t}"), 1.0, self.bits);
        }
        for w in lower.windows(2) {
            fv.add(&format!("b:{}_{}", w[0], w[1]), 1.0, self.bits);
        }
        fv.add(&format!("len:{}", length_bucket(lower.len())), 1.0, self.bits);
        fv
    }

    /// Hashes arbitrary `(name, value)` pairs; used by the parser for its
    /// state- and candidate-crossed features.
    pub fn custom<'a>(&self, feats: impl IntoIterator<Item = (&'a str, f64)>) -> FeatureVector {
        let mut fv = FeatureVector::new();
        for (name, v) in feats {
            fv.add(name, v, self.bits);
        }
        fv
    }
}

/// Coarse question-length bucket (steps of four tokens, capped).
pub fn length_bucket(len: usize) -> usize {
    (len / 4).min(5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn fnv_matches_known_vectors() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn featurization_is_deterministic_and_case_folded() {
        let f = Featurizer::default();
        let a = f.question(&toks("Which Rivers Flow"));
        let b = f.question(&toks("which rivers flow"));
        assert_eq!(a, b);
        assert_eq!(a, f.question(&toks("which rivers flow")));
    }

    #[test]
    fn order_matters_only_through_bigrams() {
        let f = Featurizer::default();
        let ab = f.question(&toks("alpha beta"));
        let ba = f.question(&toks("beta alpha"));
        assert_ne!(ab, ba, "bigrams keep order information");

        // Same multiset and same bigram multiset → identical vectors.
        let x = f.question(&toks("a b a b"));
        let y = f.question(&toks("a b a b"));
        assert_eq!(x, y);
    }

    #[test]
    fn unigram_counts_accumulate() {
        let f = Featurizer::default();
        let one = f.question(&toks("star"));
        let twice = f.question(&toks("star star"));
        let idx = feature_index("u:star", f.bits);
        let get = |fv: &FeatureVector| fv.iter().find(|(i, _)| *i == idx).map(|(_, v)| v);
        assert_eq!(get(&one), Some(1.0));
        assert_eq!(get(&twice), Some(2.0));
    }

    #[test]
    fn dot_and_update_roundtrip() {
        let f = Featurizer::new(10);
        let fv = f.question(&toks("how many rivers"));
        let mut w = vec![0.0; f.dim()];
        fv.add_scaled_into(&mut w, 2.0);
        assert!((fv.dot(&w) - 2.0 * fv.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn length_buckets_step_and_cap() {
        assert_eq!(length_bucket(0), 0);
        assert_eq!(length_bucket(3), 0);
        assert_eq!(length_bucket(4), 1);
        assert_eq!(length_bucket(19), 4);
        assert_eq!(length_bucket(1000), 5);
    }

    #[test]
    fn hash_space_is_masked() {
        let f = Featurizer::new(8);
        let fv = f.question(&toks("a b c d e f g h i j"));
        assert!(fv.iter().all(|(i, _)| i < 256));
    }
}
