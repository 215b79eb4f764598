use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::text::{pair_tokens, Composition};

/// MurmurHash3, x86 32-bit variant.
pub fn murmur3_32(data: &[u8], seed: u32) -> u32 {
    const C1: u32 = 0xcc9e_2d51;
    const C2: u32 = 0x1b87_3593;

    let mut h = seed;
    let mut chunks = data.chunks_exact(4);
    for chunk in &mut chunks {
        let mut k = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        k = k.wrapping_mul(C1).rotate_left(15).wrapping_mul(C2);
        h ^= k;
        h = h.rotate_left(13).wrapping_mul(5).wrapping_add(0xe654_6b64);
    }
    let tail = chunks.remainder();
    if !tail.is_empty() {
        let mut k = 0u32;
        for (i, &b) in tail.iter().enumerate() {
            k |= (b as u32) << (8 * i);
        }
        k = k.wrapping_mul(C1).rotate_left(15).wrapping_mul(C2);
        h ^= k;
    }
    h ^= data.len() as u32;
    h ^= h >> 16;
    h = h.wrapping_mul(0x85eb_ca6b);
    h ^= h >> 13;
    h = h.wrapping_mul(0xc2b2_ae35);
    h ^= h >> 16;
    h
}

/// Bucket and sign of one token: the signed 32-bit hash picks the bucket by its
/// absolute value and contributes +1 or -1 by its sign.
pub fn token_bucket(token: &str, dimension: usize) -> (usize, bool) {
    let h = murmur3_32(token.as_bytes(), 0) as i32;
    let bucket = (h.unsigned_abs() as u64 % dimension as u64) as usize;
    (bucket, h >= 0)
}

/// Sparse feature vector with sorted, unique indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedFeatureVector<T> {
    dimension: usize,
    entries: Vec<(u32, T)>,
}

impl<T: Real> HashedFeatureVector<T> {
    pub fn empty(dimension: usize) -> Self {
        HashedFeatureVector {
            dimension,
            entries: Vec::new(),
        }
    }

    /// Sums duplicate indices and drops zeros. Panics on an index outside `dimension`.
    pub fn from_pairs(dimension: usize, mut pairs: Vec<(u32, T)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut entries: Vec<(u32, T)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            assert!(
                (i as usize) < dimension,
                "index {i} outside dimension {dimension}"
            );
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 = last.1 + v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|e| e.1 != T::zero());
        HashedFeatureVector { dimension, entries }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(u32, T)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> T {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|k| self.entries[k].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn dot(&self, dense: &[T]) -> T {
        self.entries
            .iter()
            .map(|&(i, v)| v * dense[i as usize])
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn squared_norm(&self) -> T {
        self.entries
            .iter()
            .map(|e| e.1 * e.1)
            .fold(T::zero(), |a, b| a + b)
    }

    /// `dense += scale * self`
    pub fn add_scaled_to(&self, dense: &mut [T], scale: T) {
        for &(i, v) in &self.entries {
            dense[i as usize] = dense[i as usize] + scale * v;
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|&(i, v)| (i, v * c))
            .filter(|e| e.1 != T::zero())
            .collect();
        HashedFeatureVector {
            dimension: self.dimension,
            entries,
        }
    }
}

/// Hashes the tokens of a (question, comment) pair into a signed count vector.
///
/// Panics when `dimension` is zero.
pub fn featurize<T: Real>(
    question: &str,
    comment: &str,
    dimension: usize,
    composition: Composition,
) -> HashedFeatureVector<T> {
    assert!(dimension > 0, "hash dimension must be positive");
    let pairs = pair_tokens(question, comment, composition)
        .iter()
        .map(|t| {
            let (bucket, positive) = token_bucket(t, dimension);
            (bucket as u32, if positive { T::one() } else { -T::one() })
        })
        .collect();
    HashedFeatureVector::from_pairs(dimension, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::SEPARATOR_TOKEN;

    // Frozen from scikit-learn's murmurhash3_32 / FeatureHasher.
    #[test]
    fn murmur_matches_reference_values() {
        assert_eq!(murmur3_32(b"", 0), 0);
        assert_eq!(murmur3_32(b"hello", 0), 613_153_351);
        assert_eq!(murmur3_32(b"foo", 0) as i32, -156_908_512);
        assert_eq!(murmur3_32("würde".as_bytes(), 0), 1_311_729_835);
        assert_eq!(murmur3_32(b"[SEP]", 0), 663_144_045);
        assert_eq!(murmur3_32(b"abstimmung", 0), 1_299_094_338);
    }

    #[test]
    fn hashed_counts_match_reference_hasher() {
        let tokens = ["foo", "bar", "foo", "würde", SEPARATOR_TOKEN];
        let pairs = tokens
            .iter()
            .map(|t| {
                let (b, pos) = token_bucket(t, 1 << 20);
                (b as u32, if pos { 1.0 } else { -1.0 })
            })
            .collect();
        let v = HashedFeatureVector::<f64>::from_pairs(1 << 20, pairs);
        assert_eq!(
            v.entries(),
            &[
                (444_013, 1.0),
                (670_688, -2.0),
                (956_813, 1.0),
                (1_009_835, 1.0)
            ]
        );
    }

    #[test]
    fn empty_text_gives_empty_vector() {
        let v = featurize::<f64>("", "", 1 << 20, Composition::QuestionAndComment);
        assert!(v.is_empty());
        assert_eq!(v.dimension(), 1 << 20);
    }

    #[test]
    fn featurize_is_deterministic() {
        let a = featurize::<f32>(
            "Soll das gelten?",
            "Ja, unbedingt.",
            1024,
            Composition::QuestionAndComment,
        );
        let b = featurize::<f32>(
            "Soll das gelten?",
            "Ja, unbedingt.",
            1024,
            Composition::QuestionAndComment,
        );
        assert_eq!(a, b);
        assert!(a
            .entries()
            .iter()
            .all(|e| (e.0 as usize) < 1024 && e.1 != 0.0));
    }

    #[test]
    fn one_token_difference_touches_only_its_buckets() {
        let d = 1 << 20;
        let a = featurize::<f64>("q", "the cat sat", d, Composition::QuestionAndComment);
        let b = featurize::<f64>("q", "the dog sat", d, Composition::QuestionAndComment);
        // recompute the two differing tokens' buckets independently
        let expected: std::collections::BTreeSet<u32> = ["cat", "dog"]
            .iter()
            .map(|t| (murmur3_32(t.as_bytes(), 0) as i32).unsigned_abs() % d as u32)
            .collect();
        let differing: std::collections::BTreeSet<u32> = a
            .entries()
            .iter()
            .chain(b.entries())
            .map(|e| e.0)
            .filter(|&i| a.get(i) != b.get(i))
            .collect();
        assert!(!differing.is_empty());
        assert!(differing.is_subset(&expected));
    }

    #[test]
    fn collisions_cancel_to_no_entry() {
        let v = HashedFeatureVector::<f64>::from_pairs(8, vec![(3, 1.0), (3, -1.0), (5, 2.0)]);
        assert_eq!(v.entries(), &[(5, 2.0)]);
    }
}
