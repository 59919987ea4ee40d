//! Text-to-vector providers for the semantic memory.
//!
//! The bundled default hashes bag-of-words counts into 2^16 buckets and
//! projects them to the target dimension with a fixed seeded ±1 matrix that
//! is never materialized — each entry is recomputed from (seed, bucket,
//! column) on demand. Output is L2-normalized, so identical text always
//! maps to an identical unit vector.

use crate::text::tokenize;

/// Anything that can turn text into a unit-length vector. Implementations
/// must be deterministic; the (seed, dim) pair acts as a fingerprint tying
/// banks and checkpoints to the provider that produced them.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    fn seed(&self) -> u64;
    /// Unit-length (±1e-9) embedding of the full text.
    fn embed(&self, text: &str) -> Vec<f64>;
}

const N_BUCKETS: u64 = 1 << 16;

/// Feature-hashed bag-of-words embedder (the dependency-free default).
#[derive(Debug, Clone)]
pub struct HashedBowProvider {
    d_s: usize,
    seed: u64,
}

impl HashedBowProvider {
    pub fn new(d_s: usize, seed: u64) -> Self {
        assert!(d_s > 0, "embedding dimension must be positive");
        HashedBowProvider { d_s, seed }
    }
}

impl EmbeddingProvider for HashedBowProvider {
    fn dim(&self) -> usize {
        self.d_s
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let mut counts: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
        for t in &tokens {
            *counts.entry(fnv1a(t.as_bytes()) % N_BUCKETS).or_default() += 1.0;
        }
        let mut out = vec![0.0; self.d_s];
        for (&bucket, &count) in &counts {
            let stream = splitmix64(self.seed ^ splitmix64(bucket));
            for (j, slot) in out.iter_mut().enumerate() {
                let sign = if splitmix64(stream ^ j as u64) & 1 == 1 {
                    1.0
                } else {
                    -1.0
                };
                *slot += count * sign;
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            // Signs cancelled exactly; fall back to a deterministic basis
            // vector so the row is still unit length.
            log::warn!("embedding collapsed to zero; substituting basis vector");
            let mut basis = vec![0.0; self.d_s];
            basis[(fnv1a(text.as_bytes()) % self.d_s as u64) as usize] = 1.0;
            return basis;
        }
        out.iter_mut().for_each(|v| *v /= norm);
        out
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
