//! Next-token scorers.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Returns unnormalized logits over the vocabulary for the next token.
/// Implementations must be deterministic and safe to share across threads.
pub trait Scorer: Sync {
    fn vocab_size(&self) -> usize;
    fn next_logits(&self, prefix: &[u32], source: &[u32]) -> Vec<f64>;
}

/// All-zero logits.
#[derive(Debug, Clone)]
pub struct UniformScorer {
    pub size: usize,
}

impl Scorer for UniformScorer {
    fn vocab_size(&self) -> usize {
        self.size
    }

    fn next_logits(&self, _prefix: &[u32], _source: &[u32]) -> Vec<f64> {
        vec![0.0; self.size]
    }
}

/// Puts (almost) all mass on the next token of a fixed target sequence and
/// then on `fallback` once the target is exhausted.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    pub size: usize,
    pub target: Vec<u32>,
    pub fallback: u32,
}

pub const ORACLE_GAP: f64 = 50.0;

impl Scorer for OracleScorer {
    fn vocab_size(&self) -> usize {
        self.size
    }

    fn next_logits(&self, prefix: &[u32], _source: &[u32]) -> Vec<f64> {
        let mut z = vec![-ORACLE_GAP; self.size];
        let next = if self.target.starts_with(prefix) {
            self.target
                .get(prefix.len())
                .copied()
                .unwrap_or(self.fallback)
        } else {
            self.fallback
        };
        z[next as usize] = 0.0;
        z
    }
}

/// Adds Gaussian noise to another scorer's logits. The noise is a pure
/// function of (seed, source, prefix), so repeated queries agree.
pub struct NoisyScorer<S> {
    pub inner: S,
    pub sigma: f64,
    pub seed: u64,
}

impl<S: Scorer> Scorer for NoisyScorer<S> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn next_logits(&self, prefix: &[u32], source: &[u32]) -> Vec<f64> {
        let mut h = FnvHasher::default();
        h.write_u64(self.seed);
        for &t in source {
            h.write_u32(t);
        }
        h.write_u32(u32::MAX);
        for &t in prefix {
            h.write_u32(t);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let normal = Normal::new(0.0, self.sigma.max(0.0)).expect("finite sigma");
        self.inner
            .next_logits(prefix, source)
            .into_iter()
            .map(|z| z + normal.sample(&mut rng))
            .collect()
    }
}

impl<T: Scorer + ?Sized> Scorer for &T {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_logits(&self, prefix: &[u32], source: &[u32]) -> Vec<f64> {
        (**self).next_logits(prefix, source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_deterministic_per_query() {
        let s = NoisyScorer {
            inner: UniformScorer { size: 8 },
            sigma: 1.0,
            seed: 3,
        };
        assert_eq!(s.next_logits(&[1, 2], &[5]), s.next_logits(&[1, 2], &[5]));
        assert_ne!(s.next_logits(&[1, 2], &[5]), s.next_logits(&[1, 3], &[5]));
        assert!(s.next_logits(&[], &[]).iter().all(|z| z.is_finite()));
    }

    #[test]
    fn oracle_follows_target() {
        let s = OracleScorer {
            size: 5,
            target: vec![3, 4],
            fallback: 1,
        };
        assert_eq!(s.next_logits(&[], &[])[3], 0.0);
        assert_eq!(s.next_logits(&[3], &[])[4], 0.0);
        assert_eq!(s.next_logits(&[3, 4], &[])[1], 0.0);
    }
}
