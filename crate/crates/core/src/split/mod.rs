//! Reaction fingerprints, leakage groups and benchmark splits.

mod assign;
mod fingerprint;
mod groups;
mod kmeans;
mod shift;

pub use assign::{
    extreme_ood_split, group_split, random_split, read_split_jsonl, write_split_jsonl, Fold,
    SplitAssignment, SplitEntry, SplitError, SplitHeader,
};
pub use fingerprint::{
    environment_ids, fingerprint, tanimoto, ReactionFingerprint, WidthMismatch, DEFAULT_BITS,
    DEFAULT_RADIUS,
};
pub use groups::{leakage_groups, leakage_groups_exhaustive, Groups, INDEX_THRESHOLD};
pub use kmeans::{kmeans, KMeansResult, SparseVec};
pub use shift::{ks_signed, median, shift_report, top_k_mean_similarity, ShiftReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::reaction::ReactionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub knn_k: usize,
    pub tanimoto_threshold: f64,
    pub n_clusters: usize,
    pub ood_top_fraction: f64,
    pub train_fraction: f64,
    pub reduced_bits: usize,
    pub seed: u64,
    pub radius: u32,
    pub n_bits: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            knn_k: 100,
            tanimoto_threshold: 0.55,
            n_clusters: 10,
            ood_top_fraction: 0.20,
            train_fraction: 0.80,
            reduced_bits: 256,
            seed: 0,
            radius: DEFAULT_RADIUS,
            n_bits: DEFAULT_BITS,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), SplitError> {
        let frac = |x: f64| x > 0.0 && x <= 1.0;
        if !frac(self.tanimoto_threshold)
            || !frac(self.ood_top_fraction)
            || !frac(self.train_fraction)
        {
            return Err(SplitError::Config("fractions must lie in (0, 1]".into()));
        }
        if self.knn_k == 0 || self.n_clusters == 0 {
            return Err(SplitError::Config(
                "knn_k and n_clusters must be at least 1".into(),
            ));
        }
        if self.reduced_bits == 0 || !self.n_bits.is_multiple_of(self.reduced_bits) {
            return Err(SplitError::Config("reduced_bits must divide n_bits".into()));
        }
        Ok(())
    }

    /// Short SHA-256 of the config and split type, recorded in split files.
    pub fn hash(&self, split_type: &str) -> String {
        let mut h = Sha256::new();
        h.update(split_type.as_bytes());
        h.update(serde_json::to_vec(self).expect("config serializes"));
        hex::encode(&h.finalize()[..8])
    }
}

pub fn fingerprint_corpus(
    records: &[ReactionRecord],
    cfg: &SplitConfig,
) -> Vec<ReactionFingerprint> {
    records
        .par_iter()
        .map(|r| fingerprint(r, cfg.radius, cfg.n_bits))
        .collect()
}
