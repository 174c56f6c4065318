//! Nearest-neighbour similarity distributions between folds.

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::assign::{Fold, SplitAssignment};
use super::fingerprint::{tanimoto_unchecked, ReactionFingerprint};

pub const NEIGHBOURS: usize = 5;
/// Cap on train queries for the train-to-train reference curve.
const MAX_REFERENCE_QUERIES: usize = 5000;

/// Mean Tanimoto of `query` to its `k` most similar pool members, skipping
/// the pool entry equal to `skip`.
pub fn top_k_mean_similarity(
    query: &ReactionFingerprint,
    pool: &[&ReactionFingerprint],
    k: usize,
    skip: Option<usize>,
) -> f64 {
    let mut sims: Vec<f64> = pool
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(_, p)| tanimoto_unchecked(query, p))
        .collect();
    if sims.is_empty() {
        return 0.0;
    }
    let k = k.min(sims.len());
    sims.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    sims[..k].iter().sum::<f64>() / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftReport {
    /// Sorted top-5 mean similarities of each test reaction to train.
    pub test_to_train: Vec<f64>,
    /// Same statistic for train reactions against the rest of train.
    pub train_to_train: Vec<f64>,
}

impl ShiftReport {
    /// Columns: curve, value, cdf.
    pub fn write_cdf_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "curve,value,cdf")?;
        for (name, v) in [
            ("test_to_train", &self.test_to_train),
            ("train_to_train", &self.train_to_train),
        ] {
            let n = v.len() as f64;
            for (i, x) in v.iter().enumerate() {
                writeln!(out, "{name},{x:.6},{:.6}", (i + 1) as f64 / n)?;
            }
        }
        Ok(())
    }
}

pub fn shift_report(a: &SplitAssignment, fps: &[ReactionFingerprint], seed: u64) -> ShiftReport {
    let train_idx = a.indices(Fold::Train);
    let pool: Vec<&ReactionFingerprint> = train_idx.iter().map(|&i| &fps[i]).collect();
    let mut test_to_train: Vec<f64> = a
        .indices(Fold::Test)
        .par_iter()
        .map(|&i| top_k_mean_similarity(&fps[i], &pool, NEIGHBOURS, None))
        .collect();
    let queries: Vec<usize> = if pool.len() > MAX_REFERENCE_QUERIES {
        let mut s = sample(
            &mut ChaCha8Rng::seed_from_u64(seed),
            pool.len(),
            MAX_REFERENCE_QUERIES,
        )
        .into_vec();
        s.sort_unstable();
        s
    } else {
        (0..pool.len()).collect()
    };
    let mut train_to_train: Vec<f64> = queries
        .par_iter()
        .map(|&q| top_k_mean_similarity(pool[q], &pool, NEIGHBOURS, Some(q)))
        .collect();
    test_to_train.sort_by(f64::total_cmp);
    train_to_train.sort_by(f64::total_cmp);
    ShiftReport {
        test_to_train,
        train_to_train,
    }
}

/// Median of sorted or unsorted values (NaN for an empty slice).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// One-sided two-sample KS statistics (D+, D-) with D+ = sup(F_a - F_b).
/// D+ > D- means `a` sits to the left of `b`.
pub fn ks_signed(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let (mut dp, mut dm) = (0.0f64, 0.0f64);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let diff = i as f64 / na - j as f64 / nb;
        dp = dp.max(diff);
        dm = dm.max(-diff);
    }
    (dp, dm)
}
