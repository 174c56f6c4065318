//! Group, extreme-OOD and random fold assignment, plus the JSON-lines format.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fingerprint::ReactionFingerprint;
use super::groups::Groups;
use super::kmeans::{kmeans, SparseVec};
use super::SplitConfig;
use crate::balance::ElementDelta;

const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("cannot form {clusters} clusters from {groups} leakage groups")]
    DegenerateClustering { groups: usize, clusters: usize },
    #[error("invalid split config: {0}")]
    Config(String),
    #[error("input lengths differ: {0}")]
    LengthMismatch(String),
    #[error("split file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub id: String,
    pub group_id: usize,
    pub fold: Fold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitHeader {
    pub split_type: String,
    pub fold_index: usize,
    pub config_hash: String,
    pub seed: u64,
    pub n: usize,
}

/// One fold realization. Entries follow corpus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub header: SplitHeader,
    pub entries: Vec<SplitEntry>,
}

impl SplitAssignment {
    pub fn indices(&self, fold: Fold) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].fold == fold)
            .collect()
    }

    pub fn count(&self, fold: Fold) -> usize {
        self.entries.iter().filter(|e| e.fold == fold).count()
    }

    fn build(
        split_type: &str,
        fold_index: usize,
        cfg: &SplitConfig,
        ids: &[String],
        group_of: &[usize],
        fold_of_group: impl Fn(usize) -> Fold,
    ) -> Self {
        SplitAssignment {
            header: SplitHeader {
                split_type: split_type.to_string(),
                fold_index,
                config_hash: cfg.hash(split_type),
                seed: cfg.seed,
                n: ids.len(),
            },
            entries: ids
                .iter()
                .zip(group_of)
                .map(|(id, &g)| SplitEntry {
                    id: id.clone(),
                    group_id: g,
                    fold: fold_of_group(g),
                })
                .collect(),
        }
    }
}

fn check_lengths(
    ids: &[String],
    fps: &[ReactionFingerprint],
    groups: &Groups,
) -> Result<(), SplitError> {
    if ids.len() != fps.len() || ids.len() != groups.group_of.len() {
        return Err(SplitError::LengthMismatch(format!(
            "{} ids, {} fingerprints, {} group labels",
            ids.len(),
            fps.len(),
            groups.group_of.len()
        )));
    }
    Ok(())
}

fn centroids(groups: &Groups, fps: &[ReactionFingerprint]) -> Vec<SparseVec> {
    groups
        .members
        .par_iter()
        .map(|m| SparseVec::centroid(m.iter().map(|&i| &fps[i])))
        .collect()
}

/// Clusters group centroids and returns one realization per cluster: that
/// cluster is the test fold, the next cluster (cyclically) the validation
/// fold, and everything else train.
pub fn group_split(
    ids: &[String],
    fps: &[ReactionFingerprint],
    groups: &Groups,
    cfg: &SplitConfig,
) -> Result<Vec<SplitAssignment>, SplitError> {
    cfg.validate()?;
    check_lengths(ids, fps, groups)?;
    let k = cfg.n_clusters;
    if groups.len() < k || k < 2 {
        return Err(SplitError::DegenerateClustering {
            groups: groups.len(),
            clusters: k,
        });
    }
    let points = centroids(groups, fps);
    let km = kmeans(&points, cfg.n_bits, k, cfg.seed, MAX_LLOYD_ITERATIONS);
    Ok((0..k)
        .map(|f| {
            SplitAssignment::build("group", f, cfg, ids, &groups.group_of, |g| {
                let c = km.labels[g];
                if c == f {
                    Fold::Test
                } else if c == (f + 1) % k {
                    Fold::Valid
                } else {
                    Fold::Train
                }
            })
        })
        .collect())
}

/// Average ranks (1-based, ascending); equal values share their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

/// Per-group (isolation, mean missing atoms, mean missing carbons) and the
/// rank-sum score built from them.
pub(crate) fn ood_scores(
    groups: &Groups,
    fps: &[ReactionFingerprint],
    deltas: &[ElementDelta],
) -> Vec<f64> {
    let points = centroids(groups, fps);
    let isolation: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|g| {
            (0..points.len())
                .filter(|&h| h != g)
                .map(|h| points[g].dist2(&points[h]))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    let mean = |f: &dyn Fn(&ElementDelta) -> u64| -> Vec<f64> {
        groups
            .members
            .iter()
            .map(|m| m.iter().map(|&i| f(&deltas[i]) as f64).sum::<f64>() / m.len() as f64)
            .collect()
    };
    let atoms = mean(&|d| d.missing_atoms());
    let carbons = mean(&|d| d.missing_carbons());
    let (ri, ra, rc) = (ranks(&isolation), ranks(&atoms), ranks(&carbons));
    (0..points.len()).map(|g| ri[g] + ra[g] + rc[g]).collect()
}

/// Top-scoring groups (isolated and incomplete) form the test fold; the
/// rest is subsampled group-wise to `train_fraction` of the corpus for
/// train, and leftover groups become validation.
pub fn extreme_ood_split(
    ids: &[String],
    fps: &[ReactionFingerprint],
    groups: &Groups,
    deltas: &[ElementDelta],
    cfg: &SplitConfig,
) -> Result<SplitAssignment, SplitError> {
    cfg.validate()?;
    check_lengths(ids, fps, groups)?;
    if deltas.len() != ids.len() {
        return Err(SplitError::LengthMismatch(format!(
            "{} ids, {} deltas",
            ids.len(),
            deltas.len()
        )));
    }
    if groups.len() < cfg.n_clusters || groups.len() < 2 {
        return Err(SplitError::DegenerateClustering {
            groups: groups.len(),
            clusters: cfg.n_clusters,
        });
    }
    let score = ood_scores(groups, fps, deltas);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let n_test =
        ((cfg.ood_top_fraction * groups.len() as f64).round() as usize).clamp(1, groups.len() - 1);
    let mut fold = vec![Fold::Valid; groups.len()];
    for &g in &order[..n_test] {
        fold[g] = Fold::Test;
    }
    let mut rest: Vec<usize> = order[n_test..].to_vec();
    rest.sort_unstable();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let target = (cfg.train_fraction * ids.len() as f64).round() as usize;
    let mut train = 0;
    for g in rest {
        let size = groups.members[g].len();
        if train + size <= target {
            fold[g] = Fold::Train;
            train += size;
        }
    }
    Ok(SplitAssignment::build(
        "extreme_ood",
        0,
        cfg,
        ids,
        &groups.group_of,
        |g| fold[g],
    ))
}

/// Reaction-level random split with the given (train, valid) fractions;
/// the remainder is test. Each reaction is its own group.
pub fn random_split(ids: &[String], train: f64, valid: f64, cfg: &SplitConfig) -> SplitAssignment {
    let n = ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_train = (train * n as f64).round() as usize;
    let n_valid = ((valid * n as f64).round() as usize).min(n - n_train.min(n));
    let mut fold = vec![Fold::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        if pos < n_train {
            fold[i] = Fold::Train;
        } else if pos < n_train + n_valid {
            fold[i] = Fold::Valid;
        }
    }
    let group_of: Vec<usize> = (0..n).collect();
    SplitAssignment::build("random", 0, cfg, ids, &group_of, |g| fold[g])
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: SplitHeader,
}

pub fn write_split_jsonl(a: &SplitAssignment, mut out: impl Write) -> std::io::Result<()> {
    let header = HeaderLine {
        header: a.header.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for e in &a.entries {
        writeln!(out, "{}", serde_json::to_string(e)?)?;
    }
    Ok(())
}

pub fn read_split_jsonl(input: impl BufRead) -> Result<SplitAssignment, SplitError> {
    let mut lines = input
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let fmt = |line: usize, message: String| SplitError::Format {
        line: line + 1,
        message,
    };
    let (n0, first) = lines.next().ok_or_else(|| fmt(0, "empty file".into()))?;
    let header: HeaderLine = serde_json::from_str(&first?).map_err(|e| fmt(n0, e.to_string()))?;
    let mut entries = Vec::new();
    for (n, line) in lines {
        entries.push(serde_json::from_str(&line?).map_err(|e| fmt(n, e.to_string()))?);
    }
    Ok(SplitAssignment {
        header: header.header,
        entries,
    })
}
