//! k-means++ seeding and Lloyd iterations over sparse points.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fingerprint::ReactionFingerprint;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
    norm2: f64,
}

impl SparseVec {
    pub fn new(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        entries.retain(|e| e.1 != 0.0);
        let norm2 = entries.iter().map(|e| e.1 * e.1).sum();
        let (idx, val) = entries.into_iter().unzip();
        SparseVec { idx, val, norm2 }
    }

    /// Bitwise mean of fingerprints.
    pub fn centroid<'a>(fps: impl IntoIterator<Item = &'a ReactionFingerprint>) -> Self {
        let mut acc = std::collections::BTreeMap::<u32, f64>::new();
        let mut n = 0usize;
        for fp in fps {
            n += 1;
            for b in fp.ones() {
                *acc.entry(b as u32).or_insert(0.0) += 1.0;
            }
        }
        let n = n.max(1) as f64;
        SparseVec::new(acc.into_iter().map(|(b, c)| (b, c / n)).collect())
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.idx
            .iter()
            .zip(&self.val)
            .map(|(&i, v)| v * dense[i as usize])
            .sum()
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.idx.len() && j < other.idx.len() {
            match self.idx[i].cmp(&other.idx[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += self.val[i] * other.val[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }

    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    /// Squared Euclidean distance.
    pub fn dist2(&self, other: &SparseVec) -> f64 {
        (self.norm2 + other.norm2 - 2.0 * self.dot(other)).max(0.0)
    }

    fn dist2_dense(&self, dense: &[f64], dense_norm2: f64) -> f64 {
        (self.norm2 + dense_norm2 - 2.0 * self.dot_dense(dense)).max(0.0)
    }

    fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut d = vec![0.0; dim];
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            d[i as usize] = v;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub iterations: usize,
}

fn nearest(p: &SparseVec, centers: &[Vec<f64>], norms: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, (center, &n2)) in centers.iter().zip(norms).enumerate() {
        let d = p.dist2_dense(center, n2);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Deterministic for a given seed. Requires `points.len() >= k`.
pub fn kmeans(
    points: &[SparseVec],
    dim: usize,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> KMeansResult {
    assert!(k >= 1 && points.len() >= k, "need at least k points");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.random_range(0..points.len())].to_dense(dim)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| p.dist2_dense(&centers[0], norm2(&centers[0])))
        .collect();
    // greedy k-means++: draw a few D²-weighted candidates per step and keep
    // the one that lowers the potential most
    let trials = 2 + (k as f64).ln() as usize;
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total <= 0.0 {
                rng.random_range(0..points.len())
            } else {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = points.len() - 1;
                for (i, &d) in d2.iter().enumerate() {
                    if target < d {
                        chosen = i;
                        break;
                    }
                    target -= d;
                }
                chosen
            };
            let c = points[pick].to_dense(dim);
            let cn = norm2(&c);
            let next: Vec<f64> = points
                .par_iter()
                .zip(&d2)
                .map(|(p, &d)| d.min(p.dist2_dense(&c, cn)))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, c, next));
            }
        }
        let (_, c, next) = best.expect("at least one trial");
        d2 = next;
        centers.push(c);
    }

    let mut labels = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let norms: Vec<f64> = centers.iter().map(|c| norm2(c)).collect();
        let next: Vec<usize> = points
            .par_iter()
            .map(|p| nearest(p, &centers, &norms).0)
            .collect();
        if next == labels {
            break;
        }
        labels = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (&i, &v) in p.idx.iter().zip(&p.val) {
                sums[l][i as usize] += v;
            }
        }
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centers[c] = sums[c].iter().map(|s| s / n).collect();
            }
        }
    }
    KMeansResult {
        labels,
        centers,
        iterations,
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}
