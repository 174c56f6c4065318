//! Leakage groups: connected components of the graph whose edges join
//! reactions with Tanimoto similarity above the threshold.

use std::collections::HashMap;

use rayon::prelude::*;

use super::fingerprint::{tanimoto_unchecked, ReactionFingerprint};
use super::SplitConfig;

/// Corpus size above which candidate search goes through an inverted index.
pub const INDEX_THRESHOLD: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Groups {
    /// Group id of each reaction (by corpus position).
    pub group_of: Vec<usize>,
    /// Members of each group, ascending. Groups are ordered by their first
    /// member, so ids are stable for a given corpus order.
    pub members: Vec<Vec<usize>>,
}

impl Groups {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut uf = UnionFind::new(n);
        for (a, b) in edges {
            uf.union(a, b);
        }
        let mut id_of_root = HashMap::new();
        let mut group_of = Vec::with_capacity(n);
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let root = uf.find(i);
            let id = *id_of_root.entry(root).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[id].push(i);
            group_of.push(id);
        }
        Groups { group_of, members }
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// k nearest neighbours of `i` in folded space, by similarity then index.
fn top_k(scored: &mut Vec<(f64, usize)>, k: usize) {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
}

fn candidates_exact(folded: &[ReactionFingerprint], k: usize) -> Vec<Vec<usize>> {
    (0..folded.len())
        .into_par_iter()
        .map(|i| {
            let mut scored: Vec<(f64, usize)> = (0..folded.len())
                .filter(|&j| j != i)
                .map(|j| (tanimoto_unchecked(&folded[i], &folded[j]), j))
                .collect();
            top_k(&mut scored, k);
            scored.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Only reactions sharing at least one folded bit are scored. Empty
/// fingerprints are handled by the caller.
fn candidates_indexed(folded: &[ReactionFingerprint], k: usize) -> Vec<Vec<usize>> {
    let width = folded.first().map_or(0, |f| f.n_bits());
    let mut postings: Vec<Vec<usize>> = vec![Vec::new(); width];
    for (i, f) in folded.iter().enumerate() {
        for b in f.ones() {
            postings[b].push(i);
        }
    }
    (0..folded.len())
        .into_par_iter()
        .map(|i| {
            let mut shared: HashMap<usize, u32> = HashMap::new();
            for b in folded[i].ones() {
                for &j in &postings[b] {
                    if j != i {
                        *shared.entry(j).or_insert(0) += 1;
                    }
                }
            }
            let pi = folded[i].popcount();
            let mut scored: Vec<(f64, usize)> = shared
                .into_iter()
                .map(|(j, inter)| (inter as f64 / (pi + folded[j].popcount() - inter) as f64, j))
                .collect();
            top_k(&mut scored, k);
            scored.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Folds fingerprints, gathers kNN candidates in the folded space and keeps
/// candidate edges whose full-width similarity exceeds the threshold.
pub fn leakage_groups(fps: &[ReactionFingerprint], cfg: &SplitConfig) -> Groups {
    let n = fps.len();
    let folded: Vec<ReactionFingerprint> =
        fps.par_iter().map(|f| f.fold(cfg.reduced_bits)).collect();
    let k = cfg.knn_k.max(1);
    let indexed = n > INDEX_THRESHOLD;
    let candidates = if indexed {
        candidates_indexed(&folded, k)
    } else {
        candidates_exact(&folded, k)
    };
    let mut edges: Vec<(usize, usize)> = candidates
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, cands)| {
            cands
                .iter()
                .filter(move |&&j| tanimoto_unchecked(&fps[i], &fps[j]) > cfg.tanimoto_threshold)
                .map(move |&j| (i, j))
        })
        .collect();
    if indexed {
        // empty fingerprints are identical to each other (Tanimoto 1.0)
        let zeros: Vec<usize> = (0..n).filter(|&i| fps[i].is_zero()).collect();
        edges.extend(zeros.windows(2).map(|w| (w[0], w[1])));
    }
    Groups::from_edges(n, edges)
}

/// All-pairs reference used to check the kNN pipeline.
pub fn leakage_groups_exhaustive(fps: &[ReactionFingerprint], threshold: f64) -> Groups {
    let n = fps.len();
    let edges: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..n)
                .filter(move |&j| tanimoto_unchecked(&fps[i], &fps[j]) > threshold)
                .map(move |j| (i, j))
        })
        .collect();
    Groups::from_edges(n, edges)
}
