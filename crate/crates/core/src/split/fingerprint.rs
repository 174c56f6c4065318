//! Differential reaction fingerprints: circular atom environments that
//! appear on exactly one side of the reaction, hashed into a bit vector.

use std::collections::HashSet;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::Molecule;
use crate::reaction::ReactionRecord;

pub const DEFAULT_RADIUS: u32 = 3;
pub const DEFAULT_BITS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("fingerprint widths differ ({0} vs {1})")]
pub struct WidthMismatch(pub usize, pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReactionFingerprint {
    n_bits: usize,
    words: Vec<u64>,
    popcount: u32,
}

impl ReactionFingerprint {
    pub fn zeros(n_bits: usize) -> Self {
        ReactionFingerprint {
            n_bits,
            words: vec![0; n_bits.div_ceil(64)],
            popcount: 0,
        }
    }

    pub fn from_bits(n_bits: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Self::zeros(n_bits);
        for b in bits {
            fp.set(b);
        }
        fp
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.n_bits, "bit {bit} out of range");
        let (w, m) = (bit / 64, 1u64 << (bit % 64));
        if self.words[w] & m == 0 {
            self.words[w] |= m;
            self.popcount += 1;
        }
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn popcount(&self) -> u32 {
        self.popcount
    }

    pub fn is_zero(&self) -> bool {
        self.popcount == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_bits).filter(|&b| self.get(b))
    }

    /// XOR-folds the vector down to `width` bits. `width` must divide the
    /// current width.
    pub fn fold(&self, width: usize) -> ReactionFingerprint {
        assert!(
            width > 0 && self.n_bits.is_multiple_of(width),
            "fold width must divide {}",
            self.n_bits
        );
        let mut out = Self::zeros(width);
        for b in self.ones() {
            let t = b % width;
            let m = 1u64 << (t % 64);
            out.words[t / 64] ^= m;
        }
        out.popcount = out.words.iter().map(|w| w.count_ones()).sum();
        out
    }

    fn intersection(&self, other: &Self) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }
}

/// |a ∧ b| / |a ∨ b|, with two empty vectors counting as identical.
pub fn tanimoto(a: &ReactionFingerprint, b: &ReactionFingerprint) -> Result<f64, WidthMismatch> {
    if a.n_bits != b.n_bits {
        return Err(WidthMismatch(a.n_bits, b.n_bits));
    }
    Ok(tanimoto_unchecked(a, b))
}

pub(crate) fn tanimoto_unchecked(a: &ReactionFingerprint, b: &ReactionFingerprint) -> f64 {
    let inter = a.intersection(b);
    let union = a.popcount + b.popcount - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn hash_words(parts: &[u64]) -> u64 {
    let mut h = FnvHasher::default();
    for p in parts {
        h.write_u64(*p);
    }
    h.finish()
}

fn hash_text(s: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(s.as_bytes());
    h.finish()
}

/// Environment identifiers of radius 0..=radius_max for every atom.
/// Identifiers depend only on the labeled graph, not on atom order.
pub fn environment_ids(mol: &Molecule, radius_max: u32) -> Vec<u64> {
    let adj = mol.adjacency();
    let mut ids: Vec<u64> = mol
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            hash_text(&format!(
                "{}|{}|{}|{}|{}|{}",
                a.element.symbol(),
                a.aromatic as u8,
                a.charge,
                a.hydrogens(),
                adj[i].len(),
                a.isotope.unwrap_or(0)
            ))
        })
        .collect();
    let mut out = ids.clone();
    for r in 1..=radius_max {
        let next: Vec<u64> = (0..ids.len())
            .map(|i| {
                let mut nbrs: Vec<(u64, u64)> = adj[i]
                    .iter()
                    .map(|&(j, b)| (mol.bonds()[b].order as u64, ids[j]))
                    .collect();
                nbrs.sort_unstable();
                let mut parts = vec![r as u64, ids[i]];
                for (o, id) in nbrs {
                    parts.push(o);
                    parts.push(id);
                }
                hash_words(&parts)
            })
            .collect();
        out.extend_from_slice(&next);
        ids = next;
    }
    out
}

fn side_set<'a>(mols: impl Iterator<Item = &'a Molecule>, radius_max: u32) -> HashSet<u64> {
    mols.flat_map(|m| environment_ids(m, radius_max)).collect()
}

/// Agents are counted with the reactants.
pub fn fingerprint(r: &ReactionRecord, radius_max: u32, n_bits: usize) -> ReactionFingerprint {
    let left = side_set(r.reactants.iter().chain(&r.agents), radius_max);
    let right = side_set(r.products.iter(), radius_max);
    let bits = left
        .symmetric_difference(&right)
        .map(|id| (*id % n_bits as u64) as usize);
    ReactionFingerprint::from_bits(n_bits, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::parse_reaction;

    fn fp(s: &str) -> ReactionFingerprint {
        fingerprint(&parse_reaction(s).unwrap(), DEFAULT_RADIUS, DEFAULT_BITS)
    }

    #[test]
    fn identity_reaction_is_empty() {
        assert!(fp("CCO>>CCO").is_zero());
    }

    #[test]
    fn atom_order_does_not_matter() {
        assert_eq!(fp("CCO>>CC=O"), fp("OCC>>O=CC"));
        assert_eq!(
            fp("c1ccccc1O.CC(=O)Cl>>CC(=O)Oc1ccccc1"),
            fp("Oc1ccccc1.ClC(C)=O>>c1ccc(OC(C)=O)cc1")
        );
    }

    #[test]
    fn esterification_is_nonzero() {
        assert!(fp("CCO.CC(=O)O>>CC(=O)OCC.O").popcount() > 0);
    }

    #[test]
    fn tanimoto_definition() {
        let a = ReactionFingerprint::from_bits(64, [1, 2, 3]);
        let b = ReactionFingerprint::from_bits(64, [2, 3, 4]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let c = ReactionFingerprint::from_bits(64, [10]);
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        let z = ReactionFingerprint::zeros(64);
        assert_eq!(tanimoto(&z, &z).unwrap(), 1.0);
        assert_eq!(
            tanimoto(&a, &ReactionFingerprint::zeros(128)),
            Err(WidthMismatch(64, 128))
        );
    }

    #[test]
    fn fold_xors_bits() {
        let a = ReactionFingerprint::from_bits(512, [1, 257, 3, 300]);
        let f = a.fold(256);
        assert_eq!(f.ones().collect::<Vec<_>>(), vec![3, 44]);
        assert_eq!(f.popcount(), 2);
    }
}
