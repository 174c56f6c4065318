//! Canonical SMILES.
//!
//! Atoms are ranked by iterative partition refinement over (element,
//! charge, isotope, degree, hydrogen count, aromaticity) and neighbor
//! classes. Remaining ties are broken by individualizing each member of the
//! first tied class in turn and keeping the lexicographically smallest
//! output string. Stereo marks are never written.

use super::aromatic::unbracketed_hydrogens;
use super::molecule::{BondOrder, Molecule};

/// Tie-break leaves explored exhaustively before falling back to the first
/// branch of each remaining tied class.
const LEAF_BUDGET: usize = 256;

pub fn canonical_smiles(mol: &Molecule) -> String {
    best_leaf(mol).map(|(s, _)| s).unwrap_or_default()
}

/// Canonical atom ranks (0 = first written).
pub fn canonical_ranks(mol: &Molecule) -> Vec<usize> {
    best_leaf(mol).map(|(_, r)| r).unwrap_or_default()
}

fn best_leaf(mol: &Molecule) -> Option<(String, Vec<usize>)> {
    if mol.atoms.is_empty() {
        return None;
    }
    let adj = mol.adjacency();
    let initial = initial_classes(mol, &adj);
    let classes = refine(mol, &adj, initial);
    let mut search = Search {
        mol,
        adj: &adj,
        budget: LEAF_BUDGET,
        best: None,
    };
    search.run(classes);
    search.best
}

fn initial_classes(mol: &Molecule, adj: &[Vec<(usize, usize)>]) -> Vec<usize> {
    let keys: Vec<_> = mol
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            (
                a.element.atomic_number(),
                a.charge,
                a.isotope.unwrap_or(0),
                adj[i].len(),
                a.hydrogens(),
                a.aromatic,
            )
        })
        .collect();
    dense_ranks(&keys)
}

fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn class_count(classes: &[usize]) -> usize {
    classes.iter().max().map_or(0, |m| m + 1)
}

fn refine(mol: &Molecule, adj: &[Vec<(usize, usize)>], mut classes: Vec<usize>) -> Vec<usize> {
    loop {
        let before = class_count(&classes);
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..classes.len())
            .map(|i| {
                let mut nbrs: Vec<(usize, u8)> = adj[i]
                    .iter()
                    .map(|&(j, bi)| (classes[j], mol.bonds[bi].order.code()))
                    .collect();
                nbrs.sort_unstable();
                (classes[i], nbrs)
            })
            .collect();
        classes = dense_ranks(&keys);
        if class_count(&classes) == before {
            return classes;
        }
    }
}

struct Search<'a> {
    mol: &'a Molecule,
    adj: &'a [Vec<(usize, usize)>],
    budget: usize,
    best: Option<(String, Vec<usize>)>,
}

impl Search<'_> {
    fn first_tied_class(classes: &[usize]) -> Option<(usize, Vec<usize>)> {
        let mut counts = vec![0usize; class_count(classes)];
        for &c in classes {
            counts[c] += 1;
        }
        let target = counts.iter().position(|&n| n > 1)?;
        let members = (0..classes.len())
            .filter(|&i| classes[i] == target)
            .collect();
        Some((target, members))
    }

    fn individualize(&self, classes: &[usize], target: usize, atom: usize) -> Vec<usize> {
        let keys: Vec<(usize, bool)> = classes
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, c == target && i != atom))
            .collect();
        refine(self.mol, self.adj, dense_ranks(&keys))
    }

    fn run(&mut self, classes: Vec<usize>) {
        match Self::first_tied_class(&classes) {
            None => {
                self.budget = self.budget.saturating_sub(1);
                let s = write_smiles(self.mol, self.adj, &classes);
                if self.best.as_ref().is_none_or(|(b, _)| s < *b) {
                    self.best = Some((s, classes));
                }
            }
            Some((target, members)) => {
                for (k, &atom) in members.iter().enumerate() {
                    if k > 0 && self.budget == 0 {
                        break;
                    }
                    let next = self.individualize(&classes, target, atom);
                    self.run(next);
                }
            }
        }
    }
}

/// Writes SMILES for a discrete ranking. Components are written separately
/// and joined in lexicographic order.
fn write_smiles(mol: &Molecule, adj: &[Vec<(usize, usize)>], rank: &[usize]) -> String {
    let n = mol.atoms.len();
    let mut sorted_adj: Vec<Vec<(usize, usize)>> = adj.to_vec();
    for list in &mut sorted_adj {
        list.sort_by_key(|&(j, _)| rank[j]);
    }
    let mut sigma = vec![0u32; n];
    for b in &mol.bonds {
        sigma[b.a] += b.order.valence_contribution();
        sigma[b.b] += b.order.valence_contribution();
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| rank[i]);

    let mut w = Writer {
        mol,
        adj: &sorted_adj,
        sigma: &sigma,
        visited: vec![false; n],
        ring_seen: vec![false; mol.bonds.len()],
        children: vec![Vec::new(); n],
        opens: vec![Vec::new(); n],
        closes: vec![Vec::new(); n],
        digit_of: vec![0; mol.bonds.len()],
        in_use: Vec::new(),
    };

    let mut parts = Vec::new();
    for &start in &order {
        if w.visited[start] {
            continue;
        }
        w.discover(start, usize::MAX);
        let mut out = String::new();
        w.emit(start, &mut out);
        parts.push(out);
    }
    parts.sort();
    parts.join(".")
}

struct Writer<'a> {
    mol: &'a Molecule,
    adj: &'a [Vec<(usize, usize)>],
    sigma: &'a [u32],
    visited: Vec<bool>,
    ring_seen: Vec<bool>,
    children: Vec<Vec<(usize, usize)>>,
    opens: Vec<Vec<usize>>,
    closes: Vec<Vec<usize>>,
    digit_of: Vec<u32>,
    in_use: Vec<bool>,
}

impl Writer<'_> {
    fn discover(&mut self, u: usize, parent_bond: usize) {
        self.visited[u] = true;
        let adj = self.adj;
        for &(v, bi) in &adj[u] {
            if bi == parent_bond {
                continue;
            }
            if self.visited[v] {
                if !self.ring_seen[bi] {
                    self.ring_seen[bi] = true;
                    self.opens[v].push(bi);
                    self.closes[u].push(bi);
                }
            } else {
                self.children[u].push((v, bi));
                self.discover(v, bi);
            }
        }
    }

    fn take_digit(&mut self) -> u32 {
        let free = self
            .in_use
            .iter()
            .skip(1)
            .position(|used| !used)
            .map(|p| p + 1);
        let d = match free {
            Some(d) => d,
            None => {
                if self.in_use.is_empty() {
                    self.in_use.push(true);
                }
                self.in_use.push(false);
                self.in_use.len() - 1
            }
        };
        self.in_use[d] = true;
        d as u32
    }

    fn emit(&mut self, u: usize, out: &mut String) {
        out.push_str(&self.atom_symbol(u));
        let mut closes = std::mem::take(&mut self.closes[u]);
        closes.sort_by_key(|&bi| self.digit_of[bi]);
        for bi in closes {
            let d = self.digit_of[bi];
            push_digit(out, d);
            self.in_use[d as usize] = false;
        }
        let opens = std::mem::take(&mut self.opens[u]);
        for bi in opens {
            let d = self.take_digit();
            self.digit_of[bi] = d;
            out.push_str(self.bond_symbol(bi));
            push_digit(out, d);
        }
        let children = std::mem::take(&mut self.children[u]);
        let last = children.len().saturating_sub(1);
        for (k, (v, bi)) in children.into_iter().enumerate() {
            if k < last {
                out.push('(');
                out.push_str(self.bond_symbol(bi));
                self.emit(v, out);
                out.push(')');
            } else {
                out.push_str(self.bond_symbol(bi));
                self.emit(v, out);
            }
        }
    }

    fn bond_symbol(&self, bi: usize) -> &'static str {
        let b = &self.mol.bonds[bi];
        match b.order {
            BondOrder::Aromatic => "",
            BondOrder::Single => {
                if self.mol.atoms[b.a].aromatic && self.mol.atoms[b.b].aromatic {
                    "-"
                } else {
                    ""
                }
            }
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
        }
    }

    fn atom_symbol(&self, u: usize) -> String {
        atom_symbol(self.mol, u, self.sigma[u])
    }
}

pub(crate) fn atom_symbol(mol: &Molecule, u: usize, sigma: u32) -> String {
    let atom = &mol.atoms[u];
    let symbol = if atom.aromatic {
        atom.element.symbol().to_ascii_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    let plain = atom.element.is_organic_subset()
        && atom.charge == 0
        && atom.isotope.is_none()
        && unbracketed_hydrogens(atom.element, atom.aromatic, sigma)
            .is_some_and(|r| r.hydrogens == atom.hydrogens());
    if plain {
        return symbol;
    }
    let mut s = String::from("[");
    if let Some(iso) = atom.isotope {
        s.push_str(&iso.to_string());
    }
    s.push_str(&symbol);
    match atom.hydrogens() {
        0 => {}
        1 => s.push('H'),
        h => {
            s.push('H');
            s.push_str(&h.to_string());
        }
    }
    match atom.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        q if q > 0 => s.push_str(&format!("+{q}")),
        q => s.push_str(&format!("{q}")),
    }
    s.push(']');
    s
}

fn push_digit(out: &mut String, d: u32) {
    if d < 10 {
        out.push(char::from(b'0' + d as u8));
    } else {
        out.push_str(&format!("%{d:02}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_molecule;

    fn canon(s: &str) -> String {
        canonical_smiles(&parse_molecule(s).unwrap())
    }

    #[test]
    fn ethanol_orderings_agree() {
        assert_eq!(canon("OCC"), canon("CCO"));
        assert_eq!(canon("C(O)C"), canon("CCO"));
    }

    #[test]
    fn kekule_and_aromatic_benzene_agree() {
        assert_eq!(canon("C1=CC=CC=C1"), canon("c1ccccc1"));
        assert_eq!(canon("c1ccccc1"), "c1ccccc1");
    }

    #[test]
    fn aromatic_heterocycles() {
        assert_eq!(canon("C1=CC=NC=C1"), canon("c1ccncc1"));
        assert_eq!(canon("C1=CNC=C1"), canon("c1cc[nH]c1"));
        assert_eq!(canon("O=C1C=CC=CN1"), canon("O=c1cccc[nH]1"));
        assert_eq!(canon("C1=CC2=CC=CC=C2C=C1"), canon("c1ccc2ccccc2c1"));
        assert_eq!(canon("C1=CC=C2C(=C1)C=CN2"), canon("c1ccc2[nH]ccc2c1"));
        assert_eq!(canon("N1=CC=CC2=CC=CC=C12"), canon("c1ccc2ncccc2c1"));
    }

    #[test]
    fn non_aromatic_rings_stay_kekule() {
        assert_eq!(canon("C1=CCC=C1"), canon("C1C=CC=C1"));
        assert!(!canon("C1=CCC=C1").contains('c'));
        assert!(!canon("C1=CC=CC=CC=C1").contains('c'));
    }

    #[test]
    fn biphenyl_keeps_explicit_single() {
        let s = canon("c1ccccc1-c1ccccc1");
        assert!(s.contains('-'), "{s}");
        assert_eq!(canonical_smiles(&parse_molecule(&s).unwrap()), s);
    }

    #[test]
    fn ions_and_brackets() {
        assert_eq!(canon("[Na+].[Cl-]"), "[Cl-].[Na+]");
        assert_eq!(canon("[OH-]"), "[OH-]");
        assert_eq!(canon("[NH4+]"), "[NH4+]");
        assert_eq!(canon("[2H]C"), canon("C[2H]"));
        assert_eq!(canon("[H][H]"), "[H][H]");
    }

    #[test]
    fn stereo_is_dropped() {
        assert_eq!(canon("C[C@H](O)CC"), canon("CC(O)CC"));
        assert_eq!(canon("F/C=C/F"), canon("FC=CF"));
    }

    #[test]
    fn canonical_is_fixed_point() {
        for s in [
            "CC(=O)OCC",
            "O=S(=O)(O)O",
            "c1ccc2c(c1)[nH]c1ccccc12",
            "CC(C)(C)c1ccc(O)cc1",
            "C1CC2CCC1CC2",
            "OC(=O)c1ccccc1C(=O)O",
            "[O-][N+](=O)c1ccccc1",
            "C12C3C4C1C5C2C3C45",
        ] {
            let c = canon(s);
            assert_eq!(canon(&c), c, "{s}");
        }
    }

    #[test]
    fn ring_digits_above_nine() {
        let s = "C1CC2CC3CC4CC5CC6CC7CC8CC9CC%10CC%11CCC%11C%10C9C8C7C6C5C4C3C2C1";
        let c = canon(s);
        assert_eq!(canon(&c), c);
    }
}
