use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::element::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the sigma/explicit valence sum. Aromatic bonds count
    /// as one; the extra pi electron is accounted for separately.
    pub(crate) fn valence_contribution(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub isotope: Option<u16>,
    pub charge: i32,
    /// Hydrogen count written inside a bracket atom.
    pub explicit_h: Option<u8>,
    pub aromatic: bool,
    /// Hydrogens added by valence resolution (zero for bracket atoms).
    pub implicit_h: u8,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            isotope: None,
            charge: 0,
            explicit_h: None,
            aromatic: false,
            implicit_h: 0,
        }
    }

    pub fn hydrogens(&self) -> u8 {
        self.explicit_h.unwrap_or(0) + self.implicit_h
    }

    pub fn is_bracket(&self) -> bool {
        self.explicit_h.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Stereo annotations carried verbatim from the input. They never take part
/// in comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StereoMark {
    /// Chirality tag (`@`, `@@`, `@TH1`, ...) on an atom.
    Atom { atom: usize, tag: String },
    /// Directional single bond (`/` or `\`), recorded on the bond index.
    Bond { bond: usize, up: bool },
}

/// A molecular graph with resolved hydrogen counts and perceived
/// aromaticity. May hold several disconnected components ("[Na+].[Cl-]").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Molecule {
    pub(crate) atoms: Vec<Atom>,
    pub(crate) bonds: Vec<Bond>,
    pub(crate) stereo: Vec<StereoMark>,
    pub(crate) source: Option<String>,
}

impl Molecule {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn stereo_marks(&self) -> &[StereoMark] {
        &self.stereo
    }

    pub fn has_stereo(&self) -> bool {
        !self.stereo.is_empty()
    }

    /// The text this molecule was parsed from, if any.
    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn without_stereo(&self) -> Molecule {
        Molecule {
            atoms: self.atoms.clone(),
            bonds: self.bonds.clone(),
            stereo: Vec::new(),
            source: None,
        }
    }

    /// Neighbor lists as (neighbor, bond index) pairs.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (i, b) in self.bonds.iter().enumerate() {
            adj[b.a].push((b.b, i));
            adj[b.b].push((b.a, i));
        }
        adj
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .count()
    }

    /// Relabels atoms so that old atom `i` becomes `perm[i]`.
    ///
    /// Panics if `perm` is not a permutation of `0..atom_count()`.
    pub fn renumbered(&self, perm: &[usize]) -> Molecule {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let mut atoms = vec![None; self.atoms.len()];
        for (old, &new) in perm.iter().enumerate() {
            assert!(atoms[new].is_none(), "not a permutation");
            atoms[new] = Some(self.atoms[old].clone());
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                order: b.order,
            })
            .collect();
        let stereo = self
            .stereo
            .iter()
            .map(|m| match m {
                StereoMark::Atom { atom, tag } => StereoMark::Atom {
                    atom: perm[*atom],
                    tag: tag.clone(),
                },
                other => other.clone(),
            })
            .collect();
        Molecule {
            atoms: atoms.into_iter().map(Option::unwrap).collect(),
            bonds,
            stereo,
            source: None,
        }
    }

    /// Connected components as sorted atom index lists, ordered by their
    /// smallest atom index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start] = true;
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn formula(&self) -> Formula {
        let mut f = Formula::default();
        for atom in &self.atoms {
            f.add_element(atom.element, 1);
            if atom.hydrogens() > 0 {
                f.add_element(Element::H, atom.hydrogens() as i64);
            }
            f.net_charge += atom.charge as i64;
        }
        f
    }
}

/// Element counts (hydrogen included) and net formal charge.
///
/// Counts are signed so that differences can be expressed; values built from
/// molecules are always positive. Zero entries are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Formula {
    pub counts: BTreeMap<Element, i64>,
    pub net_charge: i64,
}

impl Formula {
    pub fn add_element(&mut self, element: Element, n: i64) {
        if n == 0 {
            return;
        }
        let entry = self.counts.entry(element).or_insert(0);
        *entry += n;
        if *entry == 0 {
            self.counts.remove(&element);
        }
    }

    pub fn count(&self, element: Element) -> i64 {
        self.counts.get(&element).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.counts.is_empty() && self.net_charge == 0
    }

    /// Total number of atoms, optionally leaving hydrogen out.
    pub fn atom_total(&self, include_h: bool) -> i64 {
        self.counts
            .iter()
            .filter(|(e, _)| include_h || **e != Element::H)
            .map(|(_, n)| n.abs())
            .sum()
    }
}

impl Add for Formula {
    type Output = Formula;
    fn add(mut self, rhs: Formula) -> Formula {
        self += rhs;
        self
    }
}

impl AddAssign for Formula {
    fn add_assign(&mut self, rhs: Formula) {
        for (e, n) in rhs.counts {
            self.add_element(e, n);
        }
        self.net_charge += rhs.net_charge;
    }
}

impl<'a> AddAssign<&'a Formula> for Formula {
    fn add_assign(&mut self, rhs: &'a Formula) {
        for (e, n) in &rhs.counts {
            self.add_element(*e, *n);
        }
        self.net_charge += rhs.net_charge;
    }
}

impl Neg for Formula {
    type Output = Formula;
    fn neg(self) -> Formula {
        Formula {
            counts: self.counts.into_iter().map(|(e, n)| (e, -n)).collect(),
            net_charge: -self.net_charge,
        }
    }
}

impl Sub for Formula {
    type Output = Formula;
    fn sub(self, rhs: Formula) -> Formula {
        self + (-rhs)
    }
}

impl Sum for Formula {
    fn sum<I: Iterator<Item = Formula>>(iter: I) -> Formula {
        iter.fold(Formula::default(), |acc, f| acc + f)
    }
}

/// Hill order: C, H, then alphabetical; without carbon, fully alphabetical.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut keys: Vec<Element> = self.counts.keys().copied().collect();
        let has_carbon = self.counts.contains_key(&Element::C);
        keys.sort_by(|a, b| {
            let rank = |e: &Element| match (has_carbon, *e) {
                (true, Element::C) => 0,
                (true, Element::H) => 1,
                _ => 2,
            };
            rank(a).cmp(&rank(b)).then(a.symbol().cmp(b.symbol()))
        });
        for e in keys {
            let n = self.counts[&e];
            if n == 1 {
                write!(f, "{}", e.symbol())?;
            } else {
                write!(f, "{}{}", e.symbol(), n)?;
            }
        }
        match self.net_charge {
            0 => Ok(()),
            q if q > 0 => write!(f, "+{q}"),
            q => write!(f, "{q}"),
        }
    }
}
