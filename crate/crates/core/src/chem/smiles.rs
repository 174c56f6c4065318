//! SMILES reader.
//!
//! Supports the organic subset, bracket atoms (isotope, chirality, hydrogen
//! count, charge, atom class), branches, ring closures (including `%nn`),
//! explicit bond symbols and dot-disconnected components. Implicit hydrogens
//! are resolved from the default-valence table; aromatic input is checked by
//! Kekulé assignment and aromaticity is re-perceived from the Kekulé form.

use std::collections::HashMap;

use thiserror::Error;

use super::aromatic;
use super::element::Element;
use super::molecule::{Atom, Bond, BondOrder, Molecule, StereoMark};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesErrorKind {
    #[error("empty SMILES")]
    Empty,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("unclosed bracket atom")]
    UnclosedBracket,
    #[error("unbalanced parenthesis")]
    UnbalancedParen,
    #[error("ring bond {0} was never closed")]
    UnclosedRing(u32),
    #[error("ring bond {0} has conflicting bond orders")]
    RingBondMismatch(u32),
    #[error("bond symbol without a following atom")]
    DanglingBond,
    #[error("atom bonded to itself")]
    SelfBond,
    #[error("duplicate bond between the same atoms")]
    DuplicateBond,
    #[error("unsupported feature: {0}")]
    Unsupported(&'static str),
    #[error("atom {atom} ({element}) exceeds its allowed valence with {valence} bonds")]
    Valence {
        atom: usize,
        element: Element,
        valence: u32,
    },
    #[error("aromatic system cannot be kekulized")]
    Kekulize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} (at position {position})")]
pub struct SmilesError {
    pub position: usize,
    pub kind: SmilesErrorKind,
}

impl SmilesError {
    fn new(position: usize, kind: SmilesErrorKind) -> Self {
        SmilesError { position, kind }
    }

    /// Valence and Kekulé failures are chemistry errors; everything else is
    /// a syntax error.
    pub fn is_valence_error(&self) -> bool {
        matches!(
            self.kind,
            SmilesErrorKind::Valence { .. } | SmilesErrorKind::Kekulize
        )
    }
}

/// Parses one molecule (possibly with several dot-separated components).
pub fn parse_molecule(smiles: &str) -> Result<Molecule, SmilesError> {
    let trimmed = smiles.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::new(0, SmilesErrorKind::Empty));
    }
    let raw = Reader::new(trimmed).read()?;
    let mut mol = raw.finish()?;
    mol.source = Some(trimmed.to_string());
    Ok(mol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSymbol {
    Order(BondOrder),
    Up,
    Down,
}

impl BondSymbol {
    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Order(o) => o,
            BondSymbol::Up | BondSymbol::Down => BondOrder::Single,
        }
    }
}

struct RawGraph {
    atoms: Vec<Atom>,
    bonds: Vec<(usize, usize, Option<BondSymbol>)>,
    chirality: Vec<(usize, String)>,
}

struct Reader<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    graph: RawGraph,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            text,
            bytes: text.as_bytes(),
            pos: 0,
            graph: RawGraph {
                atoms: Vec::new(),
                bonds: Vec::new(),
                chirality: Vec::new(),
            },
        }
    }

    fn err(&self, kind: SmilesErrorKind) -> SmilesError {
        SmilesError::new(self.pos, kind)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn read(mut self) -> Result<RawGraph, SmilesError> {
        let mut prev: Option<usize> = None;
        let mut branches: Vec<Option<usize>> = Vec::new();
        let mut pending: Option<BondSymbol> = None;
        let mut rings: HashMap<u32, (usize, Option<BondSymbol>, usize)> = HashMap::new();

        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if prev.is_none() {
                        return Err(self.err(SmilesErrorKind::UnbalancedParen));
                    }
                    branches.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    prev = branches
                        .pop()
                        .ok_or_else(|| self.err(SmilesErrorKind::UnbalancedParen))?;
                    self.pos += 1;
                }
                b'.' => {
                    if prev.is_none() {
                        return Err(self.err(SmilesErrorKind::UnexpectedChar('.')));
                    }
                    if pending.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    if !branches.is_empty() {
                        return Err(self.err(SmilesErrorKind::UnbalancedParen));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' | b'$' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    pending = Some(match c {
                        b'-' => BondSymbol::Order(BondOrder::Single),
                        b'=' => BondSymbol::Order(BondOrder::Double),
                        b'#' => BondSymbol::Order(BondOrder::Triple),
                        b':' => BondSymbol::Order(BondOrder::Aromatic),
                        b'/' => BondSymbol::Up,
                        b'\\' => BondSymbol::Down,
                        _ => return Err(self.err(SmilesErrorKind::Unsupported("quadruple bond"))),
                    });
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let start = self.pos;
                    let number = self.ring_number()?;
                    let atom =
                        prev.ok_or_else(|| self.err(SmilesErrorKind::UnexpectedChar(c as char)))?;
                    match rings.remove(&number) {
                        Some((open_atom, open_sym, _)) => {
                            let sym = match (open_sym, pending) {
                                (Some(a), Some(b)) if a.order() != b.order() => {
                                    return Err(SmilesError::new(
                                        start,
                                        SmilesErrorKind::RingBondMismatch(number),
                                    ))
                                }
                                (Some(a), _) => Some(a),
                                (None, b) => b,
                            };
                            self.add_bond(open_atom, atom, sym, start)?;
                        }
                        None => {
                            rings.insert(number, (atom, pending, start));
                        }
                    }
                    pending = None;
                }
                b'[' | b'A'..=b'Z' | b'a'..=b'z' | b'*' => {
                    let start = self.pos;
                    let idx = if c == b'[' {
                        self.bracket_atom()?
                    } else {
                        self.organic_atom()?
                    };
                    if let Some(p) = prev {
                        self.add_bond(p, idx, pending.take(), start)?;
                    } else if pending.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    prev = Some(idx);
                }
                other => return Err(self.err(SmilesErrorKind::UnexpectedChar(other as char))),
            }
        }
        if pending.is_some() {
            return Err(self.err(SmilesErrorKind::DanglingBond));
        }
        if !branches.is_empty() {
            return Err(self.err(SmilesErrorKind::UnbalancedParen));
        }
        if let Some((&number, &(_, _, at))) = rings.iter().min_by_key(|(_, v)| v.2) {
            return Err(SmilesError::new(at, SmilesErrorKind::UnclosedRing(number)));
        }
        Ok(self.graph)
    }

    fn ring_number(&mut self) -> Result<u32, SmilesError> {
        let c = self.bytes[self.pos];
        if c == b'%' {
            let digits = self.bytes.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(((d[0] - b'0') * 10 + (d[1] - b'0')) as u32)
                }
                _ => Err(self.err(SmilesErrorKind::UnexpectedChar('%'))),
            }
        } else {
            self.pos += 1;
            Ok((c - b'0') as u32)
        }
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        sym: Option<BondSymbol>,
        at: usize,
    ) -> Result<(), SmilesError> {
        if a == b {
            return Err(SmilesError::new(at, SmilesErrorKind::SelfBond));
        }
        if self
            .graph
            .bonds
            .iter()
            .any(|&(x, y, _)| (x == a && y == b) || (x == b && y == a))
        {
            return Err(SmilesError::new(at, SmilesErrorKind::DuplicateBond));
        }
        self.graph.bonds.push((a, b, sym));
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<usize, SmilesError> {
        let rest = &self.text[self.pos..];
        let (symbol, aromatic, len) = if rest.starts_with("Cl") {
            ("Cl", false, 2)
        } else if rest.starts_with("Br") {
            ("Br", false, 2)
        } else {
            let c = rest.as_bytes()[0];
            match c {
                b'B' => ("B", false, 1),
                b'C' => ("C", false, 1),
                b'N' => ("N", false, 1),
                b'O' => ("O", false, 1),
                b'P' => ("P", false, 1),
                b'S' => ("S", false, 1),
                b'F' => ("F", false, 1),
                b'I' => ("I", false, 1),
                b'b' => ("B", true, 1),
                b'c' => ("C", true, 1),
                b'n' => ("N", true, 1),
                b'o' => ("O", true, 1),
                b'p' => ("P", true, 1),
                b's' => ("S", true, 1),
                b'*' => return Err(self.err(SmilesErrorKind::Unsupported("wildcard atom"))),
                _ => {
                    let word: String = rest
                        .chars()
                        .take_while(|ch| ch.is_ascii_alphabetic())
                        .take(2)
                        .collect();
                    return Err(self.err(SmilesErrorKind::UnknownElement(word)));
                }
            }
        };
        self.pos += len;
        let element = Element::from_symbol(symbol).expect("organic subset symbol");
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        self.graph.atoms.push(atom);
        Ok(self.graph.atoms.len() - 1)
    }

    fn bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        let close = self.text[open..]
            .find(']')
            .map(|i| open + i)
            .ok_or_else(|| self.err(SmilesErrorKind::UnclosedBracket))?;
        let body = &self.text[open + 1..close];
        if body.contains('[') {
            return Err(SmilesError::new(open, SmilesErrorKind::UnclosedBracket));
        }
        let b = body.as_bytes();
        let mut i = 0;
        let at = |i: usize| {
            SmilesError::new(
                open + 1 + i,
                SmilesErrorKind::UnexpectedChar(body[i..].chars().next().unwrap_or(']')),
            )
        };

        let iso_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        let isotope = if i > iso_start {
            Some(
                body[iso_start..i]
                    .parse::<u16>()
                    .map_err(|_| at(iso_start))?,
            )
        } else {
            None
        };

        if i >= b.len() {
            return Err(SmilesError::new(
                open,
                SmilesErrorKind::UnknownElement(String::new()),
            ));
        }
        let (element, aromatic, len) = bracket_symbol(&body[i..]).ok_or_else(|| {
            let word: String = body[i..]
                .chars()
                .take_while(|ch| ch.is_ascii_alphabetic())
                .collect();
            SmilesError::new(open + 1 + i, SmilesErrorKind::UnknownElement(word))
        })?;
        i += len;

        if i < b.len() && b[i] == b'@' {
            let start = i;
            i += 1;
            if i < b.len() && b[i] == b'@' {
                i += 1;
            } else if i + 1 < b.len() && b[i].is_ascii_uppercase() && b[i + 1].is_ascii_uppercase()
            {
                i += 2;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let idx = self.graph.atoms.len();
            self.graph.chirality.push((idx, body[start..i].to_string()));
        }

        let mut hcount = 0u8;
        if i < b.len() && b[i] == b'H' {
            i += 1;
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            hcount = if i > start {
                body[start..i].parse().map_err(|_| at(start))?
            } else {
                1
            };
        }

        let mut charge = 0i32;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            let sign = if b[i] == b'+' { 1 } else { -1 };
            let sym = b[i];
            i += 1;
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            if i > start {
                charge = sign * body[start..i].parse::<i32>().map_err(|_| at(start))?;
            } else {
                let mut n = 1;
                while i < b.len() && b[i] == sym {
                    n += 1;
                    i += 1;
                }
                charge = sign * n;
            }
        }

        if i < b.len() && b[i] == b':' {
            i += 1;
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            if i == start {
                return Err(at(start.min(b.len().saturating_sub(1))));
            }
        }
        if i != b.len() {
            return Err(at(i));
        }

        self.pos = close + 1;
        let mut atom = Atom::new(element);
        atom.isotope = isotope;
        atom.charge = charge;
        atom.explicit_h = Some(hcount);
        atom.aromatic = aromatic;
        self.graph.atoms.push(atom);
        Ok(self.graph.atoms.len() - 1)
    }
}

fn bracket_symbol(s: &str) -> Option<(Element, bool, usize)> {
    // Two-letter symbols take precedence ("Cl" over "C", "Sc" over "S").
    for len in [2usize, 1] {
        if s.len() < len || !s.is_char_boundary(len) {
            continue;
        }
        let cand = &s[..len];
        if let Some(e) = Element::from_symbol(cand) {
            if cand.as_bytes()[0].is_ascii_uppercase() {
                return Some((e, false, len));
            }
        }
        if cand.as_bytes()[0].is_ascii_lowercase() {
            let mut upper = cand.to_string();
            upper[..1].make_ascii_uppercase();
            if let Some(e) = Element::from_symbol(&upper) {
                if e.can_be_aromatic() {
                    return Some((e, true, len));
                }
            }
        }
    }
    None
}

impl RawGraph {
    fn finish(self) -> Result<Molecule, SmilesError> {
        let RawGraph {
            mut atoms,
            bonds: raw_bonds,
            chirality,
        } = self;

        let mut bonds = Vec::with_capacity(raw_bonds.len());
        let mut stereo: Vec<StereoMark> = chirality
            .into_iter()
            .map(|(atom, tag)| StereoMark::Atom { atom, tag })
            .collect();
        for (i, (a, b, sym)) in raw_bonds.into_iter().enumerate() {
            let order = match sym {
                Some(s) => s.order(),
                None if atoms[a].aromatic && atoms[b].aromatic => BondOrder::Aromatic,
                None => BondOrder::Single,
            };
            match sym {
                Some(BondSymbol::Up) => stereo.push(StereoMark::Bond { bond: i, up: true }),
                Some(BondSymbol::Down) => stereo.push(StereoMark::Bond { bond: i, up: false }),
                _ => {}
            }
            bonds.push(Bond { a, b, order });
        }

        let mut sigma = vec![0u32; atoms.len()];
        for bond in &bonds {
            sigma[bond.a] += bond.order.valence_contribution();
            sigma[bond.b] += bond.order.valence_contribution();
        }

        let mut needs_pi = vec![false; atoms.len()];
        for (i, atom) in atoms.iter_mut().enumerate() {
            if atom.is_bracket() {
                if atom.aromatic {
                    needs_pi[i] = aromatic::bracket_needs_pi(atom, sigma[i]);
                }
                continue;
            }
            let resolved = aromatic::unbracketed_hydrogens(atom.element, atom.aromatic, sigma[i])
                .ok_or(SmilesError::new(
                0,
                SmilesErrorKind::Valence {
                    atom: i,
                    element: atom.element,
                    valence: sigma[i],
                },
            ))?;
            atom.implicit_h = resolved.hydrogens;
            needs_pi[i] = resolved.needs_pi;
        }

        let kekule = aromatic::kekulize(&atoms, &bonds, &needs_pi)
            .ok_or(SmilesError::new(0, SmilesErrorKind::Kekulize))?;
        let (atoms, bonds) = aromatic::perceive(atoms, kekule);
        Ok(Molecule {
            atoms,
            bonds,
            stereo,
            source: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(smiles: &str) -> Vec<u8> {
        parse_molecule(smiles)
            .unwrap()
            .atoms()
            .iter()
            .map(Atom::hydrogens)
            .collect()
    }

    #[test]
    fn ethanol_formula() {
        let m = parse_molecule("CCO").unwrap();
        assert_eq!(m.formula().to_string(), "C2H6O");
        assert_eq!(m.formula().net_charge, 0);
    }

    #[test]
    fn bracket_sodium_has_no_implicit_h() {
        let m = parse_molecule("[Na+]").unwrap();
        assert_eq!(m.atom_count(), 1);
        assert_eq!(m.atoms()[0].charge, 1);
        assert_eq!(m.atoms()[0].hydrogens(), 0);
    }

    #[test]
    fn sulfuric_acid_formula() {
        let m = parse_molecule("O=S(=O)(O)O").unwrap();
        assert_eq!(m.formula().to_string(), "H2O4S");
    }

    #[test]
    fn aromatic_hydrogens() {
        assert_eq!(hs("c1ccccc1"), vec![1; 6]);
        assert_eq!(hs("c1ccncc1"), vec![1, 1, 1, 0, 1, 1]);
        assert_eq!(hs("c1cc[nH]c1"), vec![1, 1, 1, 1, 1]);
        assert_eq!(hs("c1ccoc1"), vec![1, 1, 1, 0, 1]);
        assert_eq!(hs("Cn1cccc1"), vec![3, 0, 1, 1, 1, 1]);
        assert_eq!(hs("O=c1cccc[nH]1"), vec![0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn hypervalent_defaults() {
        assert_eq!(hs("CS(C)(=O)=O"), vec![3, 0, 3, 0, 0]);
        assert_eq!(hs("OP(O)(O)=O"), vec![1, 0, 1, 1, 0]);
    }

    #[test]
    fn charge_forms() {
        let m = parse_molecule("[O--]").unwrap();
        assert_eq!(m.atoms()[0].charge, -2);
        let m = parse_molecule("[Fe+3]").unwrap();
        assert_eq!(m.atoms()[0].charge, 3);
        let m = parse_molecule("[NH4+]").unwrap();
        assert_eq!(m.formula().to_string(), "H4N+1");
    }

    #[test]
    fn ring_closures_and_percent() {
        let m = parse_molecule("C%10CCCCC%10").unwrap();
        assert_eq!(m.bonds().len(), 6);
        let m = parse_molecule("C1CC=1").unwrap();
        assert_eq!(m.bonds()[2].order, BondOrder::Double);
    }

    #[test]
    fn stereo_is_carried() {
        let m = parse_molecule("C[C@H](O)CC").unwrap();
        assert_eq!(m.stereo_marks().len(), 1);
        let m = parse_molecule("F/C=C/F").unwrap();
        assert_eq!(m.stereo_marks().len(), 2);
        assert_eq!(m.formula().to_string(), "C2H2F2");
    }

    #[test]
    fn lanthanide_accepted_with_explicit_h_only() {
        let m = parse_molecule("[Eu+3]").unwrap();
        assert_eq!(m.atoms()[0].hydrogens(), 0);
    }

    #[test]
    fn atom_map_numbers_are_ignored() {
        let m = parse_molecule("[CH3:1][OH:2]").unwrap();
        assert_eq!(m.formula().to_string(), "CH4O");
    }

    #[test]
    fn syntax_errors() {
        for bad in [
            "C(C", "C)C", "C1CC", "[Na", "Xy", "C=", "C..C", "=C", "[Xx]", "C11", "*C",
        ] {
            let err = parse_molecule(bad).unwrap_err();
            assert!(!err.is_valence_error(), "{bad}: {err}");
        }
        assert_eq!(parse_molecule("").unwrap_err().kind, SmilesErrorKind::Empty);
    }

    #[test]
    fn valence_errors() {
        for bad in ["C(C)(C)(C)(C)C", "FF=C", "c1cccc1"] {
            let err = parse_molecule(bad).unwrap_err();
            assert!(err.is_valence_error(), "{bad}: {err}");
        }
    }
}
