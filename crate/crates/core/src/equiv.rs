//! Exact and equivalence-aware comparison of reactions.
//!
//! A side is normalized into a sorted multiset of canonical molecule strings
//! plus a free-proton counter. Views are cumulative: each one adds a
//! normalization step on top of the previous ones.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::ElementDelta;
use crate::chem::{canonical_smiles, parse_molecule, Element, Formula, Molecule};
use crate::reaction::{canonical_multiset, ReactionRecord};

const DEFAULT_RULES: &str = include_str!("../data/equivalence_rules.txt");
const MAX_APPLICATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Canonical,
    EquivalenceMap,
    Ionic,
    ProtonShuffle,
    Rewrite,
}

impl View {
    pub const ALL: [View; 5] = [
        View::Canonical,
        View::EquivalenceMap,
        View::Ionic,
        View::ProtonShuffle,
        View::Rewrite,
    ];

    pub fn label(self) -> &'static str {
        match self {
            View::Canonical => "canonical",
            View::EquivalenceMap => "equivalence_map",
            View::Ionic => "ionic",
            View::ProtonShuffle => "proton_shuffle",
            View::Rewrite => "rewrite",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Expansion,
    Ionic,
    Conjugate,
    Rewrite,
}

impl RuleKind {
    fn from_tag(tag: &str) -> Option<RuleKind> {
        Some(match tag {
            "bidirectional" => RuleKind::Expansion,
            "ionic" => RuleKind::Ionic,
            "conjugate" => RuleKind::Conjugate,
            "rewrite" => RuleKind::Rewrite,
            _ => return None,
        })
    }

    fn view(self) -> View {
        match self {
            RuleKind::Expansion => View::EquivalenceMap,
            RuleKind::Ionic => View::Ionic,
            RuleKind::Conjugate => View::ProtonShuffle,
            RuleKind::Rewrite => View::Rewrite,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("rule line {line} does not conserve atoms/charge (delta {delta})")]
    NotConserved { line: usize, delta: ElementDelta },
    #[error("normalization produced unparseable molecule {0:?}")]
    Unparseable(String),
    #[error("rule set did not reach a fixed point after {MAX_APPLICATIONS} applications")]
    Runaway,
    #[error("cannot read rule file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceRule {
    pub kind: RuleKind,
    /// Sorted canonical component strings.
    pub lhs: Vec<String>,
    pub rhs: Vec<String>,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EquivalenceRuleSet {
    rules: Vec<EquivalenceRule>,
    /// canonical molecule -> (neutral partner, protons released)
    conjugate: HashMap<String, (String, i64)>,
}

/// `#` starts a comment only at line start or after whitespace, since it is
/// also the triple-bond symbol.
pub(crate) fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

/// Splits canonical text into sorted single-component strings.
fn components(mols: &[String]) -> Vec<String> {
    let mut out: Vec<String> = mols
        .iter()
        .flat_map(|s| s.split('.'))
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    out.sort();
    out
}

fn parse_set(text: &str, line: usize) -> Result<(Vec<String>, Formula), RuleError> {
    let mut strings = Vec::new();
    let mut formula = Formula::default();
    for frag in text.split('.') {
        let mol = parse_molecule(frag.trim()).map_err(|e| RuleError::Syntax {
            line,
            message: format!("{frag:?}: {e}"),
        })?;
        formula += mol.formula();
        strings.push(canonical_smiles(&mol));
    }
    Ok((components(&strings), formula))
}

fn proton() -> Formula {
    let mut f = Formula::default();
    f.add_element(Element::H, 1);
    f.net_charge = 1;
    f
}

impl EquivalenceRuleSet {
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let mut set = EquivalenceRuleSet::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            let (lhs, rest) = body.split_once("=>").ok_or_else(|| RuleError::Syntax {
                line,
                message: "missing '=>'".into(),
            })?;
            let mut words = rest.split_whitespace();
            let rhs = words.next().ok_or_else(|| RuleError::Syntax {
                line,
                message: "empty right-hand side".into(),
            })?;
            let kind = match words.next() {
                None => RuleKind::Expansion,
                Some(tag) => RuleKind::from_tag(tag).ok_or_else(|| RuleError::Syntax {
                    line,
                    message: format!("unknown tag {tag:?}"),
                })?,
            };
            if let Some(extra) = words.next() {
                return Err(RuleError::Syntax {
                    line,
                    message: format!("unexpected {extra:?}"),
                });
            }
            let (lhs, lf) = parse_set(lhs.trim(), line)?;
            let (rhs, rf) = parse_set(rhs, line)?;
            let expected = if kind == RuleKind::Conjugate {
                proton()
            } else {
                Formula::default()
            };
            let lhs_charge = lf.net_charge;
            let diff = lf - rf - expected;
            if !diff.is_zero() {
                return Err(RuleError::NotConserved {
                    line,
                    delta: ElementDelta::from_formula(&diff),
                });
            }
            if kind == RuleKind::Conjugate {
                if lhs.len() != 1 || rhs.len() != 1 {
                    return Err(RuleError::Syntax {
                        line,
                        message: "conjugate pairs take one molecule per side".into(),
                    });
                }
                let (acid, base) = (lhs[0].clone(), rhs[0].clone());
                if lhs_charge == 0 {
                    set.conjugate.insert(base, (acid, -1));
                } else {
                    set.conjugate.insert(acid, (base, 1));
                }
            }
            set.rules.push(EquivalenceRule {
                kind,
                lhs,
                rhs,
                line,
            });
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, RuleError> {
        let text = std::fs::read_to_string(path).map_err(|e| RuleError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    /// The bundled rule set.
    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_RULES).expect("bundled equivalence rules are valid")
    }

    pub fn rules(&self) -> &[EquivalenceRule] {
        &self.rules
    }

    pub fn rules_of(&self, kind: RuleKind) -> impl Iterator<Item = &EquivalenceRule> {
        self.rules.iter().filter(move |r| r.kind == kind)
    }

    fn rewrite_fixpoint(&self, mols: &mut Vec<String>, view: View) -> Result<(), RuleError> {
        let active: Vec<&EquivalenceRule> = self
            .rules
            .iter()
            .filter(|r| r.kind != RuleKind::Conjugate && r.kind.view() <= view)
            .collect();
        let mut applied = 0;
        'outer: loop {
            for rule in &active {
                if let Some(rest) = take_multiset(mols, &rule.lhs) {
                    applied += 1;
                    if applied > MAX_APPLICATIONS {
                        return Err(RuleError::Runaway);
                    }
                    *mols = rest;
                    mols.extend(rule.rhs.iter().cloned());
                    mols.sort();
                    continue 'outer;
                }
            }
            return Ok(());
        }
    }

    /// Normal form of one reaction side under `view` (and all earlier views).
    pub fn normalize(&self, side: &[Molecule], view: View) -> Result<NormalizedSide, RuleError> {
        let mut mols: Vec<String> = if view >= View::Ionic {
            side.iter()
                .map(|m| canonical_smiles(&split_alkali_salts(m)))
                .collect()
        } else {
            side.iter().map(canonical_smiles).collect()
        };
        mols = components(&mols);
        if view >= View::EquivalenceMap {
            self.rewrite_fixpoint(&mut mols, view)?;
        }
        let mut protons = 0;
        if view >= View::ProtonShuffle {
            let mut out = Vec::with_capacity(mols.len());
            for s in mols {
                if let Some((partner, released)) = self.conjugate.get(&s) {
                    protons += released;
                    out.push(partner.clone());
                    continue;
                }
                let mol = parse_molecule(&s).map_err(|_| RuleError::Unparseable(s.clone()))?;
                match neutralize(&mol) {
                    None => protons += 1,
                    Some((m, p)) => {
                        protons += p;
                        let text = canonical_smiles(&m);
                        parse_molecule(&text).map_err(|_| RuleError::Unparseable(text.clone()))?;
                        out.push(text);
                    }
                }
            }
            mols = out;
            mols.sort();
        }
        Ok(NormalizedSide {
            molecules: mols,
            protons,
        })
    }
}

/// Removes `needle` (sorted) from `hay` (sorted) if it is a sub-multiset.
fn take_multiset(hay: &[String], needle: &[String]) -> Option<Vec<String>> {
    let mut rest = Vec::with_capacity(hay.len());
    let mut j = 0;
    for s in hay {
        if j < needle.len() && *s == needle[j] {
            j += 1;
        } else {
            rest.push(s.clone());
        }
    }
    (j == needle.len()).then_some(rest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NormalizedSide {
    pub molecules: Vec<String>,
    /// Free protons released (positive) or consumed (negative) while
    /// mapping molecules to their neutral forms.
    pub protons: i64,
}

impl NormalizedSide {
    /// Formula of the normal form with the free protons added back.
    pub fn formula(&self) -> Formula {
        let mut f: Formula = self
            .molecules
            .iter()
            .map(|s| parse_molecule(s).map(|m| m.formula()).unwrap_or_default())
            .sum();
        f.add_element(Element::H, self.protons);
        f.net_charge += self.protons;
        f
    }
}

fn is_alkali(e: Element) -> bool {
    matches!(e.atomic_number(), 3 | 11 | 19 | 37 | 55)
}

/// Breaks single bonds between alkali metals and non-metals into ion pairs.
fn split_alkali_salts(mol: &Molecule) -> Molecule {
    let mut m = mol.without_stereo();
    let mut keep = Vec::with_capacity(m.bonds.len());
    let mut changed = false;
    for bond in &m.bonds {
        let (ea, eb) = (m.atoms[bond.a].element, m.atoms[bond.b].element);
        let metal = match (is_alkali(ea), is_alkali(eb)) {
            (true, false) => Some((bond.a, bond.b)),
            (false, true) => Some((bond.b, bond.a)),
            _ => None,
        };
        match metal {
            Some((metal, other)) if bond.order == crate::chem::BondOrder::Single => {
                for (idx, dq) in [(metal, 1), (other, -1)] {
                    let atom = &mut m.atoms[idx];
                    atom.explicit_h = Some(atom.hydrogens());
                    atom.implicit_h = 0;
                    atom.charge += dq;
                }
                changed = true;
            }
            _ => keep.push(*bond),
        }
    }
    if changed {
        m.bonds = keep;
    }
    m
}

/// Moves each charged heteroatom to its neutral protonation state. Returns
/// the new molecule and the number of protons released, or None when the
/// molecule is a bare proton.
fn neutralize(mol: &Molecule) -> Option<(Molecule, i64)> {
    let mut m = mol.without_stereo();
    if m.atoms.len() == 1 && m.atoms[0].element == Element::H && m.atoms[0].hydrogens() == 0 {
        match m.atoms[0].charge {
            1 => return None,
            -1 => return Some((parse_molecule("[H][H]").expect("literal"), -1)),
            _ => return Some((m, 0)),
        }
    }
    let adj = m.adjacency();
    let mut protons = 0i64;
    for (u, nbrs) in adj.iter().enumerate() {
        let neighbour_charge = |m: &Molecule, sign: i32| {
            nbrs.iter()
                .any(|&(v, _)| m.atoms[v].charge.signum() == sign)
        };
        let e = m.atoms[u].element;
        let charge = m.atoms[u].charge;
        if charge < 0 && matches!(e, Element::O | Element::S | Element::N | Element::SE) {
            if neighbour_charge(&m, 1) {
                continue;
            }
            let atom = &mut m.atoms[u];
            let h = atom.hydrogens() as i32 - charge;
            atom.explicit_h = Some(h as u8);
            atom.implicit_h = 0;
            atom.charge = 0;
            protons += charge as i64;
        } else if charge > 0 && matches!(e, Element::N | Element::O | Element::S | Element::P) {
            if neighbour_charge(&m, -1) {
                continue;
            }
            let atom = &mut m.atoms[u];
            let drop = charge.min(atom.hydrogens() as i32);
            if drop == 0 {
                continue;
            }
            atom.explicit_h = Some(atom.hydrogens() - drop as u8);
            atom.implicit_h = 0;
            atom.charge -= drop;
            protons += drop as i64;
        }
    }
    Some((m, protons))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MatchOutcome {
    pub matched: bool,
    pub view: Option<View>,
}

/// Multiset equality of canonical molecules per side after merging agents.
pub fn exact_match(pred: &ReactionRecord, target: &ReactionRecord) -> bool {
    let (p, t) = (pred.merge_agents(), target.merge_agents());
    canonical_multiset(&p.reactants) == canonical_multiset(&t.reactants)
        && canonical_multiset(&p.products) == canonical_multiset(&t.products)
}

/// Tries the views in order and reports the first one under which both
/// sides of both reactions coincide.
pub fn equivalence_match(
    pred: &ReactionRecord,
    target: &ReactionRecord,
    rules: &EquivalenceRuleSet,
) -> Result<MatchOutcome, RuleError> {
    let (p, t) = (pred.merge_agents(), target.merge_agents());
    for view in View::ALL {
        if rules.normalize(&p.reactants, view)? == rules.normalize(&t.reactants, view)?
            && rules.normalize(&p.products, view)? == rules.normalize(&t.products, view)?
        {
            return Ok(MatchOutcome {
                matched: true,
                view: Some(view),
            });
        }
    }
    Ok(MatchOutcome {
        matched: false,
        view: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::parse_reaction;

    fn rx(s: &str) -> ReactionRecord {
        parse_reaction(s).unwrap()
    }

    fn equiv(a: &str, b: &str) -> MatchOutcome {
        equivalence_match(&rx(a), &rx(b), &EquivalenceRuleSet::default_rules()).unwrap()
    }

    #[test]
    fn exact_match_ignores_order_not_stoichiometry() {
        assert!(exact_match(&rx("O.CCO>>C"), &rx("CCO.O>>C")));
        assert!(!exact_match(&rx("O>>C"), &rx("O.O>>C")));
        assert!(exact_match(&rx("CCO>O>CC=O"), &rx("O.CCO>>CC=O")));
        assert!(exact_match(&rx("C[C@H](O)CC>>C"), &rx("CC(O)CC>>C")));
    }

    #[test]
    fn bundled_rules_load() {
        let set = EquivalenceRuleSet::default_rules();
        assert!(set.rules_of(RuleKind::Conjugate).count() >= 3);
        assert!(set.rules_of(RuleKind::Ionic).count() >= 4);
    }

    #[test]
    fn salt_matches_via_ionic_view() {
        let m = equiv("C>>[Na+].[Cl-]", "C>>[Na]Cl");
        assert_eq!(m.view, Some(View::Ionic));
        let m = equiv("C>>CC(=O)O[Na]", "C>>CC(=O)[O-].[Na+]");
        assert_eq!(m.view, Some(View::Ionic));
    }

    #[test]
    fn thionyl_chloride_hydrolysis_via_rewrite() {
        let m = equiv("C>>O=S=O.Cl.Cl", "C>>O=S(Cl)Cl.O");
        assert_eq!(m.view, Some(View::Rewrite));
    }

    #[test]
    fn acetate_and_proton_via_shuffle() {
        let m = equiv("C>>CC(=O)[O-].[H+]", "C>>CC(=O)O");
        assert_eq!(m.view, Some(View::ProtonShuffle));
    }

    #[test]
    fn hydrogen_chloride_via_map() {
        let m = equiv("C>>Cl", "C>>[H+].[Cl-]");
        assert_eq!(m.view, Some(View::EquivalenceMap));
    }

    #[test]
    fn exact_implies_canonical_view() {
        assert_eq!(equiv("CCO>>CC=O", "OCC>>O=CC").view, Some(View::Canonical));
    }

    #[test]
    fn different_chemistry_does_not_match() {
        assert!(!equiv("CCO>>CC=O", "CCO>>CC(=O)O").matched);
        // proton counts must agree
        assert!(!equiv("C>>CC(=O)[O-]", "C>>CC(=O)O").matched);
    }

    #[test]
    fn nitro_group_is_left_alone() {
        let mol = parse_molecule("C[N+](=O)[O-]").unwrap();
        let (m, p) = neutralize(&mol).unwrap();
        assert_eq!(p, 0);
        assert_eq!(canonical_smiles(&m), canonical_smiles(&mol));
    }

    #[test]
    fn pyridinium_and_phenoxide() {
        let set = EquivalenceRuleSet::default_rules();
        let n = set
            .normalize(
                &[parse_molecule("c1cc[nH+]cc1").unwrap()],
                View::ProtonShuffle,
            )
            .unwrap();
        assert_eq!(
            n.molecules,
            vec![canonical_smiles(&parse_molecule("c1ccncc1").unwrap())]
        );
        assert_eq!(n.protons, 1);
        let n = set
            .normalize(
                &[parse_molecule("[O-]c1ccccc1").unwrap()],
                View::ProtonShuffle,
            )
            .unwrap();
        assert_eq!(n.protons, -1);
    }

    #[test]
    fn unbalanced_rule_is_rejected() {
        let err = EquivalenceRuleSet::parse("Cl => [Cl-] bidirectional").unwrap_err();
        assert!(matches!(err, RuleError::NotConserved { line: 1, .. }));
        let err = EquivalenceRuleSet::parse("O => [OH-].[OH-] conjugate").unwrap_err();
        assert!(matches!(err, RuleError::NotConserved { .. }));
        assert!(matches!(
            EquivalenceRuleSet::parse("Cl => [H+].[Cl-] sideways").unwrap_err(),
            RuleError::Syntax { .. }
        ));
    }

    #[test]
    fn looping_rules_are_caught() {
        let set = EquivalenceRuleSet::parse("O => O\n").unwrap();
        assert_eq!(
            set.normalize(&[parse_molecule("O").unwrap()], View::EquivalenceMap),
            Err(RuleError::Runaway)
        );
    }
}
