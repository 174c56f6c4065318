//! Reaction SMILES records: `reactants>agents>products`.

use std::fmt;

use thiserror::Error;

use crate::chem::{canonical_smiles, parse_molecule, Formula, Molecule, SmilesError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Reactants,
    Agents,
    Products,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Reactants => "reactants",
            Side::Agents => "agents",
            Side::Products => "products",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReactionError {
    #[error("expected exactly two '>' separators, found {0}")]
    ArrowCount(usize),
    #[error("empty molecule in {side} at fragment {index}")]
    EmptyFragment { side: Side, index: usize },
    #[error("{side} fragment {index} ({text}): {source}")]
    Molecule {
        side: Side,
        index: usize,
        text: String,
        source: SmilesError,
    },
}

impl ReactionError {
    /// True for valence/kekulization failures, false for syntax problems.
    pub fn is_valence_error(&self) -> bool {
        matches!(self, ReactionError::Molecule { source, .. } if source.is_valence_error())
    }
}

/// A reaction with multiset semantics on each side: duplicate molecules
/// are kept as separate entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReactionRecord {
    pub id: String,
    pub reactants: Vec<Molecule>,
    pub agents: Vec<Molecule>,
    pub products: Vec<Molecule>,
}

/// Parses a reaction SMILES line. Text after the first whitespace
/// (e.g. CXSMILES annotations) is ignored.
pub fn parse_reaction(text: &str) -> Result<ReactionRecord, ReactionError> {
    let text = text.split_whitespace().next().unwrap_or("");
    let fields = split_top_level(text, '>');
    if fields.len() != 3 {
        return Err(ReactionError::ArrowCount(fields.len().saturating_sub(1)));
    }
    Ok(ReactionRecord {
        id: String::new(),
        reactants: parse_side(fields[0], Side::Reactants)?,
        agents: parse_side(fields[1], Side::Agents)?,
        products: parse_side(fields[2], Side::Products)?,
    })
}

/// Parses a dot-separated molecule list (one reaction side).
pub fn parse_side(text: &str, side: Side) -> Result<Vec<Molecule>, ReactionError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    split_top_level(text, '.')
        .into_iter()
        .enumerate()
        .map(|(index, frag)| {
            if frag.is_empty() {
                return Err(ReactionError::EmptyFragment { side, index });
            }
            parse_molecule(frag).map_err(|source| ReactionError::Molecule {
                side,
                index,
                text: frag.to_string(),
                source,
            })
        })
        .collect()
}

/// Splits on `sep` outside of bracket atoms.
fn split_top_level(text: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            c if c == sep && depth == 0 => {
                parts.push(&text[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

impl ReactionRecord {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Moves agents onto the reactant side.
    pub fn merge_agents(&self) -> ReactionRecord {
        let mut out = self.clone();
        let agents = std::mem::take(&mut out.agents);
        out.reactants.extend(agents);
        out
    }

    /// Swaps reactants and products (agents stay in place).
    pub fn reversed(&self) -> ReactionRecord {
        ReactionRecord {
            id: self.id.clone(),
            reactants: self.products.clone(),
            agents: self.agents.clone(),
            products: self.reactants.clone(),
        }
    }

    pub fn side(&self, side: Side) -> &[Molecule] {
        match side {
            Side::Reactants => &self.reactants,
            Side::Agents => &self.agents,
            Side::Products => &self.products,
        }
    }

    /// Formula of the reactant side, agents included.
    pub fn reactant_formula(&self) -> Formula {
        self.reactants
            .iter()
            .chain(&self.agents)
            .map(Molecule::formula)
            .sum()
    }

    pub fn product_formula(&self) -> Formula {
        self.products.iter().map(Molecule::formula).sum()
    }

    /// Sorted canonical SMILES of one side (stereo dropped).
    pub fn canonical_side(&self, side: Side) -> Vec<String> {
        canonical_multiset(self.side(side))
    }

    /// Canonical reaction SMILES with molecules sorted within each side.
    pub fn canonical_text(&self) -> String {
        format!(
            "{}>{}>{}",
            self.canonical_side(Side::Reactants).join("."),
            self.canonical_side(Side::Agents).join("."),
            self.canonical_side(Side::Products).join(".")
        )
    }

    /// Canonical SMILES per molecule, keeping molecule order.
    pub fn to_smiles(&self) -> String {
        let side = |mols: &[Molecule]| {
            mols.iter()
                .map(canonical_smiles)
                .collect::<Vec<_>>()
                .join(".")
        };
        format!(
            "{}>{}>{}",
            side(&self.reactants),
            side(&self.agents),
            side(&self.products)
        )
    }

    /// Like [`to_smiles`](Self::to_smiles) but molecules that carry stereo
    /// marks are written as their original annotated text.
    pub fn to_smiles_with_stereo(&self) -> String {
        let side = |mols: &[Molecule]| {
            mols.iter()
                .map(|m| match m.source() {
                    Some(src) if m.has_stereo() => src.to_string(),
                    _ => canonical_smiles(m),
                })
                .collect::<Vec<_>>()
                .join(".")
        };
        format!(
            "{}>{}>{}",
            side(&self.reactants),
            side(&self.agents),
            side(&self.products)
        )
    }

    pub fn molecule_count(&self) -> usize {
        self.reactants.len() + self.agents.len() + self.products.len()
    }
}

pub fn canonical_multiset(mols: &[Molecule]) -> Vec<String> {
    let mut v: Vec<String> = mols.iter().map(canonical_smiles).collect();
    v.sort();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn esterification_fields() {
        let r = parse_reaction("CCO.CC(=O)O>O=S(=O)(O)O>CC(=O)OCC.O").unwrap();
        assert_eq!(r.reactants.len(), 2);
        assert_eq!(r.agents.len(), 1);
        assert_eq!(r.products.len(), 2);
    }

    #[test]
    fn empty_agent_field() {
        let r = parse_reaction("CCO>>CCO").unwrap();
        assert_eq!(
            (r.reactants.len(), r.agents.len(), r.products.len()),
            (1, 0, 1)
        );
    }

    #[test]
    fn multiset_semantics() {
        let r = parse_reaction("O.O>>O").unwrap();
        assert_eq!(r.canonical_side(Side::Reactants), vec!["O", "O"]);
    }

    #[test]
    fn arrow_count_errors() {
        assert_eq!(
            parse_reaction("CCO>CCO").unwrap_err(),
            ReactionError::ArrowCount(1)
        );
        assert_eq!(
            parse_reaction("C>C>C>C").unwrap_err(),
            ReactionError::ArrowCount(3)
        );
        assert_eq!(
            parse_reaction("CCO").unwrap_err(),
            ReactionError::ArrowCount(0)
        );
    }

    #[test]
    fn molecule_error_carries_position() {
        match parse_reaction("CCO.C(C>>CC").unwrap_err() {
            ReactionError::Molecule { side, index, .. } => {
                assert_eq!(side, Side::Reactants);
                assert_eq!(index, 1);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_reaction("CCO..C>>CC").unwrap_err(),
            ReactionError::EmptyFragment { index: 1, .. }
        ));
    }

    #[test]
    fn merge_agents_moves_and_is_idempotent() {
        let r = parse_reaction("CCO.CC(=O)O>O=S(=O)(O)O>CC(=O)OCC.O").unwrap();
        let m = r.merge_agents();
        assert_eq!(
            (m.reactants.len(), m.agents.len(), m.products.len()),
            (3, 0, 2)
        );
        assert_eq!(m.merge_agents(), m);
        let plain = parse_reaction("CCO>>CC=O").unwrap();
        assert_eq!(plain.merge_agents(), plain);
    }

    #[test]
    fn round_trip_through_canonical_text() {
        let r = parse_reaction("OCC.CC(O)=O>OS(O)(=O)=O>O.CCOC(C)=O").unwrap();
        let text = r.canonical_text();
        let again = parse_reaction(&text).unwrap();
        assert_eq!(again.canonical_text(), text);
    }

    #[test]
    fn cxsmiles_suffix_is_ignored() {
        let r = parse_reaction("[Na+].[Cl-]>>[Na]Cl |f:0.1|").unwrap();
        assert_eq!(r.reactants.len(), 2);
    }

    #[test]
    fn stereo_text_is_preserved_on_request() {
        let r = parse_reaction("C[C@H](O)CC>>CC(=O)CC").unwrap();
        assert!(r.to_smiles_with_stereo().starts_with("C[C@H](O)CC>"));
        assert!(!r.to_smiles().contains('@'));
    }
}
