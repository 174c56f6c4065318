//! Molecular graphs: SMILES reading and writing, valence and aromaticity
//! handling, and molecular formulas.

mod aromatic;
mod canon;
mod element;
mod molecule;
mod smiles;

pub use canon::{canonical_ranks, canonical_smiles};
pub use element::Element;
pub use molecule::{Atom, Bond, BondOrder, Formula, Molecule, StereoMark};
pub use smiles::{parse_molecule, SmilesError, SmilesErrorKind};

/// Formula of a molecule, implicit hydrogens included.
pub fn formula(mol: &Molecule) -> Formula {
    mol.formula()
}
