//! Periodic table lookup and the default-valence table used for implicit
//! hydrogen resolution.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

/// A chemical element, stored as its atomic number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(u8);

impl Element {
    pub const H: Element = Element(1);
    pub const B: Element = Element(5);
    pub const C: Element = Element(6);
    pub const N: Element = Element(7);
    pub const O: Element = Element(8);
    pub const F: Element = Element(9);
    pub const P: Element = Element(15);
    pub const S: Element = Element(16);
    pub const CL: Element = Element(17);
    pub const AS: Element = Element(33);
    pub const SE: Element = Element(34);
    pub const BR: Element = Element(35);
    pub const TE: Element = Element(52);
    pub const I: Element = Element(53);

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        (1..=118).contains(&z).then_some(Element(z))
    }

    /// Case-sensitive symbol lookup ("Cl", not "CL").
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        SYMBOLS
            .iter()
            .position(|s| *s == symbol)
            .map(|i| Element(i as u8 + 1))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        SYMBOLS[self.0 as usize - 1]
    }

    /// Elements that may be written without brackets.
    pub fn is_organic_subset(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53)
    }

    /// Elements allowed as lowercase aromatic symbols.
    pub fn can_be_aromatic(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 15 | 16 | 33 | 34 | 52)
    }

    /// Default valences in ascending order. Empty for elements whose
    /// hydrogens must always be explicit.
    pub fn default_valences(self) -> &'static [u8] {
        match self.0 {
            1 => &[1],
            5 => &[3],
            6 => &[4],
            7 => &[3, 5],
            8 => &[2],
            9 | 17 | 35 | 53 => &[1],
            15 => &[3, 5],
            16 => &[2, 4, 6],
            33 => &[3, 5],
            34 => &[2, 4, 6],
            52 => &[2, 4, 6],
            _ => &[],
        }
    }

    /// Valences for an atom carrying a formal charge, using the
    /// isoelectronic shift (N+ behaves like C, O- like F, ...). Only defined
    /// for the p-block elements that have a valence table.
    pub fn charged_valences(self, charge: i32) -> Vec<u8> {
        if charge == 0 {
            return self.default_valences().to_vec();
        }
        let base = self.default_valences();
        if base.is_empty() {
            return Vec::new();
        }
        // Isoelectronic shift: N+ behaves like C, O- like F, B- like C.
        // Carbon loses a bond for either sign (CH3+, CH3-).
        base.iter()
            .filter_map(|&v| {
                let shifted = match self.0 {
                    5 => v as i32 - charge,
                    6 => v as i32 - charge.abs(),
                    _ => v as i32 + charge,
                };
                (shifted >= 0).then_some(shifted as u8)
            })
            .collect()
    }
}

impl Serialize for Element {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Element {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Element::from_symbol(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown element {s}")))
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_round_trip() {
        for z in 1..=118u8 {
            let e = Element::from_atomic_number(z).unwrap();
            assert_eq!(Element::from_symbol(e.symbol()), Some(e));
        }
        assert_eq!(Element::from_symbol("CL"), None);
        assert_eq!(Element::from_symbol("Xx"), None);
    }

    #[test]
    fn charged_valences_follow_isoelectronic_shift() {
        assert_eq!(Element::N.charged_valences(1), vec![4, 6]);
        assert_eq!(Element::O.charged_valences(-1), vec![1]);
        assert_eq!(Element::C.charged_valences(-1), vec![3]);
        assert_eq!(Element::C.charged_valences(1), vec![3]);
        assert_eq!(Element::B.charged_valences(-1), vec![4]);
        assert!(Element::from_symbol("Na")
            .unwrap()
            .charged_valences(1)
            .is_empty());
    }
}
