//! Atom and charge balance between reaction sides.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{Element, Formula};
use crate::reaction::ReactionRecord;

/// Reactant-side minus product-side element counts (H included) and charge.
/// Zero entries are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementDelta {
    pub per_element: BTreeMap<Element, i64>,
    pub charge_delta: i64,
}

impl ElementDelta {
    pub fn from_formula(f: &Formula) -> Self {
        ElementDelta {
            per_element: f.counts.clone(),
            charge_delta: f.net_charge,
        }
    }

    pub fn as_formula(&self) -> Formula {
        Formula {
            counts: self.per_element.clone(),
            net_charge: self.charge_delta,
        }
    }

    pub fn get(&self, e: Element) -> i64 {
        self.per_element.get(&e).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.per_element.is_empty() && self.charge_delta == 0
    }

    /// Sum of absolute per-element differences, hydrogen included.
    pub fn missing_atoms(&self) -> u64 {
        self.missing_atoms_with(true)
    }

    pub fn missing_atoms_with(&self, include_h: bool) -> u64 {
        self.per_element
            .iter()
            .filter(|(e, _)| include_h || **e != Element::H)
            .map(|(_, n)| n.unsigned_abs())
            .sum()
    }

    pub fn missing_carbons(&self) -> u64 {
        self.get(Element::C).unsigned_abs()
    }

    /// Heavy-atom (non-hydrogen) part only.
    pub fn heavy(&self) -> ElementDelta {
        ElementDelta {
            per_element: self
                .per_element
                .iter()
                .filter(|(e, _)| **e != Element::H)
                .map(|(e, n)| (*e, *n))
                .collect(),
            charge_delta: self.charge_delta,
        }
    }

    pub fn negated(&self) -> ElementDelta {
        ElementDelta::from_formula(&-self.as_formula())
    }

    pub fn signature(&self) -> BalanceSignature {
        BalanceSignature(self.to_string())
    }

    fn ordered(&self) -> Vec<(Element, i64)> {
        let mut v: Vec<(Element, i64)> = self.per_element.iter().map(|(e, n)| (*e, *n)).collect();
        v.sort_by(|a, b| {
            hill_rank(a.0)
                .cmp(&hill_rank(b.0))
                .then(a.0.symbol().cmp(b.0.symbol()))
        });
        v
    }
}

fn hill_rank(e: Element) -> u8 {
    match e {
        Element::C => 0,
        Element::H => 1,
        _ => 2,
    }
}

fn signed(n: i64) -> String {
    if n > 0 {
        format!("+{n}")
    } else {
        n.to_string()
    }
}

/// `C:+1,H:-2,O:-1|q:0`; carbon is always listed so the carbon count is
/// visible at a glance. A balanced delta renders as `∅|q:0`.
impl fmt::Display for ElementDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.per_element.is_empty() {
            return write!(f, "∅|q:{}", signed(self.charge_delta));
        }
        let mut parts = Vec::new();
        if self.get(Element::C) == 0 {
            parts.push("C:0".to_string());
        }
        for (e, n) in self.ordered() {
            parts.push(format!("{}:{}", e.symbol(), signed(n)));
        }
        write!(f, "{}|q:{}", parts.join(","), signed(self.charge_delta))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad delta text {text:?}: {reason}")]
pub struct DeltaParseError {
    pub text: String,
    pub reason: String,
}

/// Accepts the signature form, with or without the `|q:` part.
impl FromStr for ElementDelta {
    type Err = DeltaParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| DeltaParseError {
            text: s.to_string(),
            reason: reason.to_string(),
        };
        let (body, charge) = match s.trim().split_once('|') {
            Some((b, q)) => {
                let q = q
                    .trim()
                    .strip_prefix("q:")
                    .ok_or_else(|| err("charge part must start with q:"))?;
                (
                    b.trim(),
                    q.trim().parse::<i64>().map_err(|_| err("bad charge"))?,
                )
            }
            None => (s.trim(), 0),
        };
        let mut f = Formula {
            net_charge: charge,
            ..Formula::default()
        };
        if !(body.is_empty() || body == "∅") {
            for item in body.split(',') {
                let (sym, n) = item
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| err("expected Element:count"))?;
                let e = Element::from_symbol(sym.trim()).ok_or_else(|| err("unknown element"))?;
                let n: i64 = n.trim().parse().map_err(|_| err("bad count"))?;
                f.add_element(e, n);
            }
        }
        Ok(ElementDelta::from_formula(&f))
    }
}

/// Deterministic text key of an [`ElementDelta`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BalanceSignature(pub String);

impl fmt::Display for BalanceSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Agents are counted on the reactant side.
pub fn element_delta(r: &ReactionRecord) -> ElementDelta {
    ElementDelta::from_formula(&(r.reactant_formula() - r.product_formula()))
}

pub fn is_balanced(r: &ReactionRecord) -> bool {
    element_delta(r).is_zero()
}

pub fn balance_signature(r: &ReactionRecord) -> BalanceSignature {
    element_delta(r).signature()
}
