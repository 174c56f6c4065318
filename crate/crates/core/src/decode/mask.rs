//! Per-beam element ledger and the balance mask over next tokens.

use std::collections::BTreeMap;

use crate::chem::{Element, Formula};
use crate::reaction::ReactionRecord;

use super::vocab::{TokenKind, TokenVocabulary, BOS_ID, EOS_ID, UNK_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Reactant,
    Product,
}

/// Heavy-atom counts (hydrogen excluded) and net charge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    pub heavy: BTreeMap<Element, i64>,
    pub charge: i64,
}

impl Ledger {
    pub fn from_formula(f: &Formula) -> Self {
        Ledger {
            heavy: f
                .counts
                .iter()
                .filter(|(e, _)| **e != Element::H)
                .map(|(e, n)| (*e, *n))
                .collect(),
            charge: f.net_charge,
        }
    }

    pub fn get(&self, e: Element) -> i64 {
        self.heavy.get(&e).copied().unwrap_or(0)
    }

    fn add(&mut self, kind: TokenKind) {
        if let TokenKind::Atom { element, charge } = kind {
            if element != Element::H {
                *self.heavy.entry(element).or_insert(0) += 1;
            }
            self.charge += charge;
        }
    }
}

/// Whether decoding writes the whole completed reaction or only the
/// molecules missing from the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    #[default]
    FullEquation,
    MissingMolecules,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeState {
    pub prefix: Vec<u32>,
    pub phase: Phase,
    pub reactants: Ledger,
    pub products: Ledger,
    /// Heavy-atom counts of the input's product side.
    pub input_products: Ledger,
    pub oov: bool,
    pub logprob: f64,
    seed_reactants: Ledger,
    seed_products: Ledger,
}

impl DecodeState {
    /// `oov` disables all constraints (set when the source has UNK tokens).
    pub fn new(input: &ReactionRecord, mode: OutputMode, oov: bool) -> Self {
        let input_products = Ledger::from_formula(&input.product_formula());
        let (seed_reactants, seed_products) = match mode {
            OutputMode::FullEquation => (Ledger::default(), Ledger::default()),
            OutputMode::MissingMolecules => (
                Ledger::from_formula(&input.reactant_formula()),
                input_products.clone(),
            ),
        };
        DecodeState {
            prefix: Vec::new(),
            phase: Phase::Reactant,
            reactants: seed_reactants.clone(),
            products: seed_products.clone(),
            input_products,
            oov,
            logprob: 0.0,
            seed_reactants,
            seed_products,
        }
    }

    pub fn push(&mut self, vocab: &TokenVocabulary, token: u32, logprob: f64) {
        let kind = vocab.kind(token);
        match (kind, self.phase) {
            (TokenKind::Arrow, Phase::Reactant) => self.phase = Phase::Product,
            (_, Phase::Reactant) => self.reactants.add(kind),
            (_, Phase::Product) => self.products.add(kind),
        }
        self.prefix.push(token);
        self.logprob += logprob;
        debug_assert_eq!(
            self.recount(vocab),
            (self.reactants.clone(), self.products.clone())
        );
    }

    /// Ledgers rebuilt from the prefix alone.
    pub fn recount(&self, vocab: &TokenVocabulary) -> (Ledger, Ledger) {
        let (mut r, mut p) = (self.seed_reactants.clone(), self.seed_products.clone());
        let mut product = false;
        for &t in &self.prefix {
            match vocab.kind(t) {
                TokenKind::Arrow if !product => product = true,
                k if product => p.add(k),
                k => r.add(k),
            }
        }
        (r, p)
    }

    /// All heavy elements and the net charge agree between the ledgers.
    pub fn is_balanced(&self) -> bool {
        self.reactants == self.products
    }

    pub fn is_finished(&self) -> bool {
        self.prefix.last() == Some(&EOS_ID)
    }
}

/// Additive mask: 0.0 for allowed tokens, -inf for masked ones.
pub type TokenMask = Vec<f64>;

pub fn compute_mask(state: &DecodeState, vocab: &TokenVocabulary) -> TokenMask {
    let mut mask = vec![0.0; vocab.len()];
    if state.oov {
        return mask;
    }
    let blocked = |id: u32| -> bool {
        match (vocab.kind(id), state.phase) {
            (TokenKind::Arrow, Phase::Reactant) => state
                .input_products
                .heavy
                .iter()
                .any(|(e, n)| *n > state.reactants.get(*e)),
            (TokenKind::Eos, Phase::Reactant) => true,
            (TokenKind::Arrow, Phase::Product) => true,
            (TokenKind::Atom { element, .. }, Phase::Product) => {
                element != Element::H && state.products.get(element) >= state.reactants.get(element)
            }
            (TokenKind::Eos, Phase::Product) => !state.is_balanced(),
            _ => false,
        }
    };
    let mut open = false;
    for id in 0..vocab.len() as u32 {
        if blocked(id) {
            mask[id as usize] = f64::NEG_INFINITY;
        } else if id != BOS_ID && id != UNK_ID {
            open = true;
        }
    }
    if !open {
        // never leave a beam without a continuation
        mask.iter_mut().for_each(|m| *m = 0.0);
    }
    mask
}
