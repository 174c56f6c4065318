//! Rule-based completion: add small molecules and ions that cancel the
//! element delta of a carbon-balanced reaction.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::balance::{element_delta, is_balanced, ElementDelta};
use crate::chem::{canonical_smiles, Formula, Molecule};
use crate::equiv::strip_comment;
use crate::reaction::{parse_side, ReactionRecord, Side};

const DEFAULT_RULES: &str = include_str!("../data/completion_rules.txt");

pub const DEFAULT_MAX_APPLICATIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompletionRuleError {
    #[error("rule line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("rule {id}: additions leave delta {residual} against the trigger")]
    NotConserved { id: String, residual: ElementDelta },
    #[error("rule {id}: priority {priority} already used by rule {other}")]
    DuplicatePriority {
        id: String,
        other: String,
        priority: i64,
    },
    #[error("rule {id}: duplicate id")]
    DuplicateId { id: String },
    #[error("rule {id}: confidence {confidence} outside [0, 1]")]
    Confidence { id: String, confidence: f64 },
    #[error("rule {id}: empty trigger")]
    EmptyTrigger { id: String },
    #[error("cannot read rule file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRule {
    pub id: String,
    /// Reactant-minus-product delta removed by the additions.
    pub trigger: ElementDelta,
    pub add_reactants: Vec<Molecule>,
    pub add_products: Vec<Molecule>,
    pub priority: i64,
    pub confidence: f64,
}

impl CompletionRule {
    /// Delta change caused by the additions: reactants count positive,
    /// products negative, so firing turns `d` into `d - trigger`.
    pub fn effect(&self) -> Formula {
        let sum = |ms: &[Molecule]| {
            ms.iter()
                .fold(Formula::default(), |acc, m| acc + m.formula())
        };
        sum(&self.add_products) - sum(&self.add_reactants)
    }

    /// Every trigger element (and nonzero charge) appears in `delta` with
    /// the same sign and at least the same magnitude.
    pub fn covered_by(&self, delta: &ElementDelta) -> bool {
        let fits = |need: i64, have: i64| {
            need == 0 || (need.signum() == have.signum() && have.abs() >= need.abs())
        };
        self.trigger
            .per_element
            .iter()
            .all(|(e, &n)| fits(n, delta.get(*e)))
            && fits(self.trigger.charge_delta, delta.charge_delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleResult {
    #[serde(serialize_with = "serialize_record")]
    pub completed: ReactionRecord,
    pub applied_rules: Vec<String>,
    pub confidence: f64,
    pub solved: bool,
}

fn serialize_record<S: serde::Serializer>(r: &ReactionRecord, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_smiles())
}

fn parse_line(body: &str, line: usize) -> Result<CompletionRule, CompletionRuleError> {
    let syntax = |message: String| CompletionRuleError::Syntax { line, message };
    let rest = body
        .strip_prefix('[')
        .ok_or_else(|| syntax("expected '[id]'".into()))?;
    let (id, rest) = rest
        .split_once(']')
        .ok_or_else(|| syntax("unterminated id".into()))?;
    let id = id.trim();
    if id.is_empty() {
        return Err(syntax("empty id".into()));
    }
    let (trigger, rest) = rest
        .split_once("=>")
        .ok_or_else(|| syntax("missing '=>'".into()))?;
    let (adds, nums) = rest
        .split_once('@')
        .ok_or_else(|| syntax("missing '@ priority, confidence'".into()))?;
    let trigger: ElementDelta = trigger.trim().parse().map_err(|e| syntax(format!("{e}")))?;
    let (lhs, rhs) = adds
        .trim()
        .split_once(">>")
        .ok_or_else(|| syntax("additions need '>>'".into()))?;
    let side = |text: &str, s: Side| parse_side(text.trim(), s).map_err(|e| syntax(e.to_string()));
    let (p, c) = nums
        .split_once(',')
        .ok_or_else(|| syntax("expected 'priority, confidence'".into()))?;
    Ok(CompletionRule {
        id: id.to_string(),
        trigger,
        add_reactants: side(lhs, Side::Reactants)?,
        add_products: side(rhs, Side::Products)?,
        priority: p
            .trim()
            .parse()
            .map_err(|_| syntax(format!("bad priority {p:?}")))?,
        confidence: c
            .trim()
            .parse()
            .map_err(|_| syntax(format!("bad confidence {c:?}")))?,
    })
}

/// Parses a rule file and validates the result.
pub fn parse_rules(text: &str) -> Result<Vec<CompletionRule>, CompletionRuleError> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = strip_comment(raw).trim();
        if !body.is_empty() {
            rules.push(parse_line(body, i + 1)?);
        }
    }
    validate_rules(&rules)?;
    rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
    Ok(rules)
}

pub fn load_rules(path: &Path) -> Result<Vec<CompletionRule>, CompletionRuleError> {
    let text = std::fs::read_to_string(path).map_err(|e| CompletionRuleError::Io(e.to_string()))?;
    parse_rules(&text)
}

/// The bundled rule library, highest priority first.
pub fn default_rules() -> Vec<CompletionRule> {
    parse_rules(DEFAULT_RULES).expect("bundled completion rules are valid")
}

/// Checks conservation (additions cancel the trigger exactly, so no rule
/// creates or destroys atoms or charge) and uniqueness of ids and priorities.
pub fn validate_rules(rules: &[CompletionRule]) -> Result<(), CompletionRuleError> {
    let mut priorities: HashMap<i64, &str> = HashMap::new();
    let mut ids: HashMap<&str, ()> = HashMap::new();
    for r in rules {
        if ids.insert(&r.id, ()).is_some() {
            return Err(CompletionRuleError::DuplicateId { id: r.id.clone() });
        }
        if r.trigger.is_zero() {
            return Err(CompletionRuleError::EmptyTrigger { id: r.id.clone() });
        }
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(CompletionRuleError::Confidence {
                id: r.id.clone(),
                confidence: r.confidence,
            });
        }
        let residual = r.trigger.as_formula() - r.effect();
        if !residual.is_zero() {
            return Err(CompletionRuleError::NotConserved {
                id: r.id.clone(),
                residual: ElementDelta::from_formula(&residual),
            });
        }
        if let Some(other) = priorities.insert(r.priority, &r.id) {
            return Err(CompletionRuleError::DuplicatePriority {
                id: r.id.clone(),
                other: other.to_string(),
                priority: r.priority,
            });
        }
    }
    Ok(())
}

/// Greedily applies the highest-priority covered rule until the reaction
/// balances, no rule fits, or `max_applications` is reached. Reactions
/// missing carbon are left unsolved. Agents are merged first.
pub fn complete_by_rules(
    r: &ReactionRecord,
    rules: &[CompletionRule],
    max_applications: usize,
) -> RuleResult {
    let mut completed = r.merge_agents();
    let unsolved = |completed: ReactionRecord, applied_rules: Vec<String>| RuleResult {
        completed,
        applied_rules,
        confidence: 0.0,
        solved: false,
    };
    let mut delta = element_delta(&completed);
    if delta.missing_carbons() > 0 {
        return unsolved(completed, Vec::new());
    }
    let mut order: Vec<&CompletionRule> = rules.iter().collect();
    order.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.id.cmp(&b.id)));
    let mut applied = Vec::new();
    let mut confidence = 1.0;
    while !delta.is_zero() && applied.len() < max_applications {
        let Some(rule) = order.iter().find(|rule| rule.covered_by(&delta)) else {
            break;
        };
        completed
            .reactants
            .extend(rule.add_reactants.iter().cloned());
        completed.products.extend(rule.add_products.iter().cloned());
        delta = ElementDelta::from_formula(&(delta.as_formula() - rule.effect()));
        applied.push(rule.id.clone());
        confidence *= rule.confidence;
    }
    debug_assert_eq!(delta, element_delta(&completed));
    if !delta.is_zero() {
        return unsolved(completed, applied);
    }
    debug_assert!(is_balanced(&completed));
    RuleResult {
        completed,
        applied_rules: applied,
        confidence,
        solved: true,
    }
}

/// Canonical SMILES of the molecules a result added, per side.
pub fn added_molecules(input: &ReactionRecord, result: &RuleResult) -> (Vec<String>, Vec<String>) {
    let base = input.merge_agents();
    let tail = |all: &[Molecule], n: usize| all[n..].iter().map(canonical_smiles).collect();
    (
        tail(&result.completed.reactants, base.reactants.len()),
        tail(&result.completed.products, base.products.len()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::parse_reaction;

    fn run(s: &str) -> RuleResult {
        complete_by_rules(
            &parse_reaction(s).unwrap(),
            &default_rules(),
            DEFAULT_MAX_APPLICATIONS,
        )
    }

    #[test]
    fn bundled_library_is_valid() {
        let rules = default_rules();
        assert!(rules.len() >= 12);
        assert!(rules.windows(2).all(|w| w[0].priority > w[1].priority));
    }

    #[test]
    fn esterification_gets_water() {
        let r = run("CCO.CC(=O)O>>CC(=O)OCC");
        assert!(r.solved);
        assert_eq!(r.applied_rules, vec!["water"]);
        assert_eq!(r.confidence, 0.95);
        assert_eq!(r.completed.to_smiles(), "CCO.CC(=O)O>>CCOC(C)=O.O");
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let r = run("CCO.CC(=O)O>>CC(=O)OCC.O");
        assert!(r.solved);
        assert!(r.applied_rules.is_empty());
        assert_eq!(r.confidence, 1.0);
    }

    #[test]
    fn oxidation_without_matching_rule_is_unsolved() {
        // delta H:+2,O:-1: the H2 rule fires, then no rule supplies one O
        let r = run("CCO>>CC(=O)O");
        assert!(!r.solved);
        assert_eq!(r.confidence, 0.0);
    }

    #[test]
    fn carbon_guard() {
        let r = run("CC(=O)O>>C");
        assert!(!r.solved);
        assert!(r.applied_rules.is_empty());
    }

    #[test]
    fn amide_coupling_with_acid_chloride_gets_hcl() {
        let r = run("CC(=O)Cl.CN>>CC(=O)NC");
        assert!(r.solved);
        assert_eq!(r.applied_rules, vec!["hcl"]);
    }

    #[test]
    fn multiple_applications_multiply_confidence() {
        let r = run("OCCO.OC(=O)CC(=O)O>>O=C1CC(=O)OCCO1");
        assert!(r.solved);
        assert_eq!(r.applied_rules, vec!["water", "water"]);
        assert!((r.confidence - 0.95 * 0.95).abs() < 1e-12);
        let (lhs, rhs) = added_molecules(
            &parse_reaction("OCCO.OC(=O)CC(=O)O>>O=C1CC(=O)OCCO1").unwrap(),
            &r,
        );
        assert!(lhs.is_empty());
        assert_eq!(rhs, vec!["O", "O"]);
    }

    #[test]
    fn application_cap() {
        let rxn = parse_reaction("OCCO.OC(=O)CC(=O)O>>O=C1CC(=O)OCCO1").unwrap();
        let r = complete_by_rules(&rxn, &default_rules(), 1);
        assert!(!r.solved);
        assert_eq!(r.applied_rules.len(), 1);
    }

    #[test]
    fn ion_rules_track_charge() {
        let r = run("C[N+](C)(C)C.[Cl-]>>C[N+](C)(C)C");
        assert!(r.solved);
        assert_eq!(r.applied_rules, vec!["chloride"]);
    }

    #[test]
    fn methane_for_oxygen_is_rejected() {
        let err = parse_rules("[bad] O:+1 => >>C @ 1, 0.5").unwrap_err();
        assert!(
            matches!(err, CompletionRuleError::NotConserved { .. }),
            "{err}"
        );
    }

    #[test]
    fn water_rule_alone_is_valid() {
        assert!(parse_rules("[w] H:+2,O:+1 => >>O @ 1, 0.9").is_ok());
    }

    #[test]
    fn duplicate_priority_is_rejected() {
        let err = parse_rules("[a] H:+2,O:+1 => >>O @ 1, 0.9\n[b] H:+1,Cl:+1 => >>Cl @ 1, 0.9")
            .unwrap_err();
        assert!(
            matches!(err, CompletionRuleError::DuplicatePriority { .. }),
            "{err}"
        );
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = parse_rules("\n[a] H:+2 => >>[H][H]").unwrap_err();
        assert_eq!(
            err,
            CompletionRuleError::Syntax {
                line: 2,
                message: "missing '@ priority, confidence'".into()
            }
        );
        assert!(parse_rules("[a] H:+2 => [H][H] @ 1, 0.5").is_err());
        assert!(matches!(
            parse_rules("[a] H:+2 => >>[H][H] @ 1, 1.5").unwrap_err(),
            CompletionRuleError::Confidence { .. }
        ));
    }
}
