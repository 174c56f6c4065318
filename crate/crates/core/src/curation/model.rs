//! Curation items, annotations, queue ordering and verdict concordance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::balance::{element_delta, is_balanced, ElementDelta};
use crate::bench::{scored_reaction, top1, AlignedPair, PredictionRecord};
use crate::decode::OutputMode;
use crate::equiv::{equivalence_match, exact_match, EquivalenceRuleSet};
use crate::reaction::{parse_reaction, ReactionRecord, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionReason {
    Disagreement,
    LowConfidence,
    Unbalanced,
    Ood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Open,
    InReview,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Unique within the item; the method tag unless a method offers
    /// several candidates.
    pub candidate_id: String,
    pub method: String,
    pub prediction: String,
    #[serde(default)]
    pub score: Option<f64>,
    pub balanced: bool,
    /// Canonical molecules of the prediction beyond the input, reactant
    /// side first.
    #[serde(default)]
    pub added: Vec<String>,
}

/// An item as stored and served. `status` and `annotations` are derived
/// from the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationItem {
    pub id: String,
    pub incomplete: String,
    pub candidates: Vec<Candidate>,
    pub reasons: Vec<SelectionReason>,
    #[serde(default)]
    pub template_hash: Option<String>,
    #[serde(default)]
    pub missing_carbons: u64,
    /// Number of distinct equivalence classes among candidate predictions.
    #[serde(default)]
    pub distinct_answers: usize,
    #[serde(default = "open")]
    pub status: ItemStatus,
    #[serde(default)]
    pub annotations: usize,
}

fn open() -> ItemStatus {
    ItemStatus::Open
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Accept { candidate_id: String },
    Edit { text: String },
    Reject,
    Flag,
}

/// Request body for a new annotation. The curator may come from the
/// header instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub item_id: String,
    #[serde(default)]
    pub curator_id: Option<String>,
    #[serde(flatten)]
    pub action: Action,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub item_id: String,
    pub curator_id: String,
    #[serde(flatten)]
    pub action: Action,
    #[serde(default)]
    pub note: String,
    /// Milliseconds since the Unix epoch, assigned by the server.
    pub timestamp_ms: u64,
}

/// Multiset difference `pred - input` per side, agents merged.
fn added_molecules(pred: &ReactionRecord, input: &ReactionRecord) -> Vec<String> {
    let (pred, input) = (pred.merge_agents(), input.merge_agents());
    let mut out = Vec::new();
    for side in [Side::Reactants, Side::Products] {
        let (have, base) = (pred.canonical_side(side), input.canonical_side(side));
        let mut remaining: BTreeMap<String, usize> = BTreeMap::new();
        for b in base {
            *remaining.entry(b).or_insert(0) += 1;
        }
        for m in have {
            match remaining.get_mut(&m) {
                Some(n) if *n > 0 => *n -= 1,
                _ => out.push(m),
            }
        }
    }
    out
}

fn same_answer(a: &ReactionRecord, b: &ReactionRecord, rules: &EquivalenceRuleSet) -> bool {
    exact_match(a, b) || equivalence_match(a, b, rules).is_ok_and(|m| m.matched)
}

/// Groups reactions into equivalence classes; returns the class index of
/// each input (classes numbered by first appearance).
pub fn equivalence_classes(records: &[&ReactionRecord], rules: &EquivalenceRuleSet) -> Vec<usize> {
    let mut reps: Vec<&ReactionRecord> = Vec::new();
    records
        .iter()
        .map(
            |r| match reps.iter().position(|rep| same_answer(rep, r, rules)) {
                Some(i) => i,
                None => {
                    reps.push(r);
                    reps.len() - 1
                }
            },
        )
        .collect()
}

pub const LOW_CONFIDENCE: f64 = 0.5;

/// Builds curation items from incomplete inputs and the top-1 predictions of
/// several methods. An item is selected when methods disagree, a top-1
/// probability is below 0.5, a candidate is unbalanced or the id is listed
/// as out of distribution. Unselected inputs are skipped.
pub fn select_items(
    inputs: &[AlignedPair],
    methods: &[(String, Vec<PredictionRecord>)],
    ood_ids: &BTreeSet<String>,
    rules: &EquivalenceRuleSet,
) -> Vec<CurationItem> {
    let tops: Vec<(&str, BTreeMap<&str, &PredictionRecord>)> = methods
        .iter()
        .map(|(m, p)| (m.as_str(), top1(p).unwrap_or_default()))
        .collect();
    let mut out = Vec::new();
    let mut ordered: Vec<&AlignedPair> = inputs.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in ordered {
        let mut candidates = Vec::new();
        let mut parsed = Vec::new();
        let mut low_conf = false;
        for (method, top) in &tops {
            let Some(p) = top.get(pair.id.as_str()) else {
                continue;
            };
            let rec = scored_reaction(&p.prediction, &pair.incomplete, OutputMode::FullEquation);
            low_conf |= p.probability().is_some_and(|x| x < LOW_CONFIDENCE);
            candidates.push(Candidate {
                candidate_id: method.to_string(),
                method: method.to_string(),
                prediction: p.prediction.clone(),
                score: p.probability(),
                balanced: rec.as_ref().is_some_and(is_balanced),
                added: rec
                    .as_ref()
                    .map(|r| added_molecules(r, &pair.incomplete))
                    .unwrap_or_default(),
            });
            parsed.push(rec);
        }
        let valid: Vec<&ReactionRecord> = parsed.iter().flatten().collect();
        let invalid = parsed.len() - valid.len();
        let distinct = equivalence_classes(&valid, rules)
            .into_iter()
            .collect::<BTreeSet<_>>()
            .len()
            + invalid;
        let mut reasons = Vec::new();
        if distinct > 1 {
            reasons.push(SelectionReason::Disagreement);
        }
        if low_conf {
            reasons.push(SelectionReason::LowConfidence);
        }
        if candidates.iter().any(|c| !c.balanced) {
            reasons.push(SelectionReason::Unbalanced);
        }
        if ood_ids.contains(&pair.id) {
            reasons.push(SelectionReason::Ood);
        }
        if reasons.is_empty() {
            continue;
        }
        out.push(CurationItem {
            id: pair.id.clone(),
            incomplete: pair.incomplete.to_smiles_with_stereo(),
            candidates,
            reasons,
            template_hash: pair.template_hash.clone(),
            missing_carbons: element_delta(&pair.incomplete).missing_carbons(),
            distinct_answers: distinct,
            status: ItemStatus::Open,
            annotations: 0,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Disagreement,
    Complexity,
    Coverage,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disagreement" => Ok(Strategy::Disagreement),
            "complexity" => Ok(Strategy::Complexity),
            "coverage" => Ok(Strategy::Coverage),
            _ => Err(format!(
                "unknown strategy {s:?} (disagreement, complexity, coverage)"
            )),
        }
    }
}

/// Orders unresolved items. Disagreement: more distinct answers first;
/// complexity: more missing carbons first; coverage: round-robin over
/// template hashes (sorted, unlabeled items last). Ties break by id.
pub fn order_queue<'a>(
    items: impl IntoIterator<Item = &'a CurationItem>,
    strategy: Strategy,
) -> Vec<&'a CurationItem> {
    let mut v: Vec<&CurationItem> = items
        .into_iter()
        .filter(|i| i.status != ItemStatus::Resolved)
        .collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    match strategy {
        Strategy::Disagreement => {
            v.sort_by_key(|i| std::cmp::Reverse(i.distinct_answers));
            v
        }
        Strategy::Complexity => {
            v.sort_by_key(|i| std::cmp::Reverse(i.missing_carbons));
            v
        }
        Strategy::Coverage => {
            let mut groups: BTreeMap<(bool, &str), std::collections::VecDeque<&CurationItem>> =
                BTreeMap::new();
            for i in v {
                let key = (
                    i.template_hash.is_none(),
                    i.template_hash.as_deref().unwrap_or(""),
                );
                groups.entry(key).or_default().push_back(i);
            }
            let mut out = Vec::new();
            while groups.values().any(|g| !g.is_empty()) {
                for g in groups.values_mut() {
                    if let Some(i) = g.pop_front() {
                        out.push(i);
                    }
                }
            }
            out
        }
    }
}

/// Result of validating one reaction text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validation {
    pub valid: bool,
    pub balanced: bool,
    /// Signature form, e.g. `C:0,H:+2,O:+1|q:0`.
    pub delta: Option<String>,
    pub delta_detail: Option<ElementDelta>,
    pub canonical: Option<String>,
    pub message: Option<String>,
}

pub fn validate_reaction(text: &str) -> Validation {
    match parse_reaction(text.trim()) {
        Ok(r) => {
            let d = element_delta(&r);
            Validation {
                valid: true,
                balanced: d.is_zero(),
                delta: Some(d.to_string()),
                delta_detail: Some(d),
                canonical: Some(r.to_smiles()),
                message: None,
            }
        }
        Err(e) => Validation {
            valid: false,
            balanced: false,
            delta: None,
            delta_detail: None,
            canonical: None,
            message: Some(e.to_string()),
        },
    }
}

/// One group of concordant verdicts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeClass {
    /// Canonical reaction, or `reject` for rejections.
    pub outcome: String,
    pub curators: Vec<String>,
}

/// Concordance classes of an item's verdicts. Accepts and edits are grouped
/// by equivalence of their reactions; rejections form one class; flags are
/// not verdicts on the answer and are left out. Largest class first.
pub fn concordance(
    item: &CurationItem,
    history: &[Annotation],
    rules: &EquivalenceRuleSet,
) -> Vec<OutcomeClass> {
    let mut answers: Vec<(String, ReactionRecord)> = Vec::new();
    let mut rejects = Vec::new();
    for a in history {
        let text = match &a.action {
            Action::Accept { candidate_id } => item
                .candidates
                .iter()
                .find(|c| &c.candidate_id == candidate_id)
                .map(|c| c.prediction.clone()),
            Action::Edit { text } => Some(text.clone()),
            Action::Reject => {
                rejects.push(a.curator_id.clone());
                None
            }
            Action::Flag => None,
        };
        if let Some(r) = text.and_then(|t| parse_reaction(&t).ok()) {
            answers.push((a.curator_id.clone(), r));
        }
    }
    let recs: Vec<&ReactionRecord> = answers.iter().map(|(_, r)| r).collect();
    let labels = equivalence_classes(&recs, rules);
    let mut classes: Vec<OutcomeClass> = Vec::new();
    for (k, (curator, rec)) in labels.iter().zip(&answers) {
        if *k == classes.len() {
            classes.push(OutcomeClass {
                outcome: rec.to_smiles(),
                curators: Vec::new(),
            });
        }
        classes[*k].curators.push(curator.clone());
    }
    if !rejects.is_empty() {
        classes.push(OutcomeClass {
            outcome: "reject".into(),
            curators: rejects,
        });
    }
    classes.sort_by_key(|c| std::cmp::Reverse(c.curators.len()));
    classes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, distinct: usize, carbons: u64, template: Option<&str>) -> CurationItem {
        CurationItem {
            id: id.into(),
            incomplete: "CCO.CC(=O)O>>CC(=O)OCC".into(),
            candidates: vec![],
            reasons: vec![],
            template_hash: template.map(str::to_string),
            missing_carbons: carbons,
            distinct_answers: distinct,
            status: ItemStatus::Open,
            annotations: 0,
        }
    }

    #[test]
    fn strategies() {
        let items = vec![
            item("a", 1, 1, Some("t1")),
            item("b", 2, 5, Some("t1")),
            item("c", 1, 0, Some("t2")),
        ];
        let ids = |v: Vec<&CurationItem>| v.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
        assert_eq!(
            ids(order_queue(&items, Strategy::Disagreement)),
            ["b", "a", "c"]
        );
        assert_eq!(
            ids(order_queue(&items, Strategy::Complexity)),
            ["b", "a", "c"]
        );
        assert_eq!(
            ids(order_queue(&items, Strategy::Coverage)),
            ["a", "c", "b"]
        );
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn validation() {
        let v = validate_reaction("O>>O");
        assert!(v.valid && v.balanced);
        assert_eq!(v.delta.as_deref(), Some("∅|q:0"));
        let v = validate_reaction("O>>");
        assert!(v.valid && !v.balanced);
        let d = v.delta_detail.unwrap();
        assert_eq!(
            (
                d.get(crate::chem::Element::H),
                d.get(crate::chem::Element::O)
            ),
            (2, 1)
        );
        let v = validate_reaction("garbage(");
        assert!(!v.valid);
        assert!(v.message.is_some());
    }

    #[test]
    fn selection_and_added_molecules() {
        let pair = AlignedPair {
            id: "x".into(),
            incomplete: parse_reaction("CCO.CC(=O)O>>CC(=O)OCC").unwrap(),
            complete: parse_reaction("CCO.CC(=O)O>>CC(=O)OCC.O").unwrap(),
            template_hash: None,
        };
        let p = |text: &str| PredictionRecord {
            id: "x".into(),
            rank: 1,
            prediction: text.into(),
            logprob: Some(-0.01),
            confidence: None,
            method: None,
        };
        let rules = EquivalenceRuleSet::default_rules();
        let agree = vec![
            ("rb".to_string(), vec![p("CCO.CC(=O)O>>CC(=O)OCC.O")]),
            ("crb".to_string(), vec![p("OCC.CC(=O)O>>O.CC(=O)OCC")]),
        ];
        assert!(select_items(
            std::slice::from_ref(&pair),
            &agree,
            &BTreeSet::new(),
            &rules
        )
        .is_empty());
        let disagree = vec![
            agree[0].clone(),
            ("rules".to_string(), vec![p("CCO.CC(=O)O>>CC(=O)OCC")]),
        ];
        let items = select_items(
            std::slice::from_ref(&pair),
            &disagree,
            &BTreeSet::new(),
            &rules,
        );
        assert_eq!(
            items[0].reasons,
            vec![SelectionReason::Disagreement, SelectionReason::Unbalanced]
        );
        assert_eq!(items[0].candidates[0].added, vec!["O"]);
        assert_eq!(items[0].distinct_answers, 2);
    }
}
