//! Top-1 evaluation of completion predictions against balanced targets.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::corpus::AlignedPair;
use crate::balance::{element_delta, is_balanced};
use crate::decode::OutputMode;
use crate::equiv::{equivalence_match, exact_match, EquivalenceRuleSet};
use crate::reaction::{parse_reaction, ReactionRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction id {0:?} has no target")]
    UnknownId(String),
    #[error("id {id:?}: ranks must run 1..=n without gaps, found {ranks:?}")]
    Ranks { id: String, ranks: Vec<usize> },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub rank: usize,
    pub prediction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

impl PredictionRecord {
    /// Probability-like score: the confidence if given, else exp(logprob).
    pub fn probability(&self) -> Option<f64> {
        self.confidence.or(self.logprob.map(f64::exp))
    }
}

/// Reads JSON-lines predictions; extra fields are ignored.
pub fn read_predictions(r: impl BufRead) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Format {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_predictions(mut w: impl Write, preds: &[PredictionRecord]) -> io::Result<()> {
    for p in preds {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Top-1 prediction per id; ranks must be contiguous from 1.
pub fn top1(preds: &[PredictionRecord]) -> Result<BTreeMap<&str, &PredictionRecord>, EvalError> {
    let mut by_id: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for p in preds {
        by_id.entry(&p.id).or_default().push(p);
    }
    let mut out = BTreeMap::new();
    for (id, mut ps) in by_id {
        ps.sort_by_key(|p| p.rank);
        let ranks: Vec<usize> = ps.iter().map(|p| p.rank).collect();
        if ranks.iter().enumerate().any(|(i, &r)| r != i + 1) {
            return Err(EvalError::Ranks {
                id: id.to_string(),
                ranks,
            });
        }
        out.insert(id, ps[0]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accurate,
    BalancedInaccurate,
    Unbalanced,
    Invalid,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub mode: OutputMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRow {
    pub missing_carbons: &'static str,
    pub n: usize,
    pub accurate: usize,
    pub accuracy: Option<f64>,
}

pub const BIN_LABELS: [&str; 6] = ["0", "1", "2", "3", "4", "5+"];
pub const CONFIDENCE_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeFractions {
    pub accurate: f64,
    pub balanced_inaccurate: f64,
    pub unbalanced: f64,
    pub invalid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub missing_predictions: usize,
    pub top1_exact: f64,
    pub top1_equiv: f64,
    pub invalid_smiles: f64,
    pub balanced: f64,
    pub conf_gt_50: Option<f64>,
    pub outcomes: OutcomeFractions,
    pub bins: Vec<BinRow>,
    /// Counts of top-1 probabilities in ten equal-width bins over [0, 1],
    /// per outcome class; predictions without a score are left out.
    pub confidence_histogram: BTreeMap<Outcome, [usize; CONFIDENCE_BINS]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub outcomes: BTreeMap<String, Outcome>,
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    exact: bool,
    outcome: Outcome,
    bin: usize,
    probability: Option<f64>,
}

/// The scored form of a prediction: in missing-molecules mode the predicted
/// molecules are united with the (agent-merged) input.
pub fn scored_reaction(
    pred: &str,
    input: &ReactionRecord,
    mode: OutputMode,
) -> Option<ReactionRecord> {
    let p = parse_reaction(pred).ok()?;
    Some(match mode {
        OutputMode::FullEquation => p,
        OutputMode::MissingMolecules => {
            let mut base = input.merge_agents();
            let p = p.merge_agents();
            base.reactants.extend(p.reactants);
            base.products.extend(p.products);
            base
        }
    })
}

/// Molecules of `complete` beyond the (agent-merged) input, per side, as
/// a reaction; the inverse of the missing-molecules union.
pub fn missing_molecules(input: &ReactionRecord, complete: &ReactionRecord) -> ReactionRecord {
    fn diff(
        have: &[crate::chem::Molecule],
        base: &[crate::chem::Molecule],
    ) -> Vec<crate::chem::Molecule> {
        let mut remaining: HashMap<String, usize> = HashMap::new();
        for m in base {
            *remaining
                .entry(crate::chem::canonical_smiles(m))
                .or_insert(0) += 1;
        }
        have.iter()
            .filter(
                |m| match remaining.get_mut(&crate::chem::canonical_smiles(m)) {
                    Some(n) if *n > 0 => {
                        *n -= 1;
                        false
                    }
                    _ => true,
                },
            )
            .cloned()
            .collect()
    }
    let (input, complete) = (input.merge_agents(), complete.merge_agents());
    ReactionRecord {
        id: complete.id.clone(),
        reactants: diff(&complete.reactants, &input.reactants),
        agents: Vec::new(),
        products: diff(&complete.products, &input.products),
    }
}

fn score_one(
    pred: Option<&PredictionRecord>,
    pair: &AlignedPair,
    rules: &EquivalenceRuleSet,
    opts: EvalOptions,
) -> Scored {
    let bin =
        (element_delta(&pair.incomplete).missing_carbons() as usize).min(BIN_LABELS.len() - 1);
    let probability = pred.and_then(PredictionRecord::probability);
    let invalid = Scored {
        exact: false,
        outcome: Outcome::Invalid,
        bin,
        probability,
    };
    let Some(p) = pred else { return invalid };
    let Some(rec) = scored_reaction(&p.prediction, &pair.incomplete, opts.mode) else {
        return invalid;
    };
    let exact = exact_match(&rec, &pair.complete);
    let equiv = exact || equivalence_match(&rec, &pair.complete, rules).is_ok_and(|m| m.matched);
    let outcome = if equiv {
        Outcome::Accurate
    } else if is_balanced(&rec) {
        Outcome::BalancedInaccurate
    } else {
        Outcome::Unbalanced
    };
    Scored {
        exact,
        outcome,
        bin,
        probability,
    }
}

/// Scores the top-1 prediction of every target. Targets without a
/// prediction count as invalid; predictions for unknown ids are an error.
pub fn evaluate(
    preds: &[PredictionRecord],
    targets: &[AlignedPair],
    rules: &EquivalenceRuleSet,
    opts: EvalOptions,
) -> Result<Evaluation, EvalError> {
    let best = top1(preds)?;
    let by_id: HashMap<&str, &AlignedPair> = targets.iter().map(|t| (t.id.as_str(), t)).collect();
    if let Some(id) = best.keys().find(|id| !by_id.contains_key(*id)) {
        return Err(EvalError::UnknownId(id.to_string()));
    }
    let mut ordered: Vec<&AlignedPair> = by_id.values().copied().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let scored: Vec<Scored> = ordered
        .par_iter()
        .map(|t| score_one(best.get(t.id.as_str()).copied(), t, rules, opts))
        .collect();

    let n = scored.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let count = |o: Outcome| scored.iter().filter(|s| s.outcome == o).count();
    let accurate = count(Outcome::Accurate);
    let exact = scored.iter().filter(|s| s.exact).count();
    let invalid = count(Outcome::Invalid);
    let bal_inacc = count(Outcome::BalancedInaccurate);
    let unbalanced = count(Outcome::Unbalanced);
    let balanced = accurate + bal_inacc;

    let with_conf: Vec<&PredictionRecord> = best
        .values()
        .filter(|p| p.confidence.is_some())
        .copied()
        .collect();
    let conf_gt_50 = (!with_conf.is_empty()).then(|| {
        frac(
            best.values()
                .filter(|p| p.confidence.is_some_and(|c| c > 0.5))
                .count(),
        )
    });

    let mut bins: Vec<BinRow> = BIN_LABELS
        .iter()
        .map(|&l| BinRow {
            missing_carbons: l,
            n: 0,
            accurate: 0,
            accuracy: None,
        })
        .collect();
    let mut confidence_histogram: BTreeMap<Outcome, [usize; CONFIDENCE_BINS]> = BTreeMap::new();
    for s in &scored {
        bins[s.bin].n += 1;
        bins[s.bin].accurate += (s.outcome == Outcome::Accurate) as usize;
        if let (Some(p), true) = (s.probability, s.outcome != Outcome::Invalid) {
            let b =
                ((p.clamp(0.0, 1.0) * CONFIDENCE_BINS as f64) as usize).min(CONFIDENCE_BINS - 1);
            confidence_histogram
                .entry(s.outcome)
                .or_insert([0; CONFIDENCE_BINS])[b] += 1;
        }
    }
    for b in &mut bins {
        b.accuracy = (b.n > 0).then(|| b.accurate as f64 / b.n as f64);
    }
    let report = EvalReport {
        n,
        missing_predictions: n - best.len(),
        top1_exact: frac(exact),
        top1_equiv: frac(accurate),
        invalid_smiles: frac(invalid),
        balanced: frac(balanced),
        conf_gt_50,
        outcomes: OutcomeFractions {
            accurate: frac(accurate),
            balanced_inaccurate: frac(bal_inacc),
            unbalanced: frac(unbalanced),
            invalid: frac(invalid),
        },
        bins,
        confidence_histogram,
    };
    let outcomes = ordered
        .iter()
        .zip(&scored)
        .map(|(t, s)| (t.id.clone(), s.outcome))
        .collect();
    Ok(Evaluation { report, outcomes })
}

pub const RESULTS_HEADER: &str =
    "Split,Model,Top-1 Acc (exact) (%),Top-1 Acc (equiv.) (%),Conf. >50% (%),Inv. SMILES (%),Balanced (%)";

/// One row of the results table; missing values print as `-`.
pub fn results_row(split: &str, model: &str, r: &EvalReport) -> String {
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    format!(
        "{split},{model},{},{},{},{},{}",
        pct(r.top1_exact),
        pct(r.top1_equiv),
        r.conf_gt_50.map_or("-".to_string(), pct),
        pct(r.invalid_smiles),
        pct(r.balanced)
    )
}

pub fn write_results_csv(mut w: impl Write, rows: &[(&str, &str, &EvalReport)]) -> io::Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for (s, m, r) in rows {
        writeln!(w, "{}", results_row(s, m, r))?;
    }
    Ok(())
}

pub fn write_bins_csv(mut w: impl Write, r: &EvalReport) -> io::Result<()> {
    writeln!(w, "missing_carbons,n,accurate,accuracy")?;
    for b in &r.bins {
        let acc = b.accuracy.map_or(String::new(), |a| format!("{a:.6}"));
        writeln!(w, "{},{},{},{}", b.missing_carbons, b.n, b.accurate, acc)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub n: usize,
    pub agreeing: usize,
    pub agreement: f64,
    /// Fraction of agreeing ids whose shared answer matches the target;
    /// absent when no id agrees.
    pub precision: Option<f64>,
}

fn matches(a: &ReactionRecord, b: &ReactionRecord, rules: &EquivalenceRuleSet) -> bool {
    exact_match(a, b) || equivalence_match(a, b, rules).is_ok_and(|m| m.matched)
}

/// Cross-method agreement over the ids predicted by either method. An id
/// predicted by only one method counts as disagreeing.
pub fn agreement(
    a: &[PredictionRecord],
    b: &[PredictionRecord],
    targets: &[AlignedPair],
    rules: &EquivalenceRuleSet,
    opts: EvalOptions,
) -> Result<AgreementReport, EvalError> {
    let (ta, tb) = (top1(a)?, top1(b)?);
    let by_id: HashMap<&str, &AlignedPair> = targets.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut ids: Vec<&str> = ta.keys().chain(tb.keys()).copied().collect();
    ids.sort_unstable();
    ids.dedup();
    if let Some(id) = ids.iter().find(|id| !by_id.contains_key(*id)) {
        return Err(EvalError::UnknownId(id.to_string()));
    }
    let verdicts: Vec<(bool, bool)> = ids
        .par_iter()
        .map(|id| {
            let t = by_id[id];
            let rec = |p: Option<&&PredictionRecord>| {
                p.and_then(|p| scored_reaction(&p.prediction, &t.incomplete, opts.mode))
            };
            match (rec(ta.get(id)), rec(tb.get(id))) {
                (Some(x), Some(y)) if matches(&x, &y, rules) => {
                    (true, matches(&x, &t.complete, rules))
                }
                _ => (false, false),
            }
        })
        .collect();
    let n = ids.len();
    let agreeing = verdicts.iter().filter(|v| v.0).count();
    let correct = verdicts.iter().filter(|v| v.0 && v.1).count();
    Ok(AgreementReport {
        n,
        agreeing,
        agreement: if n == 0 {
            0.0
        } else {
            agreeing as f64 / n as f64
        },
        precision: (agreeing > 0).then(|| correct as f64 / agreeing as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, inc: &str, comp: &str) -> AlignedPair {
        AlignedPair {
            id: id.into(),
            incomplete: parse_reaction(inc).unwrap(),
            complete: parse_reaction(comp).unwrap(),
            template_hash: None,
        }
    }

    fn pred(id: &str, rank: usize, text: &str) -> PredictionRecord {
        PredictionRecord {
            id: id.into(),
            rank,
            prediction: text.into(),
            logprob: None,
            confidence: None,
            method: None,
        }
    }

    fn targets() -> Vec<AlignedPair> {
        vec![
            pair("a", "CCO.CC(=O)O>>CC(=O)OCC", "CCO.CC(=O)O>>CC(=O)OCC.O"),
            pair("b", "CC(=O)Cl.CN>>CC(=O)NC", "CC(=O)Cl.CN>>CC(=O)NC.Cl"),
        ]
    }

    fn run(preds: &[PredictionRecord]) -> EvalReport {
        evaluate(
            preds,
            &targets(),
            &EquivalenceRuleSet::default_rules(),
            EvalOptions::default(),
        )
        .unwrap()
        .report
    }

    #[test]
    fn identical_predictions() {
        let r = run(&[
            pred("a", 1, "CCO.CC(=O)O>>CC(=O)OCC.O"),
            pred("b", 1, "CC(=O)Cl.CN>>CC(=O)NC.Cl"),
        ]);
        assert_eq!(
            (r.top1_exact, r.top1_equiv, r.invalid_smiles, r.balanced),
            (1.0, 1.0, 0.0, 1.0)
        );
        assert_eq!(r.conf_gt_50, None);
    }

    #[test]
    fn unparseable_predictions() {
        let r = run(&[pred("a", 1, "C(("), pred("b", 1, "xx>>")]);
        assert_eq!(
            (r.top1_exact, r.top1_equiv, r.invalid_smiles),
            (0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn ionic_variant_is_equivalent_not_exact() {
        let r = run(&[
            pred("a", 1, "CCO.CC(=O)O>>CC(=O)OCC.O"),
            pred("b", 1, "CC(=O)Cl.CN>>CC(=O)NC.[H+].[Cl-]"),
        ]);
        assert_eq!(r.top1_exact, 0.5);
        assert_eq!(r.top1_equiv, 1.0);
    }

    #[test]
    fn outcome_classes_partition() {
        let r = run(&[
            pred("a", 1, "CCO.CC(=O)O>>CC(=O)OCC"),
            pred("b", 1, "CC(=O)Cl.CN>>CC(=O)NC.Cl.O.O>>O"),
        ]);
        let o = &r.outcomes;
        assert_eq!(
            o.accurate + o.balanced_inaccurate + o.unbalanced + o.invalid,
            1.0
        );
        assert_eq!(o.unbalanced, 0.5);
        assert_eq!(o.invalid, 0.5);
    }

    #[test]
    fn missing_prediction_is_invalid() {
        let r = run(&[pred("a", 1, "CCO.CC(=O)O>>CC(=O)OCC.O")]);
        assert_eq!(r.missing_predictions, 1);
        assert_eq!(r.invalid_smiles, 0.5);
    }

    #[test]
    fn unknown_id_and_rank_gaps() {
        let rules = EquivalenceRuleSet::default_rules();
        let e = evaluate(
            &[pred("zz", 1, "O>>O")],
            &targets(),
            &rules,
            EvalOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(e, EvalError::UnknownId(id) if id == "zz"));
        let e = evaluate(
            &[pred("a", 2, "O>>O")],
            &targets(),
            &rules,
            EvalOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(e, EvalError::Ranks { .. }));
    }

    #[test]
    fn only_rank_one_counts() {
        let r = run(&[
            pred("a", 2, "CCO.CC(=O)O>>CC(=O)OCC.O"),
            pred("a", 1, "C>>C"),
            pred("b", 1, "C>>C"),
        ]);
        assert_eq!(r.top1_equiv, 0.0);
        assert_eq!(r.outcomes.balanced_inaccurate, 1.0);
    }

    #[test]
    fn missing_molecule_mode_unites_with_input() {
        let opts = EvalOptions {
            mode: OutputMode::MissingMolecules,
        };
        let r = evaluate(
            &[pred("a", 1, ">>O"), pred("b", 1, ">>Cl")],
            &targets(),
            &EquivalenceRuleSet::default_rules(),
            opts,
        )
        .unwrap()
        .report;
        assert_eq!(r.top1_exact, 1.0);
    }

    #[test]
    fn missing_molecules_inverts_union() {
        let t = &targets()[0];
        let m = missing_molecules(&t.incomplete, &t.complete);
        assert_eq!(m.to_smiles(), ">>O");
        let u =
            scored_reaction(&m.to_smiles(), &t.incomplete, OutputMode::MissingMolecules).unwrap();
        assert!(exact_match(&u, &t.complete));
    }

    #[test]
    fn bins_and_confidence() {
        let mut p = pred("a", 1, "CCO.CC(=O)O>>CC(=O)OCC.O");
        p.confidence = Some(0.9);
        let mut q = pred("b", 1, "CC(=O)Cl.CN>>CC(=O)NC");
        q.confidence = Some(0.3);
        let r = run(&[p, q]);
        assert_eq!(r.conf_gt_50, Some(0.5));
        assert_eq!(r.bins[0].n, 2);
        assert_eq!(r.bins.iter().map(|b| b.n).sum::<usize>(), r.n);
        assert_eq!(r.confidence_histogram[&Outcome::Accurate][9], 1);
        assert_eq!(r.confidence_histogram[&Outcome::Unbalanced][3], 1);
        let line = results_row("R", "rules", &r);
        assert_eq!(line, "R,rules,50.00,50.00,50.00,0.00,50.00");
    }

    #[test]
    fn agreement_semantics() {
        let rules = EquivalenceRuleSet::default_rules();
        let t = targets();
        let right = [
            pred("a", 1, "CCO.CC(=O)O>>CC(=O)OCC.O"),
            pred("b", 1, "CC(=O)Cl.CN>>CC(=O)NC.Cl"),
        ];
        let r = agreement(&right, &right, &t, &rules, EvalOptions::default()).unwrap();
        assert_eq!((r.agreement, r.precision), (1.0, Some(1.0)));
        let wrong = [pred("a", 1, "C>>C"), pred("b", 1, "O>>O")];
        let r = agreement(&right, &wrong, &t, &rules, EvalOptions::default()).unwrap();
        assert_eq!((r.agreement, r.precision), (0.0, None));
    }
}
