//! Incompleteness statistics over corpora and template families.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use super::corpus::CorpusRow;
use super::eval::Outcome;
use crate::balance::{element_delta, ElementDelta};
use crate::reaction::parse_reaction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub n: usize,
    pub parse_failures: usize,
    pub balanced_fraction: f64,
    pub mean_missing_atoms: f64,
    pub median_missing_atoms: f64,
    pub mean_missing_carbons: f64,
    pub median_missing_carbons: f64,
    pub missing_atoms_histogram: BTreeMap<u64, usize>,
    pub missing_carbons_histogram: BTreeMap<u64, usize>,
    /// Deltas in signature form, with counts.
    pub signatures: BTreeMap<String, usize>,
}

fn mean(v: &[u64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<u64>() as f64 / v.len() as f64
    }
}

fn median(v: &[u64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable();
    match s.len() {
        0 => 0.0,
        n if n % 2 == 1 => s[n / 2] as f64,
        n => (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0,
    }
}

/// Statistics of the element deltas of reaction texts. Unparseable lines are
/// counted and skipped; `n` counts parsed reactions only.
pub fn corpus_stats<S: AsRef<str> + Sync>(reactions: &[S]) -> CorpusStats {
    let deltas: Vec<Option<ElementDelta>> = reactions
        .par_iter()
        .map(|s| parse_reaction(s.as_ref()).ok().map(|r| element_delta(&r)))
        .collect();
    let parse_failures = deltas.iter().filter(|d| d.is_none()).count();
    let deltas: Vec<ElementDelta> = deltas.into_iter().flatten().collect();
    let atoms: Vec<u64> = deltas.iter().map(ElementDelta::missing_atoms).collect();
    let carbons: Vec<u64> = deltas.iter().map(ElementDelta::missing_carbons).collect();
    let hist = |v: &[u64]| {
        let mut h = BTreeMap::new();
        for &x in v {
            *h.entry(x).or_insert(0) += 1;
        }
        h
    };
    let mut signatures = BTreeMap::new();
    for d in &deltas {
        *signatures.entry(d.to_string()).or_insert(0) += 1;
    }
    let n = deltas.len();
    CorpusStats {
        n,
        parse_failures,
        balanced_fraction: if n == 0 {
            0.0
        } else {
            deltas.iter().filter(|d| d.is_zero()).count() as f64 / n as f64
        },
        mean_missing_atoms: mean(&atoms),
        median_missing_atoms: median(&atoms),
        mean_missing_carbons: mean(&carbons),
        median_missing_carbons: median(&carbons),
        missing_atoms_histogram: hist(&atoms),
        missing_carbons_histogram: hist(&carbons),
        signatures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateRow {
    pub template_hash: String,
    pub n: usize,
    pub signatures: usize,
    pub balanced_fraction: f64,
    pub mean_missing_atoms: f64,
    pub mean_missing_carbons: f64,
    /// Evaluated reactions of this template and how many were inaccurate.
    pub evaluated: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurvePoint {
    /// Number of templates, taken in decreasing error count.
    pub templates: usize,
    pub error_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateStats {
    pub templates: Vec<TemplateRow>,
    pub single_signature: usize,
    pub consistently_balanced: usize,
    pub consistently_unbalanced: usize,
    pub mixed: usize,
    pub perfect_templates: usize,
    pub error_curve: Vec<ErrorCurvePoint>,
    pub templates_for_half_errors: Option<usize>,
    pub templates_for_90pct_errors: Option<usize>,
}

/// Per-template statistics of the incomplete reactions of labeled rows.
/// With `outcomes`, errors (anything but an accurate top-1) are attributed
/// to templates and the cumulative error-concentration curve is built.
pub fn template_stats(
    rows: &[CorpusRow],
    outcomes: Option<&BTreeMap<String, Outcome>>,
) -> TemplateStats {
    let mut groups: BTreeMap<&str, Vec<&CorpusRow>> = BTreeMap::new();
    for r in rows {
        if let Some(t) = r.template_hash.as_deref() {
            groups.entry(t).or_default().push(r);
        }
    }
    let mut templates = Vec::new();
    for (hash, members) in groups {
        let deltas: Vec<ElementDelta> = members
            .iter()
            .filter_map(|r| {
                parse_reaction(&r.incomplete)
                    .ok()
                    .map(|x| element_delta(&x))
            })
            .collect();
        let sigs: BTreeSet<String> = deltas.iter().map(ElementDelta::to_string).collect();
        let atoms: Vec<u64> = deltas.iter().map(ElementDelta::missing_atoms).collect();
        let carbons: Vec<u64> = deltas.iter().map(ElementDelta::missing_carbons).collect();
        let (mut evaluated, mut errors) = (0, 0);
        if let Some(o) = outcomes {
            for r in &members {
                if let Some(oc) = o.get(&r.id) {
                    evaluated += 1;
                    errors += (*oc != Outcome::Accurate) as usize;
                }
            }
        }
        let balanced = deltas.iter().filter(|d| d.is_zero()).count();
        templates.push(TemplateRow {
            template_hash: hash.to_string(),
            n: deltas.len(),
            signatures: sigs.len(),
            balanced_fraction: if deltas.is_empty() {
                0.0
            } else {
                balanced as f64 / deltas.len() as f64
            },
            mean_missing_atoms: mean(&atoms),
            mean_missing_carbons: mean(&carbons),
            evaluated,
            errors,
        });
    }
    let nonempty = || templates.iter().filter(|t| t.n > 0);
    let single_signature = nonempty().filter(|t| t.signatures == 1).count();
    let consistently_balanced = nonempty().filter(|t| t.balanced_fraction == 1.0).count();
    let consistently_unbalanced = nonempty().filter(|t| t.balanced_fraction == 0.0).count();
    let mixed = nonempty().count() - consistently_balanced - consistently_unbalanced;
    let perfect_templates = templates
        .iter()
        .filter(|t| t.evaluated > 0 && t.errors == 0)
        .count();

    let mut errs: Vec<usize> = templates
        .iter()
        .map(|t| t.errors)
        .filter(|&e| e > 0)
        .collect();
    errs.sort_unstable_by(|a, b| b.cmp(a));
    let total: usize = errs.iter().sum();
    let mut error_curve = Vec::with_capacity(errs.len());
    let mut acc = 0;
    for (i, e) in errs.iter().enumerate() {
        acc += e;
        error_curve.push(ErrorCurvePoint {
            templates: i + 1,
            error_fraction: acc as f64 / total as f64,
        });
    }
    let reach = |f: f64| {
        error_curve
            .iter()
            .find(|p| p.error_fraction >= f - 1e-12)
            .map(|p| p.templates)
    };
    TemplateStats {
        single_signature,
        consistently_balanced,
        consistently_unbalanced,
        mixed,
        perfect_templates,
        templates_for_half_errors: reach(0.5),
        templates_for_90pct_errors: reach(0.9),
        error_curve,
        templates,
    }
}
