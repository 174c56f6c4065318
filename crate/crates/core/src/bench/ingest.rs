//! Alignment of incomplete (patent-style) reactions to balanced multi-step
//! mechanistic records, and validation of already aligned corpora.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, BufRead};

use rayon::prelude::*;
use serde::Serialize;

use super::corpus::{AlignedPair, CorpusRow, Reject, RejectReason};
use crate::balance::{element_delta, is_balanced};
use crate::chem::{canonical_smiles, Molecule};
use crate::reaction::{parse_reaction, ReactionRecord};

type Multiset = BTreeMap<String, usize>;

fn multiset<'a>(mols: impl IntoIterator<Item = &'a Molecule>) -> Multiset {
    let mut m = Multiset::new();
    for mol in mols {
        *m.entry(canonical_smiles(mol)).or_insert(0) += 1;
    }
    m
}

fn contains(outer: &Multiset, inner: &Multiset) -> bool {
    inner
        .iter()
        .all(|(k, n)| outer.get(k).is_some_and(|m| m >= n))
}

/// Stereo-stripped canonical multisets of a reaction with agents merged.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Sides {
    reactants: Multiset,
    products: Multiset,
}

impl Sides {
    fn of(r: &ReactionRecord) -> Self {
        Sides {
            reactants: multiset(r.reactants.iter().chain(&r.agents)),
            products: multiset(&r.products),
        }
    }

    fn covers(&self, inner: &Sides) -> bool {
        contains(&self.reactants, &inner.reactants) && contains(&self.products, &inner.products)
    }
}

/// Reactants (with agents) of the first step and products of the last.
/// Agents of later steps are dropped. `None` for an empty list.
pub fn merge_steps(steps: &[ReactionRecord]) -> Option<ReactionRecord> {
    let first = steps.first()?.merge_agents();
    let last = steps.last()?;
    Some(ReactionRecord {
        id: first.id.clone(),
        reactants: first.reactants,
        agents: Vec::new(),
        products: last.products.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Unique(usize),
    NoMatch,
    Ambiguous(usize),
}

impl Containment {
    pub fn index(self) -> Option<usize> {
        match self {
            Containment::Unique(i) => Some(i),
            _ => None,
        }
    }
}

/// The unique candidate whose reactants cover the record's reactants and
/// agents and whose products cover its products.
pub fn containment_map(record: &ReactionRecord, candidates: &[ReactionRecord]) -> Containment {
    let inner = Sides::of(record);
    let hits: Vec<usize> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| Sides::of(c).covers(&inner))
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [] => Containment::NoMatch,
        [i] => Containment::Unique(*i),
        _ => Containment::Ambiguous(hits.len()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoTransfer {
    pub record: ReactionRecord,
    /// Canonical (stereo-free) forms left unchanged because the source held
    /// more than one stereo variant.
    pub ambiguous: Vec<String>,
}

/// Replaces each target molecule by the stereo-annotated source molecule
/// with the same stereo-stripped canonical form.
pub fn transfer_stereo(source: &ReactionRecord, target: &ReactionRecord) -> StereoTransfer {
    let mut variants: HashMap<String, Vec<&Molecule>> = HashMap::new();
    for m in source
        .reactants
        .iter()
        .chain(&source.agents)
        .chain(&source.products)
    {
        if m.has_stereo() {
            let v = variants.entry(canonical_smiles(m)).or_default();
            if !v.iter().any(|o| o.source() == m.source()) {
                v.push(m);
            }
        }
    }
    let mut ambiguous = Vec::new();
    let mut swap = |mols: &[Molecule]| -> Vec<Molecule> {
        mols.iter()
            .map(|m| {
                let key = canonical_smiles(m);
                match variants.get(&key).map(Vec::as_slice) {
                    Some([one]) => (*one).clone(),
                    Some([_, _, ..]) => {
                        if !ambiguous.contains(&key) {
                            ambiguous.push(key);
                        }
                        m.clone()
                    }
                    _ => m.clone(),
                }
            })
            .collect()
    };
    let record = ReactionRecord {
        id: target.id.clone(),
        reactants: swap(&target.reactants),
        agents: swap(&target.agents),
        products: swap(&target.products),
    };
    StereoTransfer { record, ambiguous }
}

fn reject(
    source: &str,
    location: impl Into<String>,
    reason: RejectReason,
    detail: impl Into<String>,
) -> Reject {
    Reject {
        source: source.to_string(),
        location: location.into(),
        reason,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub reasons: BTreeMap<String, usize>,
    pub stereo_ambiguous: usize,
    /// Reject reasons are a heuristic superset, not a published filter list.
    pub reason_taxonomy: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct IngestResult {
    pub pairs: Vec<AlignedPair>,
    pub rejects: Vec<Reject>,
    pub stereo_ambiguous: usize,
}

impl IngestResult {
    pub fn summary(&self) -> IngestSummary {
        let mut reasons = BTreeMap::new();
        for r in &self.rejects {
            *reasons.entry(r.reason.code().to_string()).or_insert(0) += 1;
        }
        IngestSummary {
            accepted: self.pairs.len(),
            rejected: self.rejects.len(),
            reasons,
            stereo_ambiguous: self.stereo_ambiguous,
            reason_taxonomy: "heuristic",
        }
    }

    pub fn rows(&self) -> Vec<CorpusRow> {
        self.pairs.iter().map(AlignedPair::to_row).collect()
    }
}

fn validate_pair(row: &CorpusRow, source: &str) -> Result<AlignedPair, Reject> {
    let incomplete = parse_reaction(&row.incomplete)
        .map_err(|e| {
            reject(
                source,
                &row.id,
                RejectReason::IncompleteUnparseable,
                e.to_string(),
            )
        })?
        .with_id(&row.id);
    let complete = parse_reaction(&row.complete)
        .map_err(|e| {
            reject(
                source,
                &row.id,
                RejectReason::CompleteUnparseable,
                e.to_string(),
            )
        })?
        .with_id(&row.id);
    if !is_balanced(&complete) {
        return Err(reject(
            source,
            &row.id,
            RejectReason::CompleteUnbalanced,
            element_delta(&complete).to_string(),
        ));
    }
    if !Sides::of(&complete).covers(&Sides::of(&incomplete)) {
        return Err(reject(
            source,
            &row.id,
            RejectReason::NotContained,
            "incomplete molecules missing from the complete reaction",
        ));
    }
    Ok(AlignedPair {
        id: row.id.clone(),
        incomplete,
        complete,
        template_hash: row.template_hash.clone(),
    })
}

/// Validates an aligned corpus: targets must parse and balance, and contain
/// the incomplete input. Duplicate ids keep their first occurrence.
pub fn ingest_corpus(rows: &[CorpusRow], source: &str) -> IngestResult {
    let mut seen = HashSet::new();
    let mut dup = Vec::new();
    let unique: Vec<&CorpusRow> = rows
        .iter()
        .filter(|r| {
            let fresh = seen.insert(r.id.as_str());
            if !fresh {
                dup.push(reject(
                    source,
                    &r.id,
                    RejectReason::DuplicateId,
                    "repeated id",
                ));
            }
            fresh
        })
        .collect();
    let checked: Vec<Result<AlignedPair, Reject>> = unique
        .par_iter()
        .map(|r| validate_pair(r, source))
        .collect();
    let mut out = IngestResult::default();
    for c in checked {
        match c {
            Ok(p) => out.pairs.push(p),
            Err(r) => out.rejects.push(r),
        }
    }
    out.rejects.extend(dup);
    out
}

/// A record of the incomplete-reaction source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRow {
    pub id: String,
    pub rxn: String,
    pub template_hash: Option<String>,
}

/// Reads `id  rxn  [template_hash]` lines.
pub fn read_sources(r: impl BufRead, source: &str) -> io::Result<(Vec<SourceRow>, Vec<Reject>)> {
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if i == 0 && f[0].eq_ignore_ascii_case("id") {
            continue;
        }
        if !(2..=3).contains(&f.len()) || f[0].trim().is_empty() || f[1].trim().is_empty() {
            rejects.push(reject(
                source,
                (i + 1).to_string(),
                RejectReason::MalformedLine,
                "expected id, rxn[, template_hash]",
            ));
            continue;
        }
        rows.push(SourceRow {
            id: f[0].trim().to_string(),
            rxn: f[1].trim().to_string(),
            template_hash: f
                .get(2)
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty()),
        });
    }
    Ok((rows, rejects))
}

/// A mechanistic step: `mech_id  step_index  rxn`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRow {
    pub mech_id: String,
    pub step: u32,
    pub rxn: String,
}

pub fn read_steps(r: impl BufRead, source: &str) -> io::Result<(Vec<StepRow>, Vec<Reject>)> {
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if i == 0 && f[0].eq_ignore_ascii_case("mech_id") {
            continue;
        }
        let step = f.get(1).and_then(|s| s.trim().parse::<u32>().ok());
        match (f.len(), step) {
            (3, Some(step)) if !f[0].trim().is_empty() => rows.push(StepRow {
                mech_id: f[0].trim().to_string(),
                step,
                rxn: f[2].trim().to_string(),
            }),
            _ => rejects.push(reject(
                source,
                (i + 1).to_string(),
                RejectReason::MalformedLine,
                "expected mech_id, step, rxn",
            )),
        }
    }
    Ok((rows, rejects))
}

/// Merges steps per mechanism (ordered by step index) into single
/// balanced-candidate reactions, keyed by mechanism id in sorted order.
pub fn merge_mechanisms(steps: &[StepRow], source: &str) -> (Vec<ReactionRecord>, Vec<Reject>) {
    let mut by_id: BTreeMap<&str, Vec<&StepRow>> = BTreeMap::new();
    for s in steps {
        by_id.entry(&s.mech_id).or_default().push(s);
    }
    let mut out = Vec::new();
    let mut rejects = Vec::new();
    for (id, mut group) in by_id {
        group.sort_by_key(|s| s.step);
        let parsed: Result<Vec<ReactionRecord>, _> =
            group.iter().map(|s| parse_reaction(&s.rxn)).collect();
        match parsed {
            Ok(p) => match merge_steps(&p) {
                Some(m) => out.push(m.with_id(id)),
                None => rejects.push(reject(source, id, RejectReason::EmptySteps, "no steps")),
            },
            Err(e) => rejects.push(reject(
                source,
                id,
                RejectReason::CompleteUnparseable,
                e.to_string(),
            )),
        }
    }
    (out, rejects)
}

/// Maps each incomplete record onto the unique merged mechanism that
/// contains it, transfers stereochemistry and keeps balanced results.
/// Output order follows `sources`; duplicate ids keep their first
/// occurrence.
pub fn align(
    sources: &[SourceRow],
    mechanisms: &[ReactionRecord],
    source_name: &str,
) -> IngestResult {
    let sides: Vec<Sides> = mechanisms.par_iter().map(Sides::of).collect();
    // candidates are found through any one product molecule
    let mut by_product: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in sides.iter().enumerate() {
        for k in s.products.keys() {
            by_product.entry(k.as_str()).or_default().push(i);
        }
    }
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    let unique: Vec<&SourceRow> = sources
        .iter()
        .filter(|r| {
            let fresh = seen.insert(r.id.as_str());
            if !fresh {
                dups.push(reject(
                    source_name,
                    &r.id,
                    RejectReason::DuplicateId,
                    "repeated id",
                ));
            }
            fresh
        })
        .collect();
    let results: Vec<Result<(AlignedPair, bool), Reject>> = unique
        .par_iter()
        .map(|row| {
            let rec = parse_reaction(&row.rxn)
                .map_err(|e| {
                    reject(
                        source_name,
                        &row.id,
                        RejectReason::IncompleteUnparseable,
                        e.to_string(),
                    )
                })?
                .with_id(&row.id);
            let inner = Sides::of(&rec);
            let pool: Vec<usize> = match inner.products.keys().next() {
                Some(k) => by_product.get(k.as_str()).cloned().unwrap_or_default(),
                None => (0..mechanisms.len()).collect(),
            };
            let hits: Vec<usize> = pool
                .into_iter()
                .filter(|&i| sides[i].covers(&inner))
                .collect();
            let idx = match hits.as_slice() {
                [i] => *i,
                [] => {
                    return Err(reject(
                        source_name,
                        &row.id,
                        RejectReason::NoMatch,
                        "no containing mechanism",
                    ))
                }
                _ => {
                    return Err(reject(
                        source_name,
                        &row.id,
                        RejectReason::AmbiguousMatch,
                        format!("{} containing mechanisms", hits.len()),
                    ))
                }
            };
            let target = &mechanisms[idx];
            if !is_balanced(target) {
                return Err(reject(
                    source_name,
                    &row.id,
                    RejectReason::CompleteUnbalanced,
                    format!("{}: {}", target.id, element_delta(target)),
                ));
            }
            let t = transfer_stereo(&rec, target);
            Ok((
                AlignedPair {
                    id: row.id.clone(),
                    incomplete: rec,
                    complete: t.record.with_id(&row.id),
                    template_hash: row.template_hash.clone(),
                },
                !t.ambiguous.is_empty(),
            ))
        })
        .collect();
    let mut out = IngestResult::default();
    for r in results {
        match r {
            Ok((p, amb)) => {
                out.stereo_ambiguous += amb as usize;
                out.pairs.push(p);
            }
            Err(e) => out.rejects.push(e),
        }
    }
    out.rejects.extend(dups);
    out
}
