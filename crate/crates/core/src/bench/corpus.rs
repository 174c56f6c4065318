//! Tab-separated corpus files: `id  incomplete_rxn  complete_rxn  [template_hash]`.

use std::io::{self, BufRead, Write};

use serde::Serialize;

use crate::reaction::ReactionRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRow {
    pub id: String,
    pub incomplete: String,
    pub complete: String,
    pub template_hash: Option<String>,
}

/// An ingested pair: `complete` is balanced and contains every molecule of
/// `incomplete` (stereo-stripped canonical comparison).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub id: String,
    pub incomplete: ReactionRecord,
    pub complete: ReactionRecord,
    pub template_hash: Option<String>,
}

impl AlignedPair {
    pub fn to_row(&self) -> CorpusRow {
        CorpusRow {
            id: self.id.clone(),
            incomplete: self.incomplete.to_smiles_with_stereo(),
            complete: self.complete.to_smiles_with_stereo(),
            template_hash: self.template_hash.clone(),
        }
    }
}

/// Why a line or record was quarantined. The taxonomy is heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MalformedLine,
    Unparseable,
    DuplicateId,
    IncompleteUnparseable,
    CompleteUnparseable,
    CompleteUnbalanced,
    NotContained,
    NoMatch,
    AmbiguousMatch,
    EmptySteps,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::MalformedLine => "malformed_line",
            RejectReason::Unparseable => "unparseable",
            RejectReason::DuplicateId => "duplicate_id",
            RejectReason::IncompleteUnparseable => "incomplete_unparseable",
            RejectReason::CompleteUnparseable => "complete_unparseable",
            RejectReason::CompleteUnbalanced => "complete_unbalanced",
            RejectReason::NotContained => "not_contained",
            RejectReason::NoMatch => "no_match",
            RejectReason::AmbiguousMatch => "ambiguous_match",
            RejectReason::EmptySteps => "empty_steps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub source: String,
    /// Line number (1-based) or record id.
    pub location: String,
    pub reason: RejectReason,
    pub detail: String,
}

pub const REJECT_HEADER: &str = "source\tlocation\treason\tdetail";

pub fn write_rejects(mut w: impl Write, rejects: &[Reject]) -> io::Result<()> {
    writeln!(w, "{REJECT_HEADER}")?;
    for r in rejects {
        let detail = r.detail.replace(['\t', '\n'], " ");
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            r.source,
            r.location,
            r.reason.code(),
            detail
        )?;
    }
    Ok(())
}

fn is_header(fields: &[&str]) -> bool {
    fields.first().is_some_and(|f| f.eq_ignore_ascii_case("id"))
}

/// Reads corpus rows. Blank lines, `#` comments and a leading `id` header
/// are skipped; lines with the wrong field count are returned as rejects.
pub fn read_corpus(r: impl BufRead, source: &str) -> io::Result<(Vec<CorpusRow>, Vec<Reject>)> {
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if i == 0 && is_header(&fields) {
            continue;
        }
        if !(3..=4).contains(&fields.len()) || fields[..3].iter().any(|f| f.trim().is_empty()) {
            rejects.push(Reject {
                source: source.to_string(),
                location: (i + 1).to_string(),
                reason: RejectReason::MalformedLine,
                detail: format!(
                    "expected 3 or 4 tab-separated fields, found {}",
                    fields.len()
                ),
            });
            continue;
        }
        rows.push(CorpusRow {
            id: fields[0].trim().to_string(),
            incomplete: fields[1].trim().to_string(),
            complete: fields[2].trim().to_string(),
            template_hash: fields
                .get(3)
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty()),
        });
    }
    Ok((rows, rejects))
}

pub const CORPUS_HEADER: &str = "id\tincomplete_rxn\tcomplete_rxn\ttemplate_hash";

pub fn write_corpus(mut w: impl Write, rows: &[CorpusRow]) -> io::Result<()> {
    writeln!(w, "{CORPUS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            r.id,
            r.incomplete,
            r.complete,
            r.template_hash.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}
