//! In-memory curation state backed by an append-only JSON-lines event log.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{
    concordance, validate_reaction, Action, Annotation, AnnotationRequest, CurationItem,
    ItemStatus, OutcomeClass, Validation,
};
use crate::equiv::EquivalenceRuleSet;

pub const DEFAULT_MIN_ANNOTATIONS: usize = 2;

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("unknown item {0:?}")]
    NotFound(String),
    #[error("curator {curator:?} already annotated item {item:?}")]
    Duplicate { item: String, curator: String },
    #[error("item {0:?} is already resolved")]
    Resolved(String),
    #[error("missing curator id (X-Curator-Id header or curator_id field)")]
    MissingCurator,
    #[error("unknown candidate {0:?}")]
    UnknownCandidate(String),
    #[error("edited reaction does not parse: {}", .0.message.as_deref().unwrap_or(""))]
    Unparseable(Validation),
    #[error("edited reaction is not balanced (delta {})", .0.delta.as_deref().unwrap_or(""))]
    Unbalanced(Validation),
    #[error("event log write failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Annotation(Annotation),
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportRecord {
    pub item: CurationItem,
    pub outcome_classes: Vec<OutcomeClass>,
    pub history: Vec<Annotation>,
}

#[derive(Debug)]
pub struct Store {
    items: BTreeMap<String, CurationItem>,
    history: BTreeMap<String, Vec<Annotation>>,
    log: Option<File>,
    min_annotations: usize,
    rules: EquivalenceRuleSet,
    /// Log lines skipped during replay (unknown item, duplicate, unbalanced).
    pub skipped_on_replay: usize,
}

pub fn read_items(path: &Path) -> Result<Vec<CurationItem>, StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let f = File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StoreError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_items(mut w: impl Write, items: &[CurationItem]) -> io::Result<()> {
    for i in items {
        serde_json::to_writer(&mut w, i)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Store {
    /// A store without persistence.
    pub fn in_memory(
        items: Vec<CurationItem>,
        min_annotations: usize,
        rules: EquivalenceRuleSet,
    ) -> Result<Self, StoreError> {
        let mut map = BTreeMap::new();
        for mut it in items {
            it.status = ItemStatus::Open;
            it.annotations = 0;
            if map.contains_key(&it.id) {
                return Err(StoreError::DuplicateItem(it.id));
            }
            map.insert(it.id.clone(), it);
        }
        Ok(Store {
            items: map,
            history: BTreeMap::new(),
            log: None,
            min_annotations: min_annotations.max(1),
            rules,
            skipped_on_replay: 0,
        })
    }

    /// Opens (or creates) the event log, replays it and keeps it open for
    /// appending.
    pub fn open(
        items: Vec<CurationItem>,
        log_path: &Path,
        min_annotations: usize,
        rules: EquivalenceRuleSet,
    ) -> Result<Self, StoreError> {
        let mut store = Self::in_memory(items, min_annotations, rules)?;
        let io_err = |source| StoreError::Io {
            path: log_path.to_path_buf(),
            source,
        };
        if log_path.exists() {
            let f = File::open(log_path).map_err(io_err)?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let Event::Annotation(a) =
                    serde_json::from_str(&line).map_err(|e| StoreError::Format {
                        path: log_path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                if store.check(&a).is_ok() {
                    store.apply(a);
                } else {
                    store.skipped_on_replay += 1;
                }
            }
        }
        store.log = Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(log_path)
                .map_err(io_err)?,
        );
        Ok(store)
    }

    pub fn items(&self) -> impl Iterator<Item = &CurationItem> {
        self.items.values()
    }

    pub fn item(&self, id: &str) -> Option<&CurationItem> {
        self.items.get(id)
    }

    pub fn history(&self, id: &str) -> &[Annotation] {
        self.history.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn min_annotations(&self) -> usize {
        self.min_annotations
    }

    fn check(&self, a: &Annotation) -> Result<(), SubmitError> {
        let item = self
            .items
            .get(&a.item_id)
            .ok_or_else(|| SubmitError::NotFound(a.item_id.clone()))?;
        if item.status == ItemStatus::Resolved {
            return Err(SubmitError::Resolved(a.item_id.clone()));
        }
        if self
            .history(&a.item_id)
            .iter()
            .any(|h| h.curator_id == a.curator_id)
        {
            return Err(SubmitError::Duplicate {
                item: a.item_id.clone(),
                curator: a.curator_id.clone(),
            });
        }
        match &a.action {
            Action::Accept { candidate_id }
                if !item
                    .candidates
                    .iter()
                    .any(|c| &c.candidate_id == candidate_id) =>
            {
                Err(SubmitError::UnknownCandidate(candidate_id.clone()))
            }
            Action::Edit { text } => {
                let v = validate_reaction(text);
                if !v.valid {
                    Err(SubmitError::Unparseable(v))
                } else if !v.balanced {
                    Err(SubmitError::Unbalanced(v))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn apply(&mut self, a: Annotation) {
        let id = a.item_id.clone();
        self.history.entry(id.clone()).or_default().push(a);
        let classes = concordance(&self.items[&id], self.history(&id), &self.rules);
        let resolved = classes
            .first()
            .is_some_and(|c| c.curators.len() >= self.min_annotations);
        let n = self.history(&id).len();
        let item = self.items.get_mut(&id).expect("checked item");
        item.annotations = n;
        item.status = if resolved {
            ItemStatus::Resolved
        } else {
            ItemStatus::InReview
        };
    }

    /// Validates, appends to the log and applies one annotation. The log
    /// line is written before memory changes, so a failed write leaves the
    /// state untouched.
    pub fn submit(
        &mut self,
        req: AnnotationRequest,
        header_curator: Option<&str>,
    ) -> Result<&CurationItem, SubmitError> {
        let curator = header_curator
            .map(str::to_string)
            .or(req.curator_id)
            .filter(|c| !c.trim().is_empty())
            .ok_or(SubmitError::MissingCurator)?;
        let a = Annotation {
            item_id: req.item_id,
            curator_id: curator,
            action: req.action,
            note: req.note,
            timestamp_ms: now_ms(),
        };
        self.check(&a)?;
        if let Some(log) = self.log.as_mut() {
            let mut line =
                serde_json::to_vec(&Event::Annotation(a.clone())).map_err(io::Error::other)?;
            line.push(b'\n');
            log.write_all(&line)?;
            log.sync_data()?;
        }
        let id = a.item_id.clone();
        self.apply(a);
        Ok(&self.items[&id])
    }

    /// Resolved items in id order with their concordance classes and full
    /// history.
    pub fn export(&self) -> Vec<ExportRecord> {
        self.items
            .values()
            .filter(|i| i.status == ItemStatus::Resolved)
            .map(|i| ExportRecord {
                item: i.clone(),
                outcome_classes: concordance(i, self.history(&i.id), &self.rules),
                history: self.history(&i.id).to_vec(),
            })
            .collect()
    }
}
