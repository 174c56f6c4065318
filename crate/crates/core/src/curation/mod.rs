//! Expert curation backend: review queue, live validation and
//! multi-annotator verdicts persisted in an append-only event log.

mod api;
mod model;
mod store;

pub use api::{router, SharedStore, CURATOR_HEADER, DEFAULT_QUEUE_LIMIT};
pub use model::{
    concordance, equivalence_classes, order_queue, select_items, validate_reaction, Action,
    Annotation, AnnotationRequest, Candidate, CurationItem, ItemStatus, OutcomeClass,
    SelectionReason, Strategy, Validation, LOW_CONFIDENCE,
};
pub use store::{
    read_items, write_items, ExportRecord, Store, StoreError, SubmitError, DEFAULT_MIN_ANNOTATIONS,
};
