//! Benchmark harness: corpus files, ingestion, statistics and evaluation.

mod corpus;
mod eval;
mod ingest;
mod stats;

pub use corpus::{
    read_corpus, write_corpus, write_rejects, AlignedPair, CorpusRow, Reject, RejectReason,
    CORPUS_HEADER, REJECT_HEADER,
};
pub use eval::{
    agreement, evaluate, missing_molecules, read_predictions, results_row, scored_reaction, top1,
    write_bins_csv, write_predictions, write_results_csv, AgreementReport, BinRow, EvalError,
    EvalOptions, EvalReport, Evaluation, Outcome, OutcomeFractions, PredictionRecord, BIN_LABELS,
    CONFIDENCE_BINS, RESULTS_HEADER,
};
pub use ingest::{
    align, containment_map, ingest_corpus, merge_mechanisms, merge_steps, read_sources, read_steps,
    transfer_stereo, Containment, IngestResult, IngestSummary, SourceRow, StepRow, StereoTransfer,
};
pub use stats::{
    corpus_stats, template_stats, CorpusStats, ErrorCurvePoint, TemplateRow, TemplateStats,
};
