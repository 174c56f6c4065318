//! Constrained beam-search completion.

mod beam;
mod mask;
mod scorer;
mod toy;
mod vocab;

pub use beam::{
    beam_search, decode_all, source_text, DecodeConfig, DecodeInput, DecodeOutput, Hypothesis,
};
pub use mask::{compute_mask, DecodeState, Ledger, OutputMode, Phase, TokenMask};
pub use scorer::{NoisyScorer, OracleScorer, Scorer, UniformScorer, ORACLE_GAP};
pub use toy::{copy_token, EmptyCorpus, ToyScorer};
pub use vocab::{
    lex, parsed_contribution, TokenKind, TokenVocabulary, ARROW, BOS, BOS_ID, EOS, EOS_ID, UNK,
    UNK_ID,
};
