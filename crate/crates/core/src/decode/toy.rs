//! Source-conditioned token 4-gram model used as a stand-in scorer.
//!
//! A pointer follows the prefix through the source; the token under it is
//! the "copy" token. Each context (previous three tokens and pointer state)
//! learns how often the next token is the copy token and, for the other
//! events, an n-gram over next tokens. This lets the model copy the input
//! and insert the molecules a template family tends to miss.

use std::collections::HashMap;

use thiserror::Error;

use super::scorer::Scorer;
use super::vocab::{TokenVocabulary, EOS_ID};

const ORDER: usize = 4;
const MAX_MATCH: usize = 8;
const COPY_END: u32 = u32::MAX - 1;
const COPY_NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("toy scorer needs at least one training pair")]
pub struct EmptyCorpus;

#[derive(Debug, Clone, Default)]
struct Counts {
    total: u32,
    /// Events where the next token equaled the copy token.
    copied: u32,
    next: HashMap<u32, u32>,
}

#[derive(Debug, Clone)]
pub struct ToyScorer {
    vocab_size: usize,
    table: HashMap<Vec<u32>, Counts>,
}

/// Source position after the longest suffix of `prefix` found in `source`,
/// preferring occurrences that end at or after `hint`.
fn resync(prefix: &[u32], source: &[u32], hint: usize) -> Option<usize> {
    for len in (1..=MAX_MATCH.min(prefix.len())).rev() {
        let suffix = &prefix[prefix.len() - len..];
        let mut first = None;
        for (pos, w) in source.windows(len).enumerate() {
            if w == suffix {
                if pos + len >= hint {
                    return Some(pos + len);
                }
                first.get_or_insert(pos + len);
            }
        }
        if first.is_some() {
            return first;
        }
    }
    None
}

fn copy_at(p: Option<usize>, source: &[u32]) -> u32 {
    match p {
        None => COPY_NONE,
        Some(q) => source.get(q).copied().unwrap_or(COPY_END),
    }
}

/// Copy token for every prefix length `0..=prefix.len()`. A pointer into the
/// source advances while the prefix follows it and re-aligns on the longest
/// matching suffix after a deviation.
fn copy_tokens(prefix: &[u32], source: &[u32]) -> Vec<u32> {
    let mut p = Some(0);
    let mut last = 0;
    let mut out = Vec::with_capacity(prefix.len() + 1);
    out.push(copy_at(p, source));
    for i in 0..prefix.len() {
        p = match p {
            Some(q) if source.get(q) == Some(&prefix[i]) => Some(q + 1),
            _ => resync(&prefix[..=i], source, last),
        };
        last = p.unwrap_or(last);
        out.push(copy_at(p, source));
    }
    out
}

/// Source token the prefix is expected to copy next.
pub fn copy_token(prefix: &[u32], source: &[u32]) -> u32 {
    *copy_tokens(prefix, source).last().expect("nonempty")
}

/// Coarse pointer state used in the context key: the pointer is inside the
/// source, at its end, or lost.
fn pointer_class(copy: u32) -> u32 {
    match copy {
        COPY_END => 1,
        COPY_NONE => 2,
        _ => 0,
    }
}

/// Backoff keys from most to least specific: the last three, two, one and
/// zero tokens, each with the pointer class.
fn keys(prefix: &[u32], copy: u32) -> Vec<Vec<u32>> {
    let class = pointer_class(copy);
    let mut out: Vec<Vec<u32>> = Vec::with_capacity(ORDER);
    for n in (0..ORDER).rev() {
        let n = n.min(prefix.len());
        let mut k = vec![class, n as u32];
        k.extend_from_slice(&prefix[prefix.len() - n..]);
        if out.last() != Some(&k) {
            out.push(k);
        }
    }
    out
}

impl ToyScorer {
    /// `pairs` are (source, target) token sequences; EOS is appended to
    /// each target.
    pub fn train(pairs: &[(Vec<u32>, Vec<u32>)], vocab_size: usize) -> Result<Self, EmptyCorpus> {
        if pairs.is_empty() {
            return Err(EmptyCorpus);
        }
        let mut table: HashMap<Vec<u32>, Counts> = HashMap::new();
        for (source, target) in pairs {
            let mut full = target.clone();
            full.push(EOS_ID);
            let copies = copy_tokens(target, source);
            for t in 0..full.len() {
                for k in keys(&full[..t], copies[t]) {
                    let c = table.entry(k).or_default();
                    c.total += 1;
                    if full[t] == copies[t] {
                        c.copied += 1;
                    } else {
                        *c.next.entry(full[t]).or_insert(0) += 1;
                    }
                }
            }
        }
        Ok(ToyScorer { vocab_size, table })
    }

    /// Trains on text pairs, tokenized with `vocab`.
    pub fn train_texts(
        pairs: &[(String, String)],
        vocab: &TokenVocabulary,
    ) -> Result<Self, EmptyCorpus> {
        let tokenized: Vec<(Vec<u32>, Vec<u32>)> = pairs
            .iter()
            .map(|(s, t)| (vocab.tokenize(s), vocab.tokenize(t)))
            .collect();
        Self::train(&tokenized, vocab.len())
    }
}

impl Scorer for ToyScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Mixture of copying the pointer token and an add-one smoothed n-gram
    /// over the generated (non-copied) tokens.
    fn next_logits(&self, prefix: &[u32], source: &[u32]) -> Vec<f64> {
        let v = self.vocab_size as f64;
        let copy = copy_token(prefix, source);
        let Some(c) = keys(prefix, copy)
            .into_iter()
            .find_map(|k| self.table.get(&k))
        else {
            return vec![-v.ln(); self.vocab_size];
        };
        let copyable = (copy as usize) < self.vocab_size;
        let p_copy = if copyable {
            (c.copied as f64 + 0.5) / (c.total as f64 + 1.0)
        } else {
            0.0
        };
        let generated = (c.total - c.copied) as f64 + v;
        (0..self.vocab_size as u32)
            .map(|t| {
                let gen = (c.next.get(&t).copied().unwrap_or(0) as f64 + 1.0) / generated;
                let p = (1.0 - p_copy) * gen + if copyable && t == copy { p_copy } else { 0.0 };
                p.ln()
            })
            .collect()
    }
}
