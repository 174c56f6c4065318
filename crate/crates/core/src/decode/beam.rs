//! Length-normalized beam search with the optional balance mask.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{element_delta, is_balanced};
use crate::reaction::{parse_reaction, ReactionRecord};

use super::mask::{compute_mask, DecodeState, OutputMode};
use super::scorer::Scorer;
use super::vocab::{TokenVocabulary, ARROW, BOS_ID, EOS_ID, UNK_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam: usize,
    pub max_tokens: usize,
    pub constrained: bool,
    pub mode: OutputMode,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 5,
            max_tokens: 256,
            constrained: true,
            mode: OutputMode::FullEquation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, EOS included when finished.
    pub tokens: Vec<u32>,
    /// Predicted reaction text (unioned with the input in missing-molecule mode).
    pub text: String,
    /// Sum of token log-probabilities divided by the token count.
    pub logprob: f64,
    pub finished: bool,
    pub record: Option<ReactionRecord>,
    pub valid: bool,
    /// Fully balanced, hydrogen included (checked by re-parsing).
    pub balanced: bool,
    /// Balanced in all non-hydrogen elements and charge.
    pub heavy_balanced: bool,
}

/// Text the decoder conditions on: agents merged, molecules canonical.
pub fn source_text(r: &ReactionRecord) -> String {
    r.merge_agents().to_smiles()
}

fn log_softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return;
    }
    let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    z.iter_mut().for_each(|x| *x -= lse);
}

fn rank_cmp(a: (f64, &[u32]), b: (f64, &[u32])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

fn union_text(input: &ReactionRecord, generated: &str) -> String {
    let (gr, gp) = generated.split_once(ARROW).unwrap_or((generated, ""));
    let merged = input.merge_agents();
    let join = |base: String, extra: &str| match (base.is_empty(), extra.is_empty()) {
        (_, true) => base,
        (true, false) => extra.to_string(),
        (false, false) => format!("{base}.{extra}"),
    };
    let canon = merged.to_smiles();
    let (ir, ip) = canon.split_once(">>").unwrap_or((&canon, ""));
    format!("{}>>{}", join(ir.to_string(), gr), join(ip.to_string(), gp))
}

fn finalize(
    state: DecodeState,
    finished: bool,
    input: &ReactionRecord,
    vocab: &TokenVocabulary,
    mode: OutputMode,
) -> Hypothesis {
    let generated = vocab.detokenize(&state.prefix);
    let text = match mode {
        OutputMode::FullEquation => generated,
        OutputMode::MissingMolecules => union_text(input, &generated),
    };
    let record = if finished {
        parse_reaction(&text).ok()
    } else {
        None
    };
    let balanced = record.as_ref().is_some_and(is_balanced);
    let heavy_balanced = record
        .as_ref()
        .is_some_and(|r| element_delta(r).heavy().is_zero());
    Hypothesis {
        logprob: state.logprob / state.prefix.len().max(1) as f64,
        tokens: state.prefix,
        text,
        finished,
        valid: record.is_some(),
        balanced,
        heavy_balanced,
        record,
    }
}

fn normalized(s: &DecodeState) -> f64 {
    s.logprob / s.prefix.len().max(1) as f64
}

/// At least `beam` hypotheses finished and none of the live ones currently
/// scores above the `beam`-th best of them.
fn settled(done: &[DecodeState], live: &[DecodeState], beam: usize) -> bool {
    if done.len() < beam {
        return false;
    }
    let mut scores: Vec<f64> = done.iter().map(normalized).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let kth = scores[beam - 1];
    live.iter().all(|s| normalized(s) < kth)
}

/// Ranked hypotheses, best first. Finished hypotheses precede unfinished
/// ones, which are returned (flagged) only when fewer than `beam` finish.
pub fn beam_search(
    input: &ReactionRecord,
    vocab: &TokenVocabulary,
    scorer: &dyn Scorer,
    cfg: &DecodeConfig,
) -> Vec<Hypothesis> {
    assert_eq!(
        scorer.vocab_size(),
        vocab.len(),
        "scorer and vocabulary disagree"
    );
    let beam = cfg.beam.max(1);
    let source = vocab.tokenize(&source_text(input));
    let oov = source.contains(&UNK_ID);
    let mut live = vec![DecodeState::new(input, cfg.mode, oov)];
    let mut done: Vec<DecodeState> = Vec::new();
    for _ in 0..cfg.max_tokens.max(1) {
        let mut cands: Vec<(f64, usize, u32, f64)> = Vec::new();
        for (i, st) in live.iter().enumerate() {
            let mut z = scorer.next_logits(&st.prefix, &source);
            if cfg.constrained {
                for (zi, mi) in z.iter_mut().zip(compute_mask(st, vocab)) {
                    *zi += mi;
                }
            }
            log_softmax(&mut z);
            for (t, &lp) in z.iter().enumerate() {
                let t = t as u32;
                if lp.is_finite() && t != BOS_ID && t != UNK_ID {
                    cands.push((st.logprob + lp, i, t, lp));
                }
            }
        }
        if cands.is_empty() {
            break;
        }
        let key = |c: &(f64, usize, u32, f64)| {
            let mut seq = live[c.1].prefix.clone();
            seq.push(c.2);
            seq
        };
        cands.sort_by(|a, b| rank_cmp((a.0, &key(a)), (b.0, &key(b))));
        // EOS among the top `beam` candidates finishes a hypothesis; the
        // best `beam` non-EOS candidates stay live
        let mut next = Vec::with_capacity(beam);
        for (rank, (_, i, t, lp)) in cands.into_iter().enumerate() {
            if t == EOS_ID {
                if rank < beam {
                    let mut st = live[i].clone();
                    st.push(vocab, t, lp);
                    done.push(st);
                }
                continue;
            }
            if next.len() < beam {
                let mut st = live[i].clone();
                st.push(vocab, t, lp);
                next.push(st);
            }
            if rank >= beam && next.len() >= beam {
                break;
            }
        }
        live = next;
        if live.is_empty() || settled(&done, &live, beam) {
            break;
        }
    }
    let mut out: Vec<Hypothesis> = done
        .into_iter()
        .map(|s| finalize(s, true, input, vocab, cfg.mode))
        .collect();
    out.sort_by(|a, b| rank_cmp((a.logprob, &a.tokens), (b.logprob, &b.tokens)));
    if out.len() < beam {
        let mut rest: Vec<Hypothesis> = live
            .into_iter()
            .map(|s| finalize(s, false, input, vocab, cfg.mode))
            .collect();
        rest.sort_by(|a, b| rank_cmp((a.logprob, &a.tokens), (b.logprob, &b.tokens)));
        out.extend(rest);
    }
    out.truncate(beam);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeInput {
    pub id: String,
    pub incomplete_rxn: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    pub id: String,
    pub rank: usize,
    pub prediction: String,
    pub logprob: f64,
    pub balanced: bool,
    pub valid: bool,
    pub constrained: bool,
}

/// Decodes every input (in parallel). Unparseable inputs yield no rows.
pub fn decode_all(
    inputs: &[DecodeInput],
    vocab: &TokenVocabulary,
    scorer: &dyn Scorer,
    cfg: &DecodeConfig,
) -> Vec<DecodeOutput> {
    inputs
        .par_iter()
        .flat_map_iter(|inp| {
            let hyps = match parse_reaction(&inp.incomplete_rxn) {
                Ok(r) => beam_search(&r, vocab, scorer, cfg),
                Err(_) => Vec::new(),
            };
            hyps.into_iter()
                .enumerate()
                .map(move |(k, h)| DecodeOutput {
                    id: inp.id.clone(),
                    rank: k + 1,
                    prediction: h.text,
                    logprob: h.logprob,
                    balanced: h.balanced,
                    valid: h.valid,
                    constrained: cfg.constrained,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::scorer::{OracleScorer, UniformScorer};

    #[test]
    fn oracle_reproduces_target() {
        let target = "CCO.CC(=O)O>>CC(=O)OCC.O";
        let input = parse_reaction("CCO.CC(=O)O>>CC(=O)OCC").unwrap();
        let vocab = TokenVocabulary::from_corpus([target]);
        let scorer = OracleScorer {
            size: vocab.len(),
            target: vocab.tokenize(target),
            fallback: EOS_ID,
        };
        for constrained in [true, false] {
            let cfg = DecodeConfig {
                constrained,
                beam: 3,
                max_tokens: 40,
                ..DecodeConfig::default()
            };
            let hyps = beam_search(&input, &vocab, &scorer, &cfg);
            assert_eq!(hyps[0].text, target);
            assert!(hyps[0].valid && hyps[0].balanced && hyps[0].finished);
        }
    }

    #[test]
    fn corrupted_oracle_only_constrained_balances() {
        let target = "CCO.CC(=O)O>>CC(=O)OCC.O";
        let corrupted = "CCO.CC(=O)O>>CC(=O)OCC";
        let input = parse_reaction(corrupted).unwrap();
        let vocab = TokenVocabulary::from_corpus([target]);
        let scorer = OracleScorer {
            size: vocab.len(),
            target: vocab.tokenize(corrupted),
            fallback: EOS_ID,
        };
        let run = |constrained| {
            let cfg = DecodeConfig {
                constrained,
                beam: 8,
                max_tokens: 40,
                ..DecodeConfig::default()
            };
            beam_search(&input, &vocab, &scorer, &cfg).remove(0)
        };
        let (crb, rb) = (run(true), run(false));
        assert!(!rb.heavy_balanced);
        assert!(crb.heavy_balanced, "{}", crb.text);
    }

    #[test]
    fn zero_mask_makes_modes_identical() {
        let input = parse_reaction("C>>C").unwrap();
        let vocab = TokenVocabulary::from_corpus(["C.O>>C"]);
        let scorer = UniformScorer { size: vocab.len() };
        // OOV input disables the mask in constrained mode
        let input_oov = parse_reaction("[Se]>>C").unwrap();
        let a = beam_search(
            &input_oov,
            &vocab,
            &scorer,
            &DecodeConfig {
                max_tokens: 4,
                ..DecodeConfig::default()
            },
        );
        let b = beam_search(
            &input_oov,
            &vocab,
            &scorer,
            &DecodeConfig {
                max_tokens: 4,
                constrained: false,
                ..DecodeConfig::default()
            },
        );
        assert_eq!(a, b);
        assert!(!beam_search(
            &input,
            &vocab,
            &scorer,
            &DecodeConfig {
                max_tokens: 4,
                ..DecodeConfig::default()
            }
        )
        .is_empty());
    }

    #[test]
    fn missing_mode_unions_with_input() {
        let input = parse_reaction("CCO.CC(=O)O>>CC(=O)OCC").unwrap();
        let vocab = TokenVocabulary::from_corpus([">>O"]);
        let scorer = OracleScorer {
            size: vocab.len(),
            target: vocab.tokenize(">>O"),
            fallback: EOS_ID,
        };
        let cfg = DecodeConfig {
            mode: OutputMode::MissingMolecules,
            max_tokens: 5,
            ..DecodeConfig::default()
        };
        let h = beam_search(&input, &vocab, &scorer, &cfg).remove(0);
        assert_eq!(h.text, "CCO.CC(=O)O>>CCOC(C)=O.O");
        assert!(h.balanced);
    }

    #[test]
    fn unfinished_hypotheses_are_flagged() {
        let input = parse_reaction("C>>C").unwrap();
        let vocab = TokenVocabulary::from_corpus(["CC>>C"]);
        let scorer = OracleScorer {
            size: vocab.len(),
            target: vocab.tokenize("CCCCCCCC"),
            fallback: EOS_ID,
        };
        let cfg = DecodeConfig {
            beam: 1,
            max_tokens: 3,
            ..DecodeConfig::default()
        };
        let h = beam_search(&input, &vocab, &scorer, &cfg).remove(0);
        assert!(!h.finished && !h.valid && !h.balanced);
    }
}
