//! Synthetic corpora for experiments and tests.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{TokenId, TokenSeq};
use crate::error::{Error, Result};
use crate::model::{autoregressive_generate, DecodeConfig, LanguageModel};

/// `count` sequences with lengths drawn from `len`, tokens uniform over
/// `alphabet`, each optionally closed by `eos`.
pub fn random_corpus(
    count: usize,
    len: Range<usize>,
    alphabet: Range<TokenId>,
    eos: Option<TokenId>,
    seed: u64,
) -> Result<Vec<TokenSeq>> {
    if len.is_empty() || alphabet.is_empty() {
        return Err(Error::invalid("empty length or alphabet range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let n = rng.random_range(len.clone());
            let mut seq: TokenSeq = (0..n).map(|_| rng.random_range(alphabet.clone())).collect();
            seq.extend(eos);
            seq
        })
        .collect())
}

/// Copy of `corpus` where each token inside `alphabet` is, with probability
/// `rate`, replaced by a different token drawn uniformly from `alphabet`.
/// Tokens outside the alphabet (such as EOS) are left alone.
pub fn substitute(
    corpus: &[TokenSeq],
    rate: f64,
    alphabet: Range<TokenId>,
    seed: u64,
) -> Result<Vec<TokenSeq>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "substitution rate {rate} outside [0, 1]"
        )));
    }
    if alphabet.len() < 2 {
        return Err(Error::invalid("substitution needs at least two symbols"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(corpus
        .iter()
        .map(|seq| {
            seq.iter()
                .map(|&t| {
                    if alphabet.contains(&t) && rng.random_bool(rate) {
                        // shift by a nonzero offset so the symbol always changes
                        let width = alphabet.end - alphabet.start;
                        let offset = rng.random_range(1..width);
                        alphabet.start + (t - alphabet.start + offset) % width
                    } else {
                        t
                    }
                })
                .collect()
        })
        .collect())
}

/// Each prompt followed by the model's own continuation, decoded with a
/// per-prompt seed derived from `config.seed`.
pub fn model_continuations(
    model: &dyn LanguageModel,
    prompts: &[TokenSeq],
    config: &DecodeConfig,
) -> Result<Vec<TokenSeq>> {
    prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let cfg = DecodeConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..config.clone()
            };
            let mut seq = p.clone();
            seq.extend(autoregressive_generate(model, p, &cfg)?);
            Ok(seq)
        })
        .collect()
}
