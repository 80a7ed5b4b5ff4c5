//! Deterministic n-gram target model.
//!
//! The distribution comes from additively smoothed n-gram counts, backing off
//! to the longest suffix of the context that was seen in the training corpus.
//! The embedding is a fixed random projection of the last `order` tokens,
//! weighted towards the most recent one, so contexts that end the same way
//! land close together and contexts with different last tokens do not.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LanguageModel, ModelOutput};
use crate::corpus::{check_vocab, TokenId, TokenSeq};
use crate::error::{Error, Result};
use crate::pipeline::ContextEmbedding;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelSpec {
    pub vocab_size: usize,
    /// Maximum context length used for counting (the n of the n-gram).
    pub order: usize,
    pub embed_dim: usize,
    pub seed: u64,
    pub eos: TokenId,
    /// Additive smoothing; 0 gives raw relative frequencies.
    pub smoothing: f64,
    /// Share of the squared embedding weight on the most recent token.
    pub recency: f64,
}

impl Default for ToyModelSpec {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            order: 3,
            embed_dim: 256,
            seed: 0,
            eos: 0,
            smoothing: 1.0,
            recency: 0.7,
        }
    }
}

impl ToyModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must be at least 2"));
        }
        if self.vocab_size > u32::MAX as usize {
            return Err(Error::invalid("vocab_size does not fit a token id"));
        }
        if self.eos as usize >= self.vocab_size {
            return Err(Error::invalid(format!(
                "eos id {} outside vocabulary of {}",
                self.eos, self.vocab_size
            )));
        }
        if self.order == 0 {
            return Err(Error::invalid("order must be at least 1"));
        }
        if self.embed_dim == 0 {
            return Err(Error::invalid("embed_dim must be positive"));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::invalid("smoothing must be a non-negative number"));
        }
        if !(self.recency > 0.0 && self.recency <= 1.0) {
            return Err(Error::invalid("recency must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Counts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    spec: ToyModelSpec,
    /// Keyed by the conditioning context; the empty key holds unigram counts.
    counts: HashMap<TokenSeq, Counts>,
    /// `order` tables of `vocab_size` rows, each `embed_dim` wide.
    projection: Vec<f32>,
    position_weights: Vec<f64>,
}

pub fn build_toy_model(spec: ToyModelSpec, corpus: &[TokenSeq]) -> Result<ToyModel> {
    spec.validate()?;
    check_vocab(corpus, spec.vocab_size)?;
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::invalid("cannot fit a model on an empty corpus"));
    }

    let mut counts: HashMap<TokenSeq, Counts> = HashMap::new();
    for seq in corpus {
        for (t, &next) in seq.iter().enumerate() {
            for k in 0..=spec.order.min(t) {
                let entry = counts.entry(seq[t - k..t].to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(next).or_default() += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = 1.0 / (spec.embed_dim as f64).sqrt();
    let projection = (0..spec.order * spec.vocab_size * spec.embed_dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (z * scale) as f32
        })
        .collect();

    let mut position_weights = vec![spec.recency.sqrt()];
    if spec.order > 1 {
        let rest = ((1.0 - spec.recency) / (spec.order - 1) as f64).sqrt();
        position_weights.extend(std::iter::repeat_n(rest, spec.order - 1));
    } else {
        position_weights[0] = 1.0;
    }

    Ok(ToyModel {
        spec,
        counts,
        projection,
        position_weights,
    })
}

impl ToyModel {
    pub fn spec(&self) -> &ToyModelSpec {
        &self.spec
    }

    fn check_context(&self, context: &[TokenId]) -> Result<()> {
        if context.is_empty() {
            return Err(Error::invalid("forward needs a non-empty context"));
        }
        if let Some(&bad) = context
            .iter()
            .find(|&&t| t as usize >= self.spec.vocab_size)
        {
            return Err(Error::invalid(format!(
                "token id {bad} outside vocabulary of {}",
                self.spec.vocab_size
            )));
        }
        Ok(())
    }

    fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.spec.vocab_size;
        let max_k = self.spec.order.min(context.len());
        let counts = (0..=max_k)
            .rev()
            .find_map(|k| self.counts.get(&context[context.len() - k..]))
            .expect("unigram counts exist for a non-empty corpus");
        let alpha = self.spec.smoothing;
        let denom = counts.total as f64 + alpha * v as f64;
        let mut dist = vec![alpha / denom; v];
        for (&tok, &c) in &counts.next {
            dist[tok as usize] = (c as f64 + alpha) / denom;
        }
        dist
    }

    fn embedding(&self, context: &[TokenId]) -> ContextEmbedding {
        let d = self.spec.embed_dim;
        let v = self.spec.vocab_size;
        let mut acc = vec![0f64; d];
        for (i, &tok) in context.iter().rev().take(self.spec.order).enumerate() {
            let w = self.position_weights[i];
            let row = &self.projection[(i * v + tok as usize) * d..][..d];
            for (a, &r) in acc.iter_mut().zip(row) {
                *a += w * r as f64;
            }
        }
        ContextEmbedding(acc.into_iter().map(|x| x as f32).collect())
    }
}

impl LanguageModel for ToyModel {
    fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    fn embed_dim(&self) -> usize {
        self.spec.embed_dim
    }

    fn eos(&self) -> TokenId {
        self.spec.eos
    }

    fn forward(&self, context: &[TokenId]) -> Result<ModelOutput> {
        self.check_context(context)?;
        Ok(ModelOutput {
            distribution: self.distribution(context),
            embedding: self.embedding(context),
        })
    }
}
