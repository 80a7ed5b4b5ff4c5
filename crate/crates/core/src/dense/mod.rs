//! Dense datastore: reduced context keys mapped to the tokens that followed.
//!
//! Every prefix `x[..t]` (1 <= t < len) of every corpus sequence becomes one
//! record. Its key is the pipeline-reduced embedding of the prefix and its
//! value the next `N` tokens, padded with EOS at the end of the sequence.

mod exact;
mod index;
mod io;
mod ivf;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use exact::ExactIndex;
pub use index::{
    Hit, IndexBuilder, IndexParams, IndexRegistry, KeyMatrix, NnIndex, COSINE_EPSILON,
};
pub use ivf::IvfIndex;

use crate::corpus::{TokenId, TokenSeq};
use crate::error::{Error, Result};
use crate::model::LanguageModel;
use crate::pipeline::PipelineModel;

pub const DEFAULT_VALUE_LEN: usize = 20;
pub const DEFAULT_TOP_K: usize = 10;
/// Rank cutoff used by [`mrr_eval`].
pub const MRR_CUTOFF: usize = 100;

#[derive(Debug)]
pub struct DenseDatastore {
    key_dim: usize,
    value_len: usize,
    keys: Vec<f32>,
    norms: Vec<f64>,
    values: Vec<TokenId>,
    index: Box<dyn NnIndex>,
    pipeline_ref: Option<String>,
}

impl DenseDatastore {
    /// Assemble a store from flat key and value tables; starts with an exact index.
    pub fn from_parts(
        key_dim: usize,
        value_len: usize,
        keys: Vec<f32>,
        values: Vec<TokenId>,
    ) -> Result<Self> {
        if key_dim == 0 || value_len == 0 {
            return Err(Error::invalid(
                "key dimension and value length must be positive",
            ));
        }
        if !keys.len().is_multiple_of(key_dim) {
            return Err(Error::DimensionMismatch {
                expected: key_dim,
                actual: keys.len() % key_dim,
            });
        }
        let count = keys.len() / key_dim;
        if values.len() != count * value_len {
            return Err(Error::invalid(format!(
                "{count} keys but {} value tokens (expected {})",
                values.len(),
                count * value_len
            )));
        }
        let norms = keys.par_chunks_exact(key_dim).map(index::norm).collect();
        Ok(Self {
            key_dim,
            value_len,
            keys,
            norms,
            values,
            index: Box::new(ExactIndex),
            pipeline_ref: None,
        })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn value_len(&self) -> usize {
        self.value_len
    }

    pub fn key(&self, record: usize) -> &[f32] {
        &self.keys[record * self.key_dim..(record + 1) * self.key_dim]
    }

    pub fn value(&self, record: usize) -> &[TokenId] {
        &self.values[record * self.value_len..(record + 1) * self.value_len]
    }

    pub fn keys(&self) -> KeyMatrix<'_> {
        KeyMatrix {
            data: &self.keys,
            norms: &self.norms,
            dim: self.key_dim,
        }
    }

    pub fn raw_keys(&self) -> &[f32] {
        &self.keys
    }

    pub fn raw_values(&self) -> &[TokenId] {
        &self.values
    }

    pub fn index(&self) -> &dyn NnIndex {
        self.index.as_ref()
    }

    pub fn set_index(&mut self, index: Box<dyn NnIndex>) {
        self.index = index;
    }

    /// Replace the search strategy with the named one from `registry`.
    pub fn rebuild_index(
        &mut self,
        registry: &IndexRegistry,
        name: &str,
        params: &IndexParams,
    ) -> Result<()> {
        let index = registry.build(name, &self.keys(), params)?;
        self.index = index;
        Ok(())
    }

    /// Fingerprint of the pipeline the keys were produced with, when known.
    pub fn pipeline_ref(&self) -> Option<&str> {
        self.pipeline_ref.as_deref()
    }

    pub fn set_pipeline_ref(&mut self, fingerprint: Option<String>) {
        self.pipeline_ref = fingerprint;
    }

    /// Nearest records to `key` by cosine similarity, best first.
    pub fn query(&self, key: &[f32], top_k: usize) -> Result<Vec<Hit>> {
        if key.len() != self.key_dim {
            return Err(Error::DimensionMismatch {
                expected: self.key_dim,
                actual: key.len(),
            });
        }
        if self.is_empty() {
            return Err(Error::invalid("query on an empty datastore"));
        }
        Ok(self.index.search(&self.keys(), key, top_k))
    }

    /// Copy of the store keeping only the first record of each bitwise-identical key.
    pub fn dedup_keys(&self) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.len() {
            let bits: Vec<u32> = self.key(r).iter().map(|x| x.to_bits()).collect();
            if seen.insert(bits) {
                keys.extend_from_slice(self.key(r));
                values.extend_from_slice(self.value(r));
            }
        }
        let mut out = Self::from_parts(self.key_dim, self.value_len, keys, values)?;
        out.pipeline_ref = self.pipeline_ref.clone();
        Ok(out)
    }
}

/// One record per corpus prefix, keyed by its reduced embedding.
pub fn build_dense_store(
    corpus: &[TokenSeq],
    model: &dyn LanguageModel,
    pipeline: &PipelineModel,
    value_len: usize,
) -> Result<DenseDatastore> {
    if pipeline.embed_dim() != model.embed_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.embed_dim(),
            actual: pipeline.embed_dim(),
        });
    }
    if value_len == 0 {
        return Err(Error::invalid("value length must be positive"));
    }
    let eos = model.eos();
    let per_seq: Vec<(Vec<f32>, Vec<TokenId>)> = corpus
        .par_iter()
        .map(|seq| -> Result<_> {
            let mut keys = Vec::new();
            let mut values = Vec::new();
            for t in 1..seq.len() {
                let emb = model.forward(&seq[..t])?.embedding;
                keys.extend_from_slice(&pipeline.embed_to_key(&emb)?);
                let tail = &seq[t..(t + value_len).min(seq.len())];
                values.extend_from_slice(tail);
                values.extend(std::iter::repeat_n(eos, value_len - tail.len()));
            }
            Ok((keys, values))
        })
        .collect::<Result<_>>()?;
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for (k, v) in per_seq {
        keys.extend(k);
        values.extend(v);
    }
    if values.is_empty() {
        return Err(Error::invalid(
            "corpus has no sequence longer than one token",
        ));
    }
    let mut store = DenseDatastore::from_parts(pipeline.key_dim(), value_len, keys, values)?;
    store.pipeline_ref = Some(pipeline.fingerprint());
    Ok(store)
}

/// Reference search: score every record and fully sort. Kept deliberately
/// naive so it can check the indexed search paths.
pub fn exact_nn_oracle(store: &DenseDatastore, key: &[f32], top_k: usize) -> Vec<Hit> {
    let qn = key
        .iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt();
    let mut all: Vec<Hit> = (0..store.len())
        .map(|r| {
            let k = store.key(r);
            let d: f64 = k.iter().zip(key).map(|(&a, &b)| a as f64 * b as f64).sum();
            let kn = k
                .iter()
                .map(|&x| (x as f64) * (x as f64))
                .sum::<f64>()
                .sqrt();
            Hit {
                record: r,
                score: d / (kn * qn).max(COSINE_EPSILON),
            }
        })
        .collect();
    all.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.record.cmp(&b.record)));
    all.truncate(top_k);
    all
}

/// Drafts for the next step: neighbour values that start with `next_token`,
/// cut to `draft_len`, de-duplicated, at most `draft_count` of them, in
/// neighbour order.
pub fn retrieve_drafts(
    store: &DenseDatastore,
    key: &[f32],
    next_token: TokenId,
    top_k: usize,
    draft_count: usize,
    draft_len: usize,
) -> Result<Vec<TokenSeq>> {
    if draft_len > store.value_len() {
        return Err(Error::invalid(format!(
            "draft length {draft_len} exceeds stored value length {}",
            store.value_len()
        )));
    }
    let hits = store.query(key, top_k)?;
    let mut seen = HashSet::new();
    let mut drafts = Vec::new();
    for hit in hits {
        if drafts.len() >= draft_count {
            break;
        }
        let value = store.value(hit.record);
        if value[0] != next_token {
            continue;
        }
        let draft = value[..draft_len].to_vec();
        if seen.insert(draft.clone()) {
            drafts.push(draft);
        }
    }
    Ok(drafts)
}

/// Mean reciprocal rank of each sampled record when its own key is the query
/// (0 when it falls outside the top [`MRR_CUTOFF`]).
pub fn mrr_eval(store: &DenseDatastore, sample_size: usize, seed: u64) -> Result<f64> {
    if store.is_empty() {
        return Err(Error::invalid("MRR on an empty datastore"));
    }
    if sample_size == 0 {
        return Err(Error::invalid("MRR sample size must be positive"));
    }
    let m = sample_size.min(store.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = rand::seq::index::sample(&mut rng, store.len(), m).into_vec();
    let total: f64 = sample
        .par_iter()
        .map(|&r| -> Result<f64> {
            let hits = store.query(store.key(r), MRR_CUTOFF)?;
            Ok(hits
                .iter()
                .position(|h| h.record == r)
                .map_or(0.0, |p| 1.0 / (p + 1) as f64))
        })
        .sum::<Result<f64>>()?;
    Ok(total / m as f64)
}
