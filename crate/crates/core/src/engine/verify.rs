//! One verification pass over a batch of drafts.

use std::collections::HashMap;

use crate::corpus::{TokenId, TokenSeq};
use crate::error::{Error, Result};
use crate::model::{sample_token, DecodeConfig, LanguageModel, ModelOutput, PositionalRng};
use crate::pipeline::ContextEmbedding;

/// Drafts laid out as a `rows x width` block, padded on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftBatch {
    pub rows: Vec<TokenSeq>,
    /// Real (unpadded) length of each row.
    pub lens: Vec<usize>,
    pub width: usize,
}

impl DraftBatch {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, r: usize) -> &[TokenId] {
        &self.rows[r][..self.lens[r]]
    }
}

/// Keep the first `draft_count` non-empty drafts, each cut to `draft_len`
/// and padded with `pad` to exactly that width.
pub fn make_draft_batch(
    drafts: &[TokenSeq],
    draft_count: usize,
    draft_len: usize,
    pad: TokenId,
) -> DraftBatch {
    let mut rows = Vec::new();
    let mut lens = Vec::new();
    for d in drafts.iter().filter(|d| !d.is_empty()).take(draft_count) {
        let len = d.len().min(draft_len);
        let mut row = d[..len].to_vec();
        row.resize(draft_len, pad);
        rows.push(row);
        lens.push(len);
    }
    DraftBatch {
        rows,
        lens,
        width: draft_len,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyResult {
    /// Longest accepted draft prefix.
    pub accepted: TokenSeq,
    /// Target-model token following `accepted`: the correction at the first
    /// mismatch, or the extra token after a fully accepted row.
    pub bonus: TokenId,
    /// Embedding of `context ++ accepted`.
    pub last_embedding: ContextEmbedding,
    pub winning_row: Option<usize>,
    /// Accepted prefix length of every row.
    pub row_accepts: Vec<usize>,
}

/// Verify every row against the target model.
///
/// Row `r` is accepted up to the first `j` where the token sampled at
/// `context ++ row[..j]` differs from `row[j]`. The token at relative
/// position `j` is drawn from stream `rng.at(j)`, so all rows agree on what
/// the model would emit after a shared prefix. The longest accepted prefix
/// wins, lowest row on ties.
pub fn batch_verify(
    model: &dyn LanguageModel,
    context: &[TokenId],
    batch: &DraftBatch,
    config: &DecodeConfig,
    rng: PositionalRng,
) -> Result<VerifyResult> {
    if context.is_empty() {
        return Err(Error::invalid("verification needs a non-empty context"));
    }
    let mut cache: HashMap<Vec<TokenId>, (TokenId, ModelOutput)> = HashMap::new();
    let mut step = |prefix: &[TokenId]| -> Result<TokenId> {
        if let Some((tok, _)) = cache.get(prefix) {
            return Ok(*tok);
        }
        let mut full = context.to_vec();
        full.extend_from_slice(prefix);
        let out = model.forward(&full)?;
        let tok = sample_token(&out.distribution, config, &mut rng.at(prefix.len() as u64))?;
        cache.insert(prefix.to_vec(), (tok, out));
        Ok(tok)
    };

    let mut row_accepts = Vec::with_capacity(batch.rows.len());
    let mut best: Option<(usize, usize)> = None;
    for r in 0..batch.rows.len() {
        let row = batch.row(r);
        let mut j = 0;
        while j < row.len() && step(&row[..j])? == row[j] {
            j += 1;
        }
        row_accepts.push(j);
        if j > 0 && best.is_none_or(|(_, b)| j > b) {
            best = Some((r, j));
        }
    }

    let accepted: TokenSeq = match best {
        Some((r, j)) => batch.row(r)[..j].to_vec(),
        None => Vec::new(),
    };
    let bonus = step(&accepted)?;
    let (_, out) = cache.remove(&accepted).expect("bonus step was cached");
    Ok(VerifyResult {
        accepted,
        bonus,
        last_embedding: out.embedding,
        winning_row: best.map(|(r, _)| r),
        row_accepts,
    })
}
