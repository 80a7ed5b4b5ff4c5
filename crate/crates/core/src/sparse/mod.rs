//! Token-level retrieval baseline over a suffix array.
//!
//! The corpus is concatenated into one text with a separator id between
//! sequences. Drafting looks for the longest context suffix that occurs in
//! the text followed by the token that is about to be emitted, and proposes
//! the most frequent continuations of those occurrences.

mod io;
mod suffix_array;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::ops::Range;

pub use suffix_array::build_suffix_array;

use crate::corpus::{TokenId, TokenSeq};
use crate::error::{Error, Result};

/// Placed between sequences; never a valid token id.
pub const SEPARATOR: TokenId = TokenId::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseParams {
    /// Longest context suffix tried.
    pub max_suffix: usize,
    pub draft_count: usize,
    pub draft_len: usize,
}

impl Default for SparseParams {
    fn default() -> Self {
        Self {
            max_suffix: 16,
            draft_count: 10,
            draft_len: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    text: Vec<TokenId>,
    sa: Vec<usize>,
    params: SparseParams,
}

pub fn build_sparse_index(corpus: &[TokenSeq], params: SparseParams) -> Result<SparseIndex> {
    let mut text = Vec::with_capacity(corpus.iter().map(|s| s.len() + 1).sum());
    for seq in corpus.iter().filter(|s| !s.is_empty()) {
        if seq.contains(&SEPARATOR) {
            return Err(Error::invalid(format!(
                "token id {SEPARATOR} is reserved as separator"
            )));
        }
        if !text.is_empty() {
            text.push(SEPARATOR);
        }
        text.extend_from_slice(seq);
    }
    if text.is_empty() {
        return Err(Error::invalid("cannot index an empty corpus"));
    }
    let sa = build_suffix_array(&text);
    Ok(SparseIndex { text, sa, params })
}

impl SparseIndex {
    pub(crate) fn from_raw(text: Vec<TokenId>, sa: Vec<usize>, params: SparseParams) -> Self {
        Self { text, sa, params }
    }

    pub fn params(&self) -> SparseParams {
        self.params
    }

    pub fn text(&self) -> &[TokenId] {
        &self.text
    }

    pub fn suffix_array(&self) -> &[usize] {
        &self.sa
    }

    /// Corpus tokens, not counting separators.
    pub fn token_count(&self) -> usize {
        self.text.iter().filter(|&&t| t != SEPARATOR).count()
    }

    fn compare_suffix(&self, pos: usize, pattern: &[TokenId]) -> Ordering {
        let suffix = &self.text[pos..];
        let m = pattern.len().min(suffix.len());
        suffix[..m]
            .cmp(&pattern[..m])
            .then(if suffix.len() < pattern.len() {
                Ordering::Less
            } else {
                Ordering::Equal
            })
    }

    /// Suffix-array interval of the suffixes starting with `pattern`.
    pub fn find(&self, pattern: &[TokenId]) -> Range<usize> {
        if pattern.is_empty() {
            return 0..self.sa.len();
        }
        let lo = self
            .sa
            .partition_point(|&p| self.compare_suffix(p, pattern) == Ordering::Less);
        let hi = self
            .sa
            .partition_point(|&p| self.compare_suffix(p, pattern) != Ordering::Greater);
        lo..hi
    }

    /// Text positions where `pattern` occurs, in increasing order.
    pub fn occurrences(&self, pattern: &[TokenId]) -> Vec<usize> {
        let mut pos: Vec<usize> = self.sa[self.find(pattern)].to_vec();
        pos.sort_unstable();
        pos
    }

    /// Drafts with the index's own count and length.
    pub fn retrieve(&self, context: &[TokenId], next_token: TokenId) -> Vec<TokenSeq> {
        self.retrieve_with(
            context,
            next_token,
            self.params.draft_count,
            self.params.draft_len,
        )
    }

    /// Up to `draft_count` drafts of at most `draft_len` tokens, each starting
    /// with `next_token`, ranked by how often they follow the longest matching
    /// context suffix (earliest occurrence first on ties).
    pub fn retrieve_with(
        &self,
        context: &[TokenId],
        next_token: TokenId,
        draft_count: usize,
        draft_len: usize,
    ) -> Vec<TokenSeq> {
        if draft_count == 0 || draft_len == 0 {
            return Vec::new();
        }
        let longest = self.params.max_suffix.min(context.len());
        let mut pattern = Vec::with_capacity(longest + 1);
        for s in (1..=longest).rev() {
            pattern.clear();
            pattern.extend_from_slice(&context[context.len() - s..]);
            pattern.push(next_token);
            let range = self.find(&pattern);
            if range.is_empty() {
                continue;
            }
            // continuation -> (frequency, first position)
            let mut tally: HashMap<&[TokenId], (usize, usize)> = HashMap::new();
            for &pos in &self.sa[range] {
                let start = pos + s;
                let end = (start + draft_len).min(self.text.len());
                let cont = &self.text[start..end];
                let cont = match cont.iter().position(|&t| t == SEPARATOR) {
                    Some(cut) => &cont[..cut],
                    None => cont,
                };
                let entry = tally.entry(cont).or_insert((0, pos));
                entry.0 += 1;
                entry.1 = entry.1.min(pos);
            }
            let mut ranked: Vec<(&[TokenId], (usize, usize))> = tally.into_iter().collect();
            ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
            return ranked
                .into_iter()
                .take(draft_count)
                .map(|(c, _)| c.to_vec())
                .collect();
        }
        Vec::new()
    }
}
