//! Nearest-neighbour search strategies over the datastore keys.
//!
//! Every strategy implements [`NnIndex`] and is registered by name in an
//! [`IndexRegistry`], so the config can pick one at run time.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use super::exact::ExactIndex;
use super::ivf::IvfIndex;
use crate::error::{Error, Result};

/// Guards the cosine denominator against zero-length vectors.
pub const COSINE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub record: usize,
    pub score: f64,
}

/// Borrowed view of the key table with precomputed row norms.
#[derive(Clone, Copy)]
pub struct KeyMatrix<'a> {
    pub data: &'a [f32],
    pub norms: &'a [f64],
    pub dim: usize,
}

impl<'a> KeyMatrix<'a> {
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cosine(&self, i: usize, query: &[f32], query_norm: f64) -> f64 {
        dot(self.row(i), query) / (self.norms[i] * query_norm).max(COSINE_EPSILON)
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub(crate) fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Bounded selection of the best hits: higher score first, lower record
/// index on ties.
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Ranked>,
}

#[derive(PartialEq)]
struct Ranked(Hit);

impl Eq for Ranked {}

impl Ord for Ranked {
    // "greater" means worse, so the heap top is the weakest kept hit
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .score
            .total_cmp(&self.0.score)
            .then(self.0.record.cmp(&other.0.record))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    pub fn push(&mut self, hit: Hit) {
        if self.k == 0 {
            return;
        }
        let cand = Ranked(hit);
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(worst) = self.heap.peek() {
            if cand < *worst {
                self.heap.pop();
                self.heap.push(cand);
            }
        }
    }

    pub fn into_sorted(self) -> Vec<Hit> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| r.0)
            .collect()
    }
}

pub trait NnIndex: Send + Sync + fmt::Debug {
    /// Registry name of the strategy.
    fn kind(&self) -> &'static str;

    /// Up to `top_k` records by descending cosine similarity.
    fn search(&self, keys: &KeyMatrix<'_>, query: &[f32], top_k: usize) -> Vec<Hit>;

    /// Serialized form, for strategies whose build is worth persisting.
    fn to_bytes(&self) -> Option<Vec<u8>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexParams {
    /// Number of inverted lists; `None` picks about `sqrt(count)`.
    pub ivf_lists: Option<usize>,
    pub ivf_iters: usize,
    pub ivf_nprobe: usize,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            ivf_lists: None,
            ivf_iters: 25,
            ivf_nprobe: 8,
            seed: 0,
        }
    }
}

pub type IndexBuilder = fn(&KeyMatrix<'_>, &IndexParams) -> Result<Box<dyn NnIndex>>;

pub struct IndexRegistry {
    builders: BTreeMap<&'static str, IndexBuilder>,
}

impl IndexRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("exact", |_, _| Ok(Box::new(ExactIndex)));
        r.register("ivf", |keys, params| {
            Ok(Box::new(IvfIndex::build(keys, params)?))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, builder: IndexBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(
        &self,
        name: &str,
        keys: &KeyMatrix<'_>,
        params: &IndexParams,
    ) -> Result<Box<dyn NnIndex>> {
        let builder = self.builders.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown index {name:?} (available: {})",
                self.names().join(", ")
            ))
        })?;
        builder(keys, params)
    }
}
