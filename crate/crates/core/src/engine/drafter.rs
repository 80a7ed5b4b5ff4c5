//! Draft sources. Each one implements [`Drafter`] and is registered by name
//! in a [`DrafterRegistry`], so the decode loop is agnostic to where drafts
//! come from.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::DraftShape;
use crate::corpus::{TokenId, TokenSeq};
use crate::dense::{retrieve_drafts, DenseDatastore, DEFAULT_TOP_K};
use crate::error::{Error, Result};
use crate::pipeline::ReducedKey;
use crate::sparse::SparseIndex;

pub trait Drafter: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether [`Drafter::propose`] wants the reduced key of the context.
    fn needs_key(&self) -> bool {
        false
    }

    /// Candidate continuations of `context` that begin with `next_token`.
    fn propose(
        &self,
        context: &[TokenId],
        key: Option<&ReducedKey>,
        next_token: TokenId,
        shape: DraftShape,
    ) -> Result<Vec<TokenSeq>>;
}

/// Never drafts; decoding degenerates to one verified token per call.
#[derive(Debug, Default)]
pub struct NullDrafter;

impl Drafter for NullDrafter {
    fn name(&self) -> &'static str {
        "none"
    }

    fn propose(
        &self,
        _context: &[TokenId],
        _key: Option<&ReducedKey>,
        _next_token: TokenId,
        _shape: DraftShape,
    ) -> Result<Vec<TokenSeq>> {
        Ok(Vec::new())
    }
}

/// Nearest-neighbour drafts from a dense datastore.
#[derive(Debug)]
pub struct DenseDrafter {
    pub store: Arc<DenseDatastore>,
    /// Neighbours fetched before filtering; raised to the draft count if smaller.
    pub top_k: usize,
}

impl Drafter for DenseDrafter {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn needs_key(&self) -> bool {
        true
    }

    fn propose(
        &self,
        _context: &[TokenId],
        key: Option<&ReducedKey>,
        next_token: TokenId,
        shape: DraftShape,
    ) -> Result<Vec<TokenSeq>> {
        let key = key.ok_or_else(|| Error::invalid("dense drafting needs a context key"))?;
        retrieve_drafts(
            &self.store,
            key,
            next_token,
            self.top_k.max(shape.draft_count),
            shape.draft_count,
            shape.draft_len,
        )
    }
}

/// Suffix-match drafts from a sparse index.
#[derive(Debug)]
pub struct SparseDrafter {
    pub index: Arc<SparseIndex>,
}

impl Drafter for SparseDrafter {
    fn name(&self) -> &'static str {
        "sparse"
    }

    fn propose(
        &self,
        context: &[TokenId],
        _key: Option<&ReducedKey>,
        next_token: TokenId,
        shape: DraftShape,
    ) -> Result<Vec<TokenSeq>> {
        Ok(self
            .index
            .retrieve_with(context, next_token, shape.draft_count, shape.draft_len))
    }
}

/// What a drafter may be built from.
#[derive(Debug, Clone)]
pub struct DrafterResources {
    pub dense: Option<Arc<DenseDatastore>>,
    pub sparse: Option<Arc<SparseIndex>>,
    pub top_k: usize,
}

impl Default for DrafterResources {
    fn default() -> Self {
        Self {
            dense: None,
            sparse: None,
            top_k: DEFAULT_TOP_K,
        }
    }
}

pub type DrafterFactory = fn(&DrafterResources) -> Result<Arc<dyn Drafter>>;

pub struct DrafterRegistry {
    factories: BTreeMap<&'static str, DrafterFactory>,
}

impl DrafterRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("none", |_| Ok(Arc::new(NullDrafter)));
        r.register("dense", |res| {
            let store = res
                .dense
                .clone()
                .ok_or_else(|| Error::Config("the dense drafter needs a dense datastore".into()))?;
            Ok(Arc::new(DenseDrafter {
                store,
                top_k: res.top_k,
            }))
        });
        r.register("sparse", |res| {
            let index = res
                .sparse
                .clone()
                .ok_or_else(|| Error::Config("the sparse drafter needs a sparse index".into()))?;
            Ok(Arc::new(SparseDrafter { index }))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: DrafterFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, name: &str, resources: &DrafterResources) -> Result<Arc<dyn Drafter>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown drafter {name:?} (available: {})",
                self.names().join(", ")
            ))
        })?;
        factory(resources)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{build_sparse_index, SparseParams};

    #[test]
    fn registry_builds_by_name() {
        let reg = DrafterRegistry::with_builtins();
        assert_eq!(reg.names(), vec!["dense", "none", "sparse"]);
        let res = DrafterResources::default();
        assert_eq!(reg.build("none", &res).unwrap().name(), "none");
        assert!(matches!(reg.build("dense", &res), Err(Error::Config(_))));
        assert!(matches!(reg.build("ngram", &res), Err(Error::Config(_))));

        let sparse = build_sparse_index(&[vec![1, 2, 3]], SparseParams::default()).unwrap();
        let res = DrafterResources {
            sparse: Some(Arc::new(sparse)),
            ..DrafterResources::default()
        };
        let d = reg.build("sparse", &res).unwrap();
        let shape = DraftShape {
            draft_count: 2,
            draft_len: 5,
        };
        assert_eq!(d.propose(&[1], None, 2, shape).unwrap(), vec![vec![2, 3]]);
    }

    #[test]
    fn dense_drafter_requires_key() {
        let store = DenseDatastore::from_parts(2, 1, vec![1.0, 0.0], vec![4]).unwrap();
        let d = DenseDrafter {
            store: Arc::new(store),
            top_k: 1,
        };
        let shape = DraftShape {
            draft_count: 1,
            draft_len: 1,
        };
        assert!(d.propose(&[1], None, 4, shape).is_err());
        let key = ReducedKey(vec![1.0, 0.0]);
        assert_eq!(
            d.propose(&[1], Some(&key), 4, shape).unwrap(),
            vec![vec![4]]
        );
    }
}
