//! Target-model interface.
//!
//! A [`LanguageModel`] maps a non-empty context to the next-token distribution
//! and the contextual embedding of the final position. The decode loop, the
//! datastore builders and the correctness oracle only ever talk to this trait.

mod generate;
mod sampling;
mod toy;

pub use generate::{autoregressive_generate, autoregressive_generate_with, RngSource};
pub use sampling::{argmax, nucleus_set, sample_token, DecodeConfig, DecodeMode, PositionalRng};
pub use toy::{build_toy_model, ToyModel, ToyModelSpec};

use crate::corpus::TokenId;
use crate::error::Result;
use crate::pipeline::ContextEmbedding;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// Probability of each vocabulary id; sums to one.
    pub distribution: Vec<f64>,
    pub embedding: ContextEmbedding,
}

pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn embed_dim(&self) -> usize;

    fn eos(&self) -> TokenId;

    fn forward(&self, context: &[TokenId]) -> Result<ModelOutput>;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn embed_dim(&self) -> usize {
        (**self).embed_dim()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn forward(&self, context: &[TokenId]) -> Result<ModelOutput> {
        (**self).forward(context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn embed_dim(&self) -> usize {
        (**self).embed_dim()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn forward(&self, context: &[TokenId]) -> Result<ModelOutput> {
        (**self).forward(context)
    }
}
