//! Speculative decoding with retrieved drafts.
//!
//! A small target model ([`model`]) is accelerated by proposing multi-token
//! drafts from a datastore and verifying them in one batched pass
//! ([`engine`]). Drafts come either from a dense store of reduced hidden-state
//! keys ([`pipeline`], [`dense`]) or from a suffix-array index over raw tokens
//! ([`sparse`]). [`eval`] measures acceptance, call counts and throughput, and
//! [`cli`] wires everything to the `dresd` binary.

mod binfmt;
pub mod cli;
pub mod corpus;
pub mod dense;
pub mod engine;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod sparse;
pub mod synth;

pub use corpus::{TokenId, TokenSeq};
pub use error::{Error, Result};
