//! Speculative decoding loop: draft, verify in one batched pass, emit the
//! longest accepted prefix, repeat.

mod decode;
mod drafter;
mod trace;
mod verify;

pub use decode::{sd_generate, DraftShape, SpeculativeDecoder};
pub use drafter::{
    DenseDrafter, Drafter, DrafterFactory, DrafterRegistry, DrafterResources, NullDrafter,
    SparseDrafter,
};
pub use trace::{DecodeTrace, IterationRecord};
pub use verify::{batch_verify, make_draft_batch, DraftBatch, VerifyResult};
