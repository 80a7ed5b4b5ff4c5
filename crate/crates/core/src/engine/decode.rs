use std::time::Instant;

use super::{batch_verify, make_draft_batch, DecodeTrace, Drafter, IterationRecord};
use crate::corpus::{TokenId, TokenSeq};
use crate::error::{Error, Result};
use crate::model::{sample_token, DecodeConfig, LanguageModel, PositionalRng};
use crate::pipeline::PipelineModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DraftShape {
    pub draft_count: usize,
    pub draft_len: usize,
}

impl DraftShape {
    pub fn new(draft_count: usize, draft_len: usize) -> Self {
        Self {
            draft_count,
            draft_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.draft_count == 0 || self.draft_len == 0 {
            return Err(Error::invalid(format!(
                "draft shape {}x{} must be positive",
                self.draft_count, self.draft_len
            )));
        }
        Ok(())
    }
}

/// Speculative decoding with a pluggable draft source.
pub struct SpeculativeDecoder<'a> {
    pub model: &'a dyn LanguageModel,
    pub drafter: &'a dyn Drafter,
    /// Required when the drafter wants context keys.
    pub pipeline: Option<&'a PipelineModel>,
    pub shape: DraftShape,
    /// Re-run the model on each new context and compare against the carried
    /// state. Costs an extra call per iteration, which is not counted.
    pub check_state: bool,
}

impl SpeculativeDecoder<'_> {
    /// Decode up to `config.max_new_tokens` tokens after `prompt`.
    ///
    /// The loop keeps one token that is already decided (`pending`, sampled
    /// from the last verified distribution) and the context it follows. Each
    /// iteration drafts continuations starting with `pending`, verifies them
    /// in one model call, and emits the accepted prefix; the verifier's extra
    /// token becomes the next `pending`. Token `i` of the output is always
    /// drawn from stream `i` of the positional generator, so the result is
    /// exactly what plain decoding with the same streams produces.
    pub fn generate(
        &self,
        prompt: &[TokenId],
        config: &DecodeConfig,
    ) -> Result<(TokenSeq, DecodeTrace)> {
        config.validate()?;
        self.shape.validate()?;
        if prompt.is_empty() {
            return Err(Error::invalid("prompt must not be empty"));
        }
        if self.drafter.needs_key() && self.pipeline.is_none() {
            return Err(Error::Config(format!(
                "the {} drafter needs a fitted pipeline",
                self.drafter.name()
            )));
        }

        let started = Instant::now();
        let eos = self.model.eos();
        let streams = PositionalRng::new(config.seed);
        let mut trace = DecodeTrace::default();

        let first = self.model.forward(prompt)?;
        trace.llm_calls = 1;
        let mut pending = sample_token(&first.distribution, config, &mut streams.at(0))?;
        let mut embedding = first.embedding;
        let mut anchor = prompt.to_vec();
        let mut generated: TokenSeq = Vec::new();

        loop {
            let iter_started = Instant::now();
            if pending == eos || generated.len() + 1 == config.max_new_tokens {
                generated.push(pending);
                trace.iterations.push(IterationRecord {
                    drafted_tokens: 0,
                    accepted_tokens: 0,
                    draft_count: 0,
                    wall_ns: iter_started.elapsed().as_nanos() as u64,
                });
                break;
            }

            let key = match (self.drafter.needs_key(), self.pipeline) {
                (true, Some(p)) => Some(p.embed_to_key(&embedding)?),
                _ => None,
            };
            let mut drafts = self
                .drafter
                .propose(&anchor, key.as_ref(), pending, self.shape)?;
            drafts.retain(|d| d.first() == Some(&pending));
            let mut batch =
                make_draft_batch(&drafts, self.shape.draft_count, self.shape.draft_len, eos);
            let draft_count = batch.rows.len();
            let drafted = batch.lens.iter().max().map_or(0, |&m| m - 1);
            if batch.is_empty() {
                batch = make_draft_batch(&[vec![pending]], 1, 1, eos);
            }

            let position = generated.len() as u64;
            let verdict = batch_verify(
                self.model,
                &anchor,
                &batch,
                config,
                streams.offset(position),
            )?;
            trace.llm_calls += 1;
            if verdict.accepted.first() != Some(&pending) {
                return Err(Error::OracleMismatch(format!(
                    "verification at output position {position} did not reproduce the decided token {pending}"
                )));
            }

            let mut emitted = 0;
            let mut finished = false;
            for &tok in &verdict.accepted {
                generated.push(tok);
                emitted += 1;
                if tok == eos || generated.len() == config.max_new_tokens {
                    finished = true;
                    break;
                }
            }
            trace.iterations.push(IterationRecord {
                drafted_tokens: drafted,
                accepted_tokens: emitted - 1,
                draft_count,
                wall_ns: iter_started.elapsed().as_nanos() as u64,
            });
            if finished {
                break;
            }

            anchor.extend_from_slice(&verdict.accepted);
            pending = verdict.bonus;
            embedding = verdict.last_embedding;

            if self.check_state {
                let fresh = self.model.forward(&anchor)?;
                let resampled = sample_token(
                    &fresh.distribution,
                    config,
                    &mut streams.at(generated.len() as u64),
                )?;
                if fresh.embedding != embedding || resampled != pending {
                    return Err(Error::OracleMismatch(format!(
                        "carried state diverged from a fresh forward pass after {} tokens",
                        generated.len()
                    )));
                }
            }
        }

        trace.generated = generated.len();
        trace.elapsed_ns = started.elapsed().as_nanos() as u64;
        Ok((generated, trace))
    }
}

pub fn sd_generate(
    model: &dyn LanguageModel,
    drafter: &dyn Drafter,
    pipeline: Option<&PipelineModel>,
    prompt: &[TokenId],
    config: &DecodeConfig,
    shape: DraftShape,
) -> Result<(TokenSeq, DecodeTrace)> {
    SpeculativeDecoder {
        model,
        drafter,
        pipeline,
        shape,
        check_state: false,
    }
    .generate(prompt, config)
}
