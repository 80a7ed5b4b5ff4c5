use std::time::Instant;

use super::metrics::{compute_metrics, MetricsReport};
use crate::corpus::TokenSeq;
use crate::engine::{DecodeTrace, DraftShape, Drafter, SpeculativeDecoder};
use crate::error::{Error, Result};
use crate::model::{DecodeConfig, LanguageModel};
use crate::pipeline::PipelineModel;

pub const DEFAULT_REPETITIONS: usize = 3;

#[derive(Clone, Copy)]
pub struct BenchSetup<'a> {
    pub model: &'a dyn LanguageModel,
    pub drafter: &'a dyn Drafter,
    pub pipeline: Option<&'a PipelineModel>,
    pub shape: DraftShape,
    pub decode: &'a DecodeConfig,
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub report: MetricsReport,
    pub traces: Vec<DecodeTrace>,
    pub outputs: Vec<TokenSeq>,
}

/// Decode config for the `i`-th prompt: its own seed, everything else shared.
pub fn prompt_config(base: &DecodeConfig, i: usize) -> DecodeConfig {
    DecodeConfig {
        seed: base.seed.wrapping_add(i as u64),
        ..base.clone()
    }
}

/// Decode every prompt `repetitions` times in sequence. Acceptance numbers
/// come from the first pass; throughput is the median over passes.
pub fn run_bench(
    setup: &BenchSetup<'_>,
    prompts: &[TokenSeq],
    repetitions: usize,
) -> Result<BenchRun> {
    if prompts.is_empty() {
        return Err(Error::invalid("no prompts to benchmark"));
    }
    let decoder = SpeculativeDecoder {
        model: setup.model,
        drafter: setup.drafter,
        pipeline: setup.pipeline,
        shape: setup.shape,
        check_state: false,
    };
    let mut walls = Vec::with_capacity(repetitions.max(1));
    let mut traces = Vec::new();
    let mut outputs = Vec::new();
    for rep in 0..repetitions.max(1) {
        let started = Instant::now();
        for (i, prompt) in prompts.iter().enumerate() {
            let (out, trace) = decoder.generate(prompt, &prompt_config(setup.decode, i))?;
            if rep == 0 {
                outputs.push(out);
                traces.push(trace);
            }
        }
        walls.push(started.elapsed().as_nanos() as u64);
    }
    walls.sort_unstable();
    let median = walls[walls.len() / 2];
    let report = compute_metrics(&traces, median)?;
    Ok(BenchRun {
        report,
        traces,
        outputs,
    })
}
