use serde::Serialize;

use crate::engine::DecodeTrace;
use crate::error::{Error, Result};

/// Aggregates over a prompt set. Rates are averaged per prompt first, so a
/// long generation does not outweigh a short one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Mean over prompts of accepted / drafted tokens.
    pub mar: f64,
    /// Mean over prompts of the mean accepted tokens per iteration.
    pub mean_accepted_len: f64,
    /// Mean model calls per prompt.
    pub llm_calls: f64,
    /// Generated tokens per wall-clock second.
    pub tps: f64,
    pub prompts: usize,
    pub generated: usize,
}

/// Accepted over drafted tokens for one decode; 0 if nothing was drafted.
pub fn prompt_mar(trace: &DecodeTrace) -> f64 {
    let drafted = trace.total_drafted();
    if drafted == 0 {
        0.0
    } else {
        trace.total_accepted() as f64 / drafted as f64
    }
}

pub fn prompt_accepted_len(trace: &DecodeTrace) -> f64 {
    if trace.iterations.is_empty() {
        0.0
    } else {
        trace.total_accepted() as f64 / trace.iterations.len() as f64
    }
}

pub fn compute_metrics(traces: &[DecodeTrace], wall_ns: u64) -> Result<MetricsReport> {
    if traces.is_empty() {
        return Err(Error::invalid("no traces to aggregate"));
    }
    let n = traces.len() as f64;
    let generated: usize = traces.iter().map(|t| t.generated).sum();
    let secs = wall_ns as f64 / 1e9;
    Ok(MetricsReport {
        mar: traces.iter().map(prompt_mar).sum::<f64>() / n,
        mean_accepted_len: traces.iter().map(prompt_accepted_len).sum::<f64>() / n,
        llm_calls: traces.iter().map(|t| t.llm_calls as f64).sum::<f64>() / n,
        tps: if secs > 0.0 {
            generated as f64 / secs
        } else {
            0.0
        },
        prompts: traces.len(),
        generated,
    })
}
