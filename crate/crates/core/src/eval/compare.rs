use serde::Serialize;

use super::bench::{run_bench, BenchSetup};
use super::metrics::{prompt_accepted_len, prompt_mar, MetricsReport};
use crate::corpus::TokenSeq;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptPair {
    pub prompt: usize,
    pub dense_mar: f64,
    pub sparse_mar: f64,
    pub dense_accepted_len: f64,
    pub sparse_accepted_len: f64,
    pub dense_llm_calls: usize,
    pub sparse_llm_calls: usize,
}

/// Dense against sparse drafting on the same prompts and draft budget.
/// Deltas are relative to the sparse value: `(dense - sparse) / sparse`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedReport {
    pub dense: MetricsReport,
    pub sparse: MetricsReport,
    pub delta_mar: f64,
    pub delta_accepted_len: f64,
    pub delta_llm_calls: f64,
    pub delta_tps: f64,
    /// Prompts where dense drafting needed fewer calls, more, or the same.
    pub dense_fewer_calls: usize,
    pub dense_more_calls: usize,
    pub per_prompt: Vec<PromptPair>,
}

fn relative(dense: f64, sparse: f64) -> f64 {
    if sparse == 0.0 {
        if dense == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (dense - sparse) / sparse
    }
}

pub fn compare_retrievers(
    dense: &BenchSetup<'_>,
    sparse: &BenchSetup<'_>,
    prompts: &[TokenSeq],
    repetitions: usize,
) -> Result<PairedReport> {
    let budget = |s: &BenchSetup<'_>| s.shape.draft_count * s.shape.draft_len;
    if budget(dense) != budget(sparse) {
        return Err(Error::invalid(format!(
            "draft budgets differ: {}x{} against {}x{}",
            dense.shape.draft_count,
            dense.shape.draft_len,
            sparse.shape.draft_count,
            sparse.shape.draft_len
        )));
    }
    if dense.decode != sparse.decode {
        return Err(Error::invalid(
            "both sides must use the same decode settings",
        ));
    }
    let d = run_bench(dense, prompts, repetitions)?;
    let s = run_bench(sparse, prompts, repetitions)?;

    let per_prompt: Vec<PromptPair> = d
        .traces
        .iter()
        .zip(&s.traces)
        .enumerate()
        .map(|(i, (dt, st))| PromptPair {
            prompt: i,
            dense_mar: prompt_mar(dt),
            sparse_mar: prompt_mar(st),
            dense_accepted_len: prompt_accepted_len(dt),
            sparse_accepted_len: prompt_accepted_len(st),
            dense_llm_calls: dt.llm_calls,
            sparse_llm_calls: st.llm_calls,
        })
        .collect();
    Ok(PairedReport {
        delta_mar: relative(d.report.mar, s.report.mar),
        delta_accepted_len: relative(d.report.mean_accepted_len, s.report.mean_accepted_len),
        delta_llm_calls: relative(d.report.llm_calls, s.report.llm_calls),
        delta_tps: relative(d.report.tps, s.report.tps),
        dense_fewer_calls: per_prompt
            .iter()
            .filter(|p| p.dense_llm_calls < p.sparse_llm_calls)
            .count(),
        dense_more_calls: per_prompt
            .iter()
            .filter(|p| p.dense_llm_calls > p.sparse_llm_calls)
            .count(),
        dense: d.report,
        sparse: s.report,
        per_prompt,
    })
}
