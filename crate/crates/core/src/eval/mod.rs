//! Acceptance, call-count and throughput measurement.

mod bench;
mod compare;
mod metrics;
mod sweep;

pub use bench::{prompt_config, run_bench, BenchRun, BenchSetup, DEFAULT_REPETITIONS};
pub use compare::{compare_retrievers, PairedReport, PromptPair};
pub use metrics::{compute_metrics, prompt_accepted_len, prompt_mar, MetricsReport};
pub use sweep::{
    run_sweep, write_mrr_csv, write_sweep_csv, DenseSource, DraftSource, SweepAxis, SweepInputs,
    SweepRow, SWEEP_CSV_HEADER,
};
