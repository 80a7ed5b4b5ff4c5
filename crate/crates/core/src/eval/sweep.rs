//! One-dimensional parameter sweeps written as CSV.

use std::io::Write;
use std::sync::Arc;

use super::bench::{run_bench, BenchSetup};
use super::metrics::MetricsReport;
use crate::corpus::TokenSeq;
use crate::dense::{build_dense_store, mrr_eval, DenseDatastore, IndexParams, IndexRegistry};
use crate::engine::{DenseDrafter, DraftShape, Drafter, NullDrafter, SparseDrafter};
use crate::error::{Error, Result};
use crate::model::{DecodeConfig, LanguageModel};
use crate::pipeline::{fit_pipeline, ContextEmbedding, PipelineModel};
use crate::sparse::SparseIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    DraftLen,
    DraftCount,
    PcaDim,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::DraftLen => "draft_len",
            SweepAxis::DraftCount => "draft_count",
            SweepAxis::PcaDim => "pca_dim",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "draft_len" => Ok(SweepAxis::DraftLen),
            "draft_count" => Ok(SweepAxis::DraftCount),
            "pca_dim" => Ok(SweepAxis::PcaDim),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?} (expected draft_len, draft_count or pca_dim)"
            ))),
        }
    }
}

/// Everything needed to (re)build a dense datastore for a given key size.
pub struct DenseSource<'a> {
    pub corpus: &'a [TokenSeq],
    /// Raw model embeddings the pipeline is fitted on.
    pub fit_sample: &'a [ContextEmbedding],
    pub key_dim: usize,
    pub value_len: usize,
    pub eps_z: f64,
    pub eps_m: f64,
    pub index: String,
    pub index_params: IndexParams,
    pub top_k: usize,
}

impl DenseSource<'_> {
    pub fn build(
        &self,
        model: &dyn LanguageModel,
        key_dim: usize,
        value_len: usize,
    ) -> Result<(PipelineModel, DenseDatastore)> {
        let pipeline = fit_pipeline(self.fit_sample, key_dim, self.eps_z, self.eps_m)?;
        let mut store = build_dense_store(self.corpus, model, &pipeline, value_len)?;
        store.rebuild_index(
            &IndexRegistry::with_builtins(),
            &self.index,
            &self.index_params,
        )?;
        Ok((pipeline, store))
    }
}

pub enum DraftSource<'a> {
    None,
    Sparse(Arc<SparseIndex>),
    Dense(DenseSource<'a>),
}

pub struct SweepInputs<'a> {
    pub model: &'a dyn LanguageModel,
    pub prompts: &'a [TokenSeq],
    pub decode: &'a DecodeConfig,
    /// The shape the swept axis is varied around.
    pub shape: DraftShape,
    pub source: DraftSource<'a>,
    pub repetitions: usize,
    /// Records sampled for the MRR column of a key-size sweep.
    pub mrr_sample: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: usize,
    pub report: MetricsReport,
    /// Retrieval quality of the rebuilt store; key-size sweeps only.
    pub mrr: Option<f64>,
}

pub fn run_sweep(
    inputs: &SweepInputs<'_>,
    axis: SweepAxis,
    values: &[usize],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    if values[0] == 0 || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "sweep values must be positive and strictly increasing",
        ));
    }
    let shape_for = |v: usize| match axis {
        SweepAxis::DraftLen => DraftShape::new(inputs.shape.draft_count, v),
        SweepAxis::DraftCount => DraftShape::new(v, inputs.shape.draft_len),
        SweepAxis::PcaDim => inputs.shape,
    };
    let bench = |drafter: &dyn Drafter, pipeline: Option<&PipelineModel>, v: usize| {
        let setup = BenchSetup {
            model: inputs.model,
            drafter,
            pipeline,
            shape: shape_for(v),
            decode: inputs.decode,
        };
        run_bench(&setup, inputs.prompts, inputs.repetitions).map(|r| r.report)
    };

    let mut rows = Vec::with_capacity(values.len());
    match (&inputs.source, axis) {
        (DraftSource::Dense(src), SweepAxis::PcaDim) => {
            for &l in values {
                let (pipeline, store) = src.build(inputs.model, l, src.value_len)?;
                let mrr = mrr_eval(&store, inputs.mrr_sample, inputs.seed)?;
                let drafter = DenseDrafter {
                    store: Arc::new(store),
                    top_k: src.top_k,
                };
                rows.push(SweepRow {
                    axis_value: l,
                    report: bench(&drafter, Some(&pipeline), l)?,
                    mrr: Some(mrr),
                });
            }
        }
        (_, SweepAxis::PcaDim) => {
            return Err(Error::Config(
                "a key-size sweep needs the dense drafter".into(),
            ));
        }
        (DraftSource::Dense(src), _) => {
            let longest = match axis {
                SweepAxis::DraftLen => values.iter().copied().max().unwrap_or(1),
                _ => inputs.shape.draft_len,
            };
            let (pipeline, store) =
                src.build(inputs.model, src.key_dim, src.value_len.max(longest))?;
            let drafter = DenseDrafter {
                store: Arc::new(store),
                top_k: src.top_k,
            };
            for &v in values {
                rows.push(SweepRow {
                    axis_value: v,
                    report: bench(&drafter, Some(&pipeline), v)?,
                    mrr: None,
                });
            }
        }
        (DraftSource::Sparse(index), _) => {
            let drafter = SparseDrafter {
                index: index.clone(),
            };
            for &v in values {
                rows.push(SweepRow {
                    axis_value: v,
                    report: bench(&drafter, None, v)?,
                    mrr: None,
                });
            }
        }
        (DraftSource::None, _) => {
            for &v in values {
                rows.push(SweepRow {
                    axis_value: v,
                    report: bench(&NullDrafter, None, v)?,
                    mrr: None,
                });
            }
        }
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "axis_value,mar,mean_accepted_len,llm_calls,tps,prompts";

pub fn write_sweep_csv<W: Write>(w: &mut W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.3},{}",
            r.axis_value,
            r.report.mar,
            r.report.mean_accepted_len,
            r.report.llm_calls,
            r.report.tps,
            r.report.prompts
        )?;
    }
    Ok(())
}

/// MRR per key size, the companion table of a key-size sweep.
pub fn write_mrr_csv<W: Write>(w: &mut W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "pca_dim,mrr")?;
    for r in rows {
        if let Some(mrr) = r.mrr {
            writeln!(w, "{},{:.6}", r.axis_value, mrr)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_toy_model, ToyModelSpec};
    use crate::sparse::{build_sparse_index, SparseParams};

    #[test]
    fn sparse_draft_len_sweep_writes_csv() {
        let spec = ToyModelSpec {
            vocab_size: 8,
            embed_dim: 8,
            smoothing: 0.0,
            eos: 0,
            ..ToyModelSpec::default()
        };
        let corpus = vec![vec![1, 2, 3, 4, 5, 6, 7, 0]];
        let model = build_toy_model(spec, &corpus).unwrap();
        let index = build_sparse_index(&corpus, SparseParams::default()).unwrap();
        let prompts = vec![vec![1, 2]];
        let decode = DecodeConfig::greedy(10);
        let inputs = SweepInputs {
            model: &model,
            prompts: &prompts,
            decode: &decode,
            shape: DraftShape::new(2, 2),
            source: DraftSource::Sparse(Arc::new(index)),
            repetitions: 1,
            mrr_sample: 10,
            seed: 0,
        };
        let rows = run_sweep(&inputs, SweepAxis::DraftLen, &[1, 3, 6]).unwrap();
        let calls: Vec<f64> = rows.iter().map(|r| r.report.llm_calls).collect();
        // longer drafts never need more calls on a perfectly predictable corpus
        assert!(calls.windows(2).all(|w| w[0] >= w[1]), "{calls:?}");
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(text.lines().count(), 4);
        assert!(run_sweep(&inputs, SweepAxis::PcaDim, &[2]).is_err());
        assert!(run_sweep(&inputs, SweepAxis::DraftLen, &[]).is_err());
        assert!(run_sweep(&inputs, SweepAxis::DraftLen, &[3, 3]).is_err());
    }
}
