//! Subcommand bodies. Each one rebuilds the toy target model from the
//! configured corpus, loads the artifacts it needs and writes its results
//! under the output directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde::Serialize;

use super::config::{RunConfig, StoreMode};
use super::Command;
use crate::corpus::{check_vocab, format_seq, read_corpus, write_corpus, TokenSeq};
use crate::dense::{mrr_eval, DenseDatastore, IndexRegistry};
use crate::engine::{
    DecodeTrace, DraftShape, Drafter, DrafterRegistry, DrafterResources, SpeculativeDecoder,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare_retrievers, prompt_config, run_bench, run_sweep, write_mrr_csv, write_sweep_csv,
    BenchSetup, DenseSource, DraftSource, SweepAxis, SweepInputs,
};
use crate::model::{
    autoregressive_generate_with, build_toy_model, DecodeConfig, DecodeMode, LanguageModel,
    PositionalRng, RngSource, ToyModel,
};
use crate::pipeline::{collect_fit_sample, fit_pipeline, PipelineModel};
use crate::sparse::{build_sparse_index, SparseIndex};
use crate::synth::{model_continuations, random_corpus, substitute};

pub fn run(command: &Command, cfg: &RunConfig) -> Result<()> {
    check_arguments(command, cfg)?;
    let out = cfg.out_dir();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.resolved"), cfg.snapshot())?;
    match command {
        Command::Synth {
            output,
            count,
            min_len,
            max_len,
            alphabet,
            perturb,
            rate,
        } => {
            if *min_len > *max_len || *alphabet == 0 {
                return Err(Error::Config(
                    "need min-len <= max-len and a positive alphabet".into(),
                ));
            }
            let spec = cfg.model_spec()?;
            if *alphabet as usize >= spec.vocab_size {
                return Err(Error::Config(format!(
                    "alphabet {alphabet} does not fit a vocabulary of {}",
                    spec.vocab_size
                )));
            }
            let corpus = match perturb {
                Some(src) => substitute(&read_corpus(src)?, *rate, 1..alphabet + 1, cfg.seed()?)?,
                None => random_corpus(
                    *count,
                    *min_len..max_len + 1,
                    1..alphabet + 1,
                    Some(spec.eos),
                    cfg.seed()?,
                )?,
            };
            if let Some(parent) = output.parent() {
                fs::create_dir_all(parent)?;
            }
            write_corpus(output, &corpus)?;
            println!("{} sequences written to {}", corpus.len(), output.display());
            Ok(())
        }
        Command::FitPipeline => fit_pipeline_cmd(cfg),
        Command::BuildStore => build_store_cmd(cfg),
        Command::Generate { oracle_check, .. } => generate_cmd(cfg, *oracle_check),
        Command::Bench { reps } => bench_cmd(cfg, *reps),
        Command::Compare { reps } => compare_cmd(cfg, *reps),
        Command::Sweep { reps } => sweep_cmd(cfg, *reps),
        Command::Mrr { index } => mrr_cmd(cfg, index.as_deref()),
    }
}

/// Argument-level checks that must fail before any artifact is touched.
fn check_arguments(command: &Command, cfg: &RunConfig) -> Result<()> {
    let spec = cfg.model_spec()?;
    let l = cfg.key_dim()?;
    if l == 0 || l > spec.embed_dim {
        return Err(Error::Config(format!(
            "pipeline.l = {l} must be between 1 and the embedding size {}",
            spec.embed_dim
        )));
    }
    match command {
        Command::Mrr { index } => {
            let kind = index.clone().unwrap_or_else(|| cfg.index_kind());
            check_index_name(&kind)?;
            let path = cfg.dense_path();
            if has_magic(&path, b"DRSS") {
                return Err(Error::Config(format!(
                    "{} is a sparse index; MRR needs a dense datastore",
                    path.display()
                )));
            }
        }
        Command::Sweep { .. } => {
            let (axis, _) = cfg.sweep()?;
            if axis == SweepAxis::PcaDim && cfg.drafter() != "dense" {
                return Err(Error::Config(
                    "a pca_dim sweep needs drafter = dense".into(),
                ));
            }
        }
        Command::BuildStore if cfg.store_kind()? == "dense" => {
            check_index_name(&cfg.index_kind())?;
        }
        _ => {}
    }
    if matches!(
        command,
        Command::Generate { .. } | Command::Bench { .. } | Command::Sweep { .. }
    ) {
        let names = DrafterRegistry::with_builtins().names();
        if !names.contains(&cfg.drafter().as_str()) {
            return Err(Error::Config(format!(
                "unknown drafter {:?} (available: {})",
                cfg.drafter(),
                names.join(", ")
            )));
        }
    }
    Ok(())
}

fn check_index_name(name: &str) -> Result<()> {
    let names = IndexRegistry::with_builtins().names();
    if names.contains(&name) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "unknown index {name:?} (available: {})",
            names.join(", ")
        )))
    }
}

fn has_magic(path: &Path, magic: &[u8; 4]) -> bool {
    fs::read(path).is_ok_and(|b| b.starts_with(magic))
}

fn load_model(cfg: &RunConfig) -> Result<ToyModel> {
    let spec = cfg.model_spec()?;
    let corpus = read_corpus(&cfg.corpus_path()?)?;
    check_vocab(&corpus, spec.vocab_size)?;
    info!("training toy model on {} sequences", corpus.len());
    build_toy_model(spec, &corpus)
}

fn load_prompts(cfg: &RunConfig, model: &ToyModel) -> Result<Vec<TokenSeq>> {
    let prompts = read_corpus(&cfg.prompts_path()?)?;
    if prompts.is_empty() {
        return Err(Error::invalid("prompt file is empty"));
    }
    check_vocab(&prompts, model.vocab_size())?;
    Ok(prompts)
}

/// The corpus a datastore indexes: an external corpus, or the model's own
/// continuations of the in-domain prompts.
fn datastore_corpus(cfg: &RunConfig, model: &ToyModel) -> Result<Vec<TokenSeq>> {
    match cfg.store_mode()? {
        StoreMode::OutOfDomain => {
            let corpus = read_corpus(&cfg.store_corpus_path()?)?;
            check_vocab(&corpus, model.vocab_size())?;
            Ok(corpus)
        }
        StoreMode::InDomain => {
            let prompts = read_corpus(&cfg.id_prompts_path()?)?;
            check_vocab(&prompts, model.vocab_size())?;
            let repeated: Vec<TokenSeq> = (0..cfg.id_samples()?)
                .flat_map(|_| prompts.iter().cloned())
                .collect();
            let decode = cfg.decode()?;
            let corpus = model_continuations(model, &repeated, &decode)?;
            let path = cfg.out_dir().join("id_corpus.txt");
            write_corpus(&path, &corpus)?;
            info!(
                "in-domain corpus of {} sequences written to {}",
                corpus.len(),
                path.display()
            );
            Ok(corpus)
        }
    }
}

fn ivf_path(cfg: &RunConfig) -> PathBuf {
    cfg.dense_path().with_extension("ivf")
}

fn load_pipeline(cfg: &RunConfig, model: &ToyModel) -> Result<PipelineModel> {
    let pipeline = PipelineModel::load(&cfg.pipeline_path())?;
    if pipeline.embed_dim() != model.embed_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.embed_dim(),
            actual: pipeline.embed_dim(),
        });
    }
    Ok(pipeline)
}

fn load_dense(cfg: &RunConfig, index: &str, pipeline: &PipelineModel) -> Result<DenseDatastore> {
    let mut store = DenseDatastore::load(&cfg.dense_path())?;
    if store.key_dim() != pipeline.key_dim() {
        return Err(Error::DimensionMismatch {
            expected: pipeline.key_dim(),
            actual: store.key_dim(),
        });
    }
    let saved = ivf_path(cfg);
    if index == "ivf" && saved.exists() {
        store.load_ivf_index(&saved)?;
    } else {
        store.rebuild_index(&IndexRegistry::with_builtins(), index, &cfg.index_params()?)?;
    }
    Ok(store)
}

struct Drafting {
    drafter: Arc<dyn Drafter>,
    pipeline: Option<PipelineModel>,
}

fn load_drafter(cfg: &RunConfig, model: &ToyModel, name: &str) -> Result<Drafting> {
    let mut resources = DrafterResources {
        top_k: cfg.top_k()?,
        ..DrafterResources::default()
    };
    let mut pipeline = None;
    match name {
        "dense" => {
            let p = load_pipeline(cfg, model)?;
            resources.dense = Some(Arc::new(load_dense(cfg, &cfg.index_kind(), &p)?));
            pipeline = Some(p);
        }
        "sparse" => resources.sparse = Some(Arc::new(SparseIndex::load(&cfg.sparse_path())?)),
        _ => {}
    }
    let drafter = DrafterRegistry::with_builtins().build(name, &resources)?;
    Ok(Drafting { drafter, pipeline })
}

fn fit_pipeline_cmd(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let corpus = datastore_corpus(cfg, &model)?;
    let sample = collect_fit_sample(&model, &corpus, cfg.fit_sample()?, cfg.seed()?)?;
    info!("fitting on {} embeddings", sample.len());
    let pipeline = fit_pipeline(&sample, cfg.key_dim()?, cfg.eps_z()?, cfg.eps_m()?)?;
    let path = cfg.pipeline_path();
    pipeline.save(&path)?;

    println!("component  explained  cumulative");
    let mut cumulative = 0.0f64;
    for (i, &r) in pipeline.pca.explained_variance_ratio.iter().enumerate() {
        cumulative += r as f64;
        println!("{:>9}  {:>9.6}  {:>10.6}", i + 1, r, cumulative);
    }
    println!("fit sample: {}", sample.len());
    println!("pipeline: {} ({})", path.display(), pipeline.fingerprint());
    Ok(())
}

fn build_store_cmd(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let corpus = datastore_corpus(cfg, &model)?;
    if cfg.store_kind()? == "sparse" {
        let index = build_sparse_index(&corpus, cfg.sparse_params()?)?;
        let path = cfg.sparse_path();
        index.save(&path)?;
        println!("sequences: {}", corpus.len());
        println!("tokens: {}", index.token_count());
        println!("sparse index: {}", path.display());
        return Ok(());
    }
    let pipeline = load_pipeline(cfg, &model)?;
    let mut store = crate::dense::build_dense_store(&corpus, &model, &pipeline, cfg.value_len()?)?;
    store.rebuild_index(
        &IndexRegistry::with_builtins(),
        &cfg.index_kind(),
        &cfg.index_params()?,
    )?;
    let path = cfg.dense_path();
    store.save(&path)?;
    let index_note = if store.save_index(&ivf_path(cfg))? {
        format!(", index {}", ivf_path(cfg).display())
    } else {
        String::new()
    };
    let expected: usize = corpus.iter().map(|s| s.len().saturating_sub(1)).sum();
    println!("sequences: {}", corpus.len());
    println!("records: {} (expected {expected})", store.len());
    println!(
        "key dim: {}, value len: {}",
        store.key_dim(),
        store.value_len()
    );
    println!("dense store: {}{index_note}", path.display());
    Ok(())
}

fn write_traces(path: &Path, traces: &[DecodeTrace]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for t in traces {
        t.write_jsonl(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

fn generate_cmd(cfg: &RunConfig, oracle_check: bool) -> Result<()> {
    let model = load_model(cfg)?;
    let prompts = load_prompts(cfg, &model)?;
    let drafting = load_drafter(cfg, &model, &cfg.drafter())?;
    let decode = cfg.decode()?;
    let decoder = SpeculativeDecoder {
        model: &model,
        drafter: drafting.drafter.as_ref(),
        pipeline: drafting.pipeline.as_ref(),
        shape: cfg.shape()?,
        check_state: cfg.check_state()?,
    };
    let mut outputs = Vec::with_capacity(prompts.len());
    let mut traces = Vec::with_capacity(prompts.len());
    for (i, prompt) in prompts.iter().enumerate() {
        let pcfg = prompt_config(&decode, i);
        let (out, trace) = decoder.generate(prompt, &pcfg)?;
        trace.check_invariants()?;
        if oracle_check {
            // plain decoding with the same positional streams
            let reference = autoregressive_generate_with(
                &model,
                prompt,
                &pcfg,
                RngSource::Positional(PositionalRng::new(pcfg.seed)),
            )?;
            if reference != out {
                return Err(Error::OracleMismatch(format!(
                    "prompt {i}: speculative output differs from plain decoding ({} mode)",
                    decode.mode.as_str()
                )));
            }
        }
        outputs.push(out);
        traces.push(trace);
    }
    let out_dir = cfg.out_dir();
    write_corpus(&out_dir.join("completions.txt"), &outputs)?;
    write_traces(&out_dir.join("trace.jsonl"), &traces)?;
    let generated: usize = traces.iter().map(|t| t.generated).sum();
    let calls: usize = traces.iter().map(|t| t.llm_calls).sum();
    println!(
        "prompts: {}, generated: {generated}, model calls: {calls}",
        prompts.len()
    );
    if oracle_check {
        let how = match decode.mode {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Nucleus => "nucleus, shared positional streams",
        };
        println!("oracle check passed ({how})");
    }
    for (p, o) in prompts.iter().zip(&outputs).take(3) {
        info!("{} => {}", format_seq(p), format_seq(o));
    }
    Ok(())
}

fn bench_cmd(cfg: &RunConfig, reps: usize) -> Result<()> {
    let model = load_model(cfg)?;
    let prompts = load_prompts(cfg, &model)?;
    let drafting = load_drafter(cfg, &model, &cfg.drafter())?;
    let decode = cfg.decode()?;
    let setup = BenchSetup {
        model: &model,
        drafter: drafting.drafter.as_ref(),
        pipeline: drafting.pipeline.as_ref(),
        shape: cfg.shape()?,
        decode: &decode,
    };
    let run = run_bench(&setup, &prompts, reps)?;
    for t in &run.traces {
        t.check_invariants()?;
    }
    let out_dir = cfg.out_dir();
    write_json(&out_dir.join("bench.json"), &run.report)?;
    write_traces(&out_dir.join("bench_traces.jsonl"), &run.traces)?;
    let r = &run.report;
    println!(
        "drafter: {}, shape: {}x{}",
        cfg.drafter(),
        setup.shape.draft_count,
        setup.shape.draft_len
    );
    println!("mar: {:.4}", r.mar);
    println!("mean accepted length: {:.4}", r.mean_accepted_len);
    println!("model calls per prompt: {:.2}", r.llm_calls);
    println!("tokens/s: {:.1}", r.tps);
    Ok(())
}

fn compare_cmd(cfg: &RunConfig, reps: usize) -> Result<()> {
    let model = load_model(cfg)?;
    let prompts = load_prompts(cfg, &model)?;
    let dense = load_drafter(cfg, &model, "dense")?;
    let sparse = load_drafter(cfg, &model, "sparse")?;
    let decode = cfg.decode()?;
    let shape = cfg.shape()?;
    fn setup<'a>(
        model: &'a ToyModel,
        d: &'a Drafting,
        shape: DraftShape,
        decode: &'a DecodeConfig,
    ) -> BenchSetup<'a> {
        BenchSetup {
            model,
            drafter: d.drafter.as_ref(),
            pipeline: d.pipeline.as_ref(),
            shape,
            decode,
        }
    }
    let report = compare_retrievers(
        &setup(&model, &dense, shape, &decode),
        &setup(&model, &sparse, shape, &decode),
        &prompts,
        reps,
    )?;
    write_json(&cfg.out_dir().join("compare.json"), &report)?;
    println!("             dense     sparse    delta");
    println!(
        "mar       {:>8.4}  {:>8.4}  {:>+7.1}%",
        report.dense.mar,
        report.sparse.mar,
        100.0 * report.delta_mar
    );
    println!(
        "acc len   {:>8.4}  {:>8.4}  {:>+7.1}%",
        report.dense.mean_accepted_len,
        report.sparse.mean_accepted_len,
        100.0 * report.delta_accepted_len
    );
    println!(
        "calls     {:>8.2}  {:>8.2}  {:>+7.1}%",
        report.dense.llm_calls,
        report.sparse.llm_calls,
        100.0 * report.delta_llm_calls
    );
    println!(
        "tok/s     {:>8.1}  {:>8.1}  {:>+7.1}%",
        report.dense.tps,
        report.sparse.tps,
        100.0 * report.delta_tps
    );
    println!(
        "dense needed fewer calls on {} prompts, more on {}",
        report.dense_fewer_calls, report.dense_more_calls
    );
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig, reps: usize) -> Result<()> {
    let model = load_model(cfg)?;
    let prompts = load_prompts(cfg, &model)?;
    let (axis, values) = cfg.sweep()?;
    let decode = cfg.decode()?;
    let seed = cfg.seed()?;

    // owned data the dense source borrows from
    let mut corpus = Vec::new();
    let mut fit_sample = Vec::new();
    let drafter = cfg.drafter();
    if drafter == "dense" {
        corpus = datastore_corpus(cfg, &model)?;
        fit_sample = collect_fit_sample(&model, &corpus, cfg.fit_sample()?, seed)?;
    }
    let source = match drafter.as_str() {
        "dense" => DraftSource::Dense(DenseSource {
            corpus: &corpus,
            fit_sample: &fit_sample,
            key_dim: cfg.key_dim()?,
            value_len: cfg.value_len()?,
            eps_z: cfg.eps_z()?,
            eps_m: cfg.eps_m()?,
            index: cfg.index_kind(),
            index_params: cfg.index_params()?,
            top_k: cfg.top_k()?,
        }),
        "sparse" => DraftSource::Sparse(Arc::new(SparseIndex::load(&cfg.sparse_path())?)),
        _ => DraftSource::None,
    };
    let inputs = SweepInputs {
        model: &model,
        prompts: &prompts,
        decode: &decode,
        shape: cfg.shape()?,
        source,
        repetitions: reps,
        mrr_sample: cfg.mrr_sample()?,
        seed,
    };
    let rows = run_sweep(&inputs, axis, &values)?;
    let out_dir = cfg.out_dir();
    let csv = out_dir.join(format!("sweep_{}.csv", axis.as_str()));
    let mut w = BufWriter::new(fs::File::create(&csv)?);
    write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    if axis == SweepAxis::PcaDim {
        let mut w = BufWriter::new(fs::File::create(out_dir.join("mrr_pca_dim.csv"))?);
        write_mrr_csv(&mut w, &rows)?;
        w.flush()?;
    }
    println!(
        "{:>10}  {:>8}  {:>8}  {:>8}  {:>10}",
        axis.as_str(),
        "mar",
        "acc_len",
        "calls",
        "tok/s"
    );
    for r in &rows {
        println!(
            "{:>10}  {:>8.4}  {:>8.4}  {:>8.2}  {:>10.1}{}",
            r.axis_value,
            r.report.mar,
            r.report.mean_accepted_len,
            r.report.llm_calls,
            r.report.tps,
            r.mrr.map(|m| format!("  mrr {m:.4}")).unwrap_or_default()
        );
    }
    println!("written to {}", csv.display());
    Ok(())
}

fn mrr_cmd(cfg: &RunConfig, index: Option<&str>) -> Result<()> {
    let kind = index
        .map(str::to_string)
        .unwrap_or_else(|| cfg.index_kind());
    let model = load_model(cfg)?;
    let pipeline = load_pipeline(cfg, &model)?;
    let store = load_dense(cfg, &kind, &pipeline)?;
    let mut sample = cfg.mrr_sample()?;
    if sample > store.len() {
        warn!(
            "MRR sample {sample} exceeds the {} records; using all of them",
            store.len()
        );
        sample = store.len();
    }
    let mrr = mrr_eval(&store, sample, cfg.seed()?)?;
    #[derive(Serialize)]
    struct MrrReport<'a> {
        index: &'a str,
        records: usize,
        sample: usize,
        mrr: f64,
    }
    write_json(
        &cfg.out_dir().join("mrr.json"),
        &MrrReport {
            index: &kind,
            records: store.len(),
            sample,
            mrr,
        },
    )?;
    println!("index: {kind}, records: {}, sample: {sample}", store.len());
    println!("mrr: {mrr:.6}");
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("cannot serialise report: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
