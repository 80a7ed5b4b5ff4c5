//! `key = value` run configuration.
//!
//! Every key has a default, so an empty file is a valid config. Unknown keys
//! are rejected. Relative paths resolve against the directory of the config
//! file. [`RunConfig::snapshot`] writes the fully resolved settings in the
//! same format, so any run can be repeated from its snapshot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dense::IndexParams;
use crate::engine::DraftShape;
use crate::error::{Error, Result};
use crate::eval::SweepAxis;
use crate::model::{DecodeConfig, DecodeMode, ToyModelSpec};
use crate::sparse::SparseParams;

/// Known keys and their defaults. An empty default means "unset".
const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("out", "out"),
    ("corpus", ""),
    ("store_corpus", ""),
    ("prompts", ""),
    ("model.vocab_size", "64"),
    ("model.order", "3"),
    ("model.embed_dim", "256"),
    ("model.seed", "0"),
    ("model.eos", "0"),
    ("model.smoothing", "1"),
    ("model.recency", "0.7"),
    ("pipeline.fit_sample", "50000"),
    ("pipeline.l", "64"),
    ("pipeline.eps_z", "1e-5"),
    ("pipeline.eps_m", "1e-12"),
    ("pipeline.path", ""),
    ("store.kind", "dense"),
    ("store.mode", "ood"),
    ("store.value_len", "20"),
    ("store.index", "exact"),
    ("store.ivf_lists", "auto"),
    ("store.ivf_iters", "25"),
    ("store.ivf_nprobe", "8"),
    ("store.top_k", "10"),
    ("store.id_prompts", ""),
    ("store.id_samples", "1"),
    ("dense.path", ""),
    ("sparse.path", ""),
    ("sparse.max_suffix", "16"),
    ("drafter", "dense"),
    ("shape.drafts", "3"),
    ("shape.len", "20"),
    ("decode.mode", "greedy"),
    ("decode.temperature", "0.7"),
    ("decode.top_p", "0.95"),
    ("decode.max_new_tokens", "128"),
    ("decode.seed", ""),
    ("decode.check_state", "false"),
    ("sweep.axis", "draft_len"),
    ("sweep.values", "2,5,10,20"),
    ("mrr.sample", "1000"),
];

const PATH_KEYS: &[&str] = &[
    "out",
    "corpus",
    "store_corpus",
    "prompts",
    "pipeline.path",
    "store.id_prompts",
    "dense.path",
    "sparse.path",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreMode {
    /// Index a corpus from elsewhere.
    OutOfDomain,
    /// Index the target model's own continuations of a prompt set.
    InDomain,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key} = {raw:?} is not a valid value")))
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Parse config text; relative paths are taken relative to `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    i + 1
                ))
            })?;
            cfg.set_in(key.trim(), value.trim(), Some(base_dir))
                .map_err(|e| match e {
                    Error::Config(msg) => Error::Config(format!("line {}: {msg}", i + 1)),
                    other => other,
                })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Override a single key; relative paths stay relative to the working directory.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_in(key, value, None)
    }

    fn set_in(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let (canonical, _) = KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
        let value = match base {
            Some(dir) if PATH_KEYS.contains(canonical) && !value.is_empty() => {
                let p = Path::new(value);
                if p.is_absolute() {
                    value.to_string()
                } else {
                    dir.join(p).to_string_lossy().into_owned()
                }
            }
            _ => value.to_string(),
        };
        self.values.insert(canonical, value);
        Ok(())
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        parse_value(key, self.raw(key))
    }

    fn opt_path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.opt_path(key)
            .ok_or_else(|| Error::Config(format!("{key} must be set")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out"))
    }

    pub fn corpus_path(&self) -> Result<PathBuf> {
        self.required_path("corpus")
    }

    pub fn store_corpus_path(&self) -> Result<PathBuf> {
        match self.opt_path("store_corpus") {
            Some(p) => Ok(p),
            None => self.corpus_path(),
        }
    }

    pub fn prompts_path(&self) -> Result<PathBuf> {
        self.required_path("prompts")
    }

    pub fn id_prompts_path(&self) -> Result<PathBuf> {
        match self.opt_path("store.id_prompts") {
            Some(p) => Ok(p),
            None => self.prompts_path(),
        }
    }

    pub fn pipeline_path(&self) -> PathBuf {
        self.opt_path("pipeline.path")
            .unwrap_or_else(|| self.out_dir().join("pipeline.drsp"))
    }

    pub fn dense_path(&self) -> PathBuf {
        self.opt_path("dense.path")
            .unwrap_or_else(|| self.out_dir().join("store.drsd"))
    }

    pub fn sparse_path(&self) -> PathBuf {
        self.opt_path("sparse.path")
            .unwrap_or_else(|| self.out_dir().join("store.drss"))
    }

    pub fn model_spec(&self) -> Result<ToyModelSpec> {
        let spec = ToyModelSpec {
            vocab_size: self.get("model.vocab_size")?,
            order: self.get("model.order")?,
            embed_dim: self.get("model.embed_dim")?,
            seed: self.get("model.seed")?,
            eos: self.get("model.eos")?,
            smoothing: self.get("model.smoothing")?,
            recency: self.get("model.recency")?,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn fit_sample(&self) -> Result<usize> {
        self.get("pipeline.fit_sample")
    }

    pub fn key_dim(&self) -> Result<usize> {
        self.get("pipeline.l")
    }

    pub fn eps_z(&self) -> Result<f64> {
        self.get("pipeline.eps_z")
    }

    pub fn eps_m(&self) -> Result<f64> {
        self.get("pipeline.eps_m")
    }

    pub fn store_kind(&self) -> Result<String> {
        let kind = self.raw("store.kind").to_string();
        match kind.as_str() {
            "dense" | "sparse" => Ok(kind),
            other => Err(Error::Config(format!(
                "store.kind = {other:?} (expected dense or sparse)"
            ))),
        }
    }

    pub fn store_mode(&self) -> Result<StoreMode> {
        match self.raw("store.mode") {
            "ood" => Ok(StoreMode::OutOfDomain),
            "id" => Ok(StoreMode::InDomain),
            other => Err(Error::Config(format!(
                "store.mode = {other:?} (expected ood or id)"
            ))),
        }
    }

    pub fn value_len(&self) -> Result<usize> {
        self.get("store.value_len")
    }

    pub fn index_kind(&self) -> String {
        self.raw("store.index").to_string()
    }

    pub fn index_params(&self) -> Result<IndexParams> {
        let lists = match self.raw("store.ivf_lists") {
            "auto" | "" => None,
            raw => Some(parse_value("store.ivf_lists", raw)?),
        };
        Ok(IndexParams {
            ivf_lists: lists,
            ivf_iters: self.get("store.ivf_iters")?,
            ivf_nprobe: self.get("store.ivf_nprobe")?,
            seed: self.seed()?,
        })
    }

    pub fn top_k(&self) -> Result<usize> {
        self.get("store.top_k")
    }

    pub fn id_samples(&self) -> Result<usize> {
        self.get("store.id_samples")
    }

    pub fn sparse_params(&self) -> Result<SparseParams> {
        let shape = self.shape()?;
        Ok(SparseParams {
            max_suffix: self.get("sparse.max_suffix")?,
            draft_count: shape.draft_count,
            draft_len: shape.draft_len,
        })
    }

    pub fn drafter(&self) -> String {
        self.raw("drafter").to_string()
    }

    pub fn shape(&self) -> Result<DraftShape> {
        let shape = DraftShape::new(self.get("shape.drafts")?, self.get("shape.len")?);
        shape.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(shape)
    }

    pub fn decode(&self) -> Result<DecodeConfig> {
        let seed = match self.raw("decode.seed") {
            "" => self.seed()?,
            raw => parse_value("decode.seed", raw)?,
        };
        let cfg = DecodeConfig {
            mode: DecodeMode::from_str(self.raw("decode.mode"))?,
            temperature: self.get("decode.temperature")?,
            top_p: self.get("decode.top_p")?,
            max_new_tokens: self.get("decode.max_new_tokens")?,
            seed,
        };
        // sampling settings are checked even when greedy decoding ignores them
        let strict = DecodeConfig {
            mode: DecodeMode::Nucleus,
            ..cfg.clone()
        };
        strict
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn check_state(&self) -> Result<bool> {
        self.get("decode.check_state")
    }

    pub fn sweep(&self) -> Result<(SweepAxis, Vec<usize>)> {
        let axis = SweepAxis::from_str(self.raw("sweep.axis"))?;
        let values = self
            .raw("sweep.values")
            .split(',')
            .map(|v| parse_value("sweep.values", v))
            .collect::<Result<Vec<usize>>>()?;
        if values.is_empty() || values[0] == 0 || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "sweep.values must be positive and strictly increasing".into(),
            ));
        }
        Ok((axis, values))
    }

    pub fn mrr_sample(&self) -> Result<usize> {
        self.get("mrr.sample")
    }

    /// Make every relative path absolute against the working directory, so a
    /// snapshot stays valid wherever it is loaded from. Artifact paths
    /// derived from `out` are pinned as well.
    pub fn absolutize(&mut self) -> Result<()> {
        let derived = [
            ("pipeline.path", self.pipeline_path()),
            ("dense.path", self.dense_path()),
            ("sparse.path", self.sparse_path()),
        ];
        for (key, path) in derived {
            self.values.insert(key, path.to_string_lossy().into_owned());
        }
        for key in PATH_KEYS {
            let raw = self.raw(key);
            if !raw.is_empty() && Path::new(raw).is_relative() {
                let abs = std::path::absolute(raw)?;
                self.values.insert(key, abs.to_string_lossy().into_owned());
            }
        }
        Ok(())
    }

    /// Parse every typed key once so bad values fail before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.model_spec()?;
        self.fit_sample()?;
        self.key_dim()?;
        self.eps_z()?;
        self.eps_m()?;
        self.store_kind()?;
        self.store_mode()?;
        self.value_len()?;
        self.index_params()?;
        self.top_k()?;
        self.id_samples()?;
        self.sparse_params()?;
        self.decode()?;
        self.check_state()?;
        self.sweep()?;
        self.mrr_sample()?;
        Ok(())
    }

    /// Resolved settings in config syntax, defaults included.
    pub fn snapshot(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
