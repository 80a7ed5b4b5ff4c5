//! Embedding to retrieval-key transform.
//!
//! Keys are produced in three fitted steps: per-dimension z-normalisation,
//! projection onto the leading principal components, and scaling to unit
//! length. The same [`PipelineModel`] must be used to build a datastore and to
//! query it.

mod norm;
mod pca;

use std::fs;
use std::ops::Deref;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use norm::{fit_norm_stats, z_normalize, NormStats, DEFAULT_NORM_EPSILON};
pub use pca::{fit_pca, magnitude_normalize, pca_transform, PcaModel, DEFAULT_KEY_EPSILON};

use crate::binfmt::{self, Reader};
use crate::corpus::TokenSeq;
use crate::error::{Error, Result};
use crate::model::LanguageModel;

pub const DEFAULT_KEY_DIM: usize = 64;
pub const DEFAULT_FIT_SAMPLE: usize = 50_000;

/// Final-position hidden state of the target model.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEmbedding(pub Vec<f32>);

/// Reduced, unit-norm retrieval key.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedKey(pub Vec<f32>);

impl Deref for ContextEmbedding {
    type Target = [f32];
    fn deref(&self) -> &[f32] {
        &self.0
    }
}

impl Deref for ReducedKey {
    type Target = [f32];
    fn deref(&self) -> &[f32] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub stats: NormStats,
    pub pca: PcaModel,
    pub key_epsilon: f64,
}

const MAGIC: &[u8; 4] = b"DRSP";
const VERSION: u32 = 1;

impl PipelineModel {
    pub fn embed_dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn key_dim(&self) -> usize {
        self.pca.l
    }

    pub fn embed_to_key(&self, v: &[f32]) -> Result<ReducedKey> {
        let z = z_normalize(v, &self.stats)?;
        let reduced = pca_transform(&z, &self.pca)?;
        Ok(magnitude_normalize(&reduced, self.key_epsilon))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.embed_dim();
        let l = self.key_dim();
        let mut buf = Vec::with_capacity(40 + 4 * (2 * d + l * d + l));
        binfmt::write_header(&mut buf, MAGIC, VERSION).unwrap();
        buf.extend_from_slice(&(d as u32).to_le_bytes());
        buf.extend_from_slice(&(l as u32).to_le_bytes());
        buf.extend_from_slice(&self.stats.epsilon.to_le_bytes());
        buf.extend_from_slice(&self.key_epsilon.to_le_bytes());
        binfmt::write_f32s(&mut buf, &self.stats.mean).unwrap();
        binfmt::write_f32s(&mut buf, &self.stats.variance).unwrap();
        binfmt::write_f32s(&mut buf, &self.pca.components).unwrap();
        binfmt::write_f32s(&mut buf, &self.pca.explained_variance_ratio).unwrap();
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "pipeline file");
        r.header(MAGIC, VERSION)?;
        let d = r.u32()? as usize;
        let l = r.u32()? as usize;
        if d == 0 || l == 0 || l > d {
            return Err(Error::format(
                "pipeline file",
                format!("inconsistent dimensions: embed {d}, key {l}"),
            ));
        }
        let eps_z = r.f64()?;
        let eps_m = r.f64()?;
        let mean = r.f32s(d)?;
        let variance = r.f32s(d)?;
        let components = r.f32s(l * d)?;
        let ratios = r.f32s(l)?;
        r.finish()?;
        Ok(Self {
            stats: NormStats {
                mean,
                variance,
                epsilon: eps_z,
            },
            pca: PcaModel {
                components,
                explained_variance_ratio: ratios,
                dim: d,
                l,
            },
            key_epsilon: eps_m,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binfmt::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Short content hash, used to tie a datastore to the pipeline it was built with.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Fit normalisation statistics, then PCA on the normalised sample.
pub fn fit_pipeline(
    sample: &[ContextEmbedding],
    l: usize,
    eps_z: f64,
    eps_m: f64,
) -> Result<PipelineModel> {
    let stats = fit_norm_stats(sample, eps_z)?;
    let normalised = normalize_sample(sample, &stats)?;
    let pca = fit_pca(&normalised, l)?;
    Ok(PipelineModel {
        stats,
        pca,
        key_epsilon: eps_m,
    })
}

pub fn normalize_sample(
    sample: &[ContextEmbedding],
    stats: &NormStats,
) -> Result<Vec<ContextEmbedding>> {
    sample
        .iter()
        .map(|v| z_normalize(v, stats).map(ContextEmbedding))
        .collect()
}

/// Embeddings of up to `max_count` corpus prefixes, chosen uniformly without
/// replacement. The candidate prefixes are the same ones a datastore indexes:
/// every `x[..t]` with `1 <= t < len`.
pub fn collect_fit_sample(
    model: &dyn LanguageModel,
    corpus: &[TokenSeq],
    max_count: usize,
    seed: u64,
) -> Result<Vec<ContextEmbedding>> {
    let positions: Vec<(usize, usize)> = corpus
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (1..seq.len()).map(move |t| (s, t)))
        .collect();
    if positions.is_empty() {
        return Err(Error::invalid(
            "corpus has no sequence longer than one token",
        ));
    }
    let chosen: Vec<(usize, usize)> = if positions.len() <= max_count {
        positions
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, positions.len(), max_count).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| positions[i]).collect()
    };
    chosen
        .par_iter()
        .map(|&(s, t)| model.forward(&corpus[s][..t]).map(|o| o.embedding))
        .collect()
}
