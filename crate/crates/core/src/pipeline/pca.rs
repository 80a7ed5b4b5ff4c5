use nalgebra::{DMatrix, SymmetricEigen};

use super::norm::check_sample;
use super::{ContextEmbedding, ReducedKey};
use crate::error::{Error, Result};

pub const DEFAULT_KEY_EPSILON: f64 = 1e-12;

/// Top principal directions of a (normalised) fit sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `l` rows of length `dim`, row-major, orthonormal.
    pub components: Vec<f32>,
    pub explained_variance_ratio: Vec<f32>,
    pub dim: usize,
    pub l: usize,
}

impl PcaModel {
    pub fn component(&self, i: usize) -> &[f32] {
        &self.components[i * self.dim..(i + 1) * self.dim]
    }
}

/// Eigen-decompose the sample covariance and keep the `l` leading directions.
///
/// Components are sorted by descending eigenvalue; each is signed so that its
/// largest-magnitude entry is positive, which makes the fit reproducible.
pub fn fit_pca(sample: &[ContextEmbedding], l: usize) -> Result<PcaModel> {
    let d = check_sample(sample)?;
    let n = sample.len();
    let max_l = d.min(n.saturating_sub(1));
    if l == 0 || l > max_l {
        return Err(Error::invalid(format!(
            "cannot keep {l} components from {n} samples of dimension {d} (at most {max_l})"
        )));
    }

    let mut mean = vec![0f64; d];
    for v in sample {
        for (m, &x) in mean.iter_mut().zip(v.iter()) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // accumulate X^T X in blocks to avoid materialising the whole sample
    const BLOCK: usize = 2048;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for chunk in sample.chunks(BLOCK) {
        let x = DMatrix::<f64>::from_fn(chunk.len(), d, |r, c| chunk[r][c] as f64 - mean[c]);
        cov += x.transpose() * &x;
    }
    cov /= n as f64;

    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let trace: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    let mut components = Vec::with_capacity(l * d);
    let mut ratios = Vec::with_capacity(l);
    for &idx in order.iter().take(l) {
        let col = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for i in 1..d {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(col.iter().map(|&x| (sign * x) as f32));
        let ratio = if trace > 0.0 {
            eig.eigenvalues[idx].max(0.0) / trace
        } else {
            0.0
        };
        ratios.push(ratio as f32);
    }

    Ok(PcaModel {
        components,
        explained_variance_ratio: ratios,
        dim: d,
        l,
    })
}

pub fn pca_transform(v: &[f32], pca: &PcaModel) -> Result<ReducedKey> {
    if v.len() != pca.dim {
        return Err(Error::DimensionMismatch {
            expected: pca.dim,
            actual: v.len(),
        });
    }
    Ok(ReducedKey(
        (0..pca.l)
            .map(|i| {
                pca.component(i)
                    .iter()
                    .zip(v)
                    .map(|(&w, &x)| w as f64 * x as f64)
                    .sum::<f64>() as f32
            })
            .collect(),
    ))
}

/// Scale to unit length; vectors shorter than `epsilon` stay near zero.
pub fn magnitude_normalize(v: &[f32], epsilon: f64) -> ReducedKey {
    let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let denom = norm.max(epsilon);
    ReducedKey(v.iter().map(|&x| (x as f64 / denom) as f32).collect())
}
