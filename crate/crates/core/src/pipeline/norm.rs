use super::ContextEmbedding;
use crate::error::{Error, Result};

pub const DEFAULT_NORM_EPSILON: f64 = 1e-5;

/// Per-dimension mean and population variance of a fit sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub variance: Vec<f32>,
    pub epsilon: f64,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub(crate) fn check_sample(sample: &[ContextEmbedding]) -> Result<usize> {
    let first = sample
        .first()
        .ok_or_else(|| Error::invalid("fit sample is empty"))?;
    let d = first.len();
    if d == 0 {
        return Err(Error::invalid("embeddings have zero dimensions"));
    }
    for v in sample {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            });
        }
    }
    Ok(d)
}

pub fn fit_norm_stats(sample: &[ContextEmbedding], epsilon: f64) -> Result<NormStats> {
    let d = check_sample(sample)?;
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid("normalisation epsilon must be positive"));
    }
    let n = sample.len() as f64;
    let mut mean = vec![0f64; d];
    for v in sample {
        for (m, &x) in mean.iter_mut().zip(v.iter()) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    // second pass keeps the variance of a constant column exactly zero
    let mut var = vec![0f64; d];
    for v in sample {
        for ((s, &m), &x) in var.iter_mut().zip(&mean).zip(v.iter()) {
            let c = x as f64 - m;
            *s += c * c;
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    Ok(NormStats {
        mean: mean.into_iter().map(|m| m as f32).collect(),
        variance: var.into_iter().map(|s| s as f32).collect(),
        epsilon,
    })
}

pub fn z_normalize(v: &[f32], stats: &NormStats) -> Result<Vec<f32>> {
    if v.len() != stats.dim() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            actual: v.len(),
        });
    }
    Ok(v.iter()
        .zip(&stats.mean)
        .zip(&stats.variance)
        .map(|((&x, &m), &s)| ((x as f64 - m as f64) / (s as f64 + stats.epsilon).sqrt()) as f32)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(v: &[f32]) -> ContextEmbedding {
        ContextEmbedding(v.to_vec())
    }

    #[test]
    fn two_point_sample() {
        let stats = fit_norm_stats(&[emb(&[1.0, 2.0]), emb(&[3.0, 2.0])], 1e-5).unwrap();
        assert_eq!(stats.mean, vec![2.0, 2.0]);
        assert_eq!(stats.variance, vec![1.0, 0.0]);
        let z = z_normalize(&[3.0, 2.0], &stats).unwrap();
        assert!((z[0] - 1.0 / (1.0f64 + 1e-5).sqrt() as f32).abs() < 1e-7);
        assert_eq!(z[1], 0.0);
    }

    #[test]
    fn constant_sample_maps_to_zero() {
        let sample: Vec<_> = (0..7).map(|_| emb(&[0.1, -3.3, 7.0])).collect();
        let stats = fit_norm_stats(&sample, 1e-5).unwrap();
        for v in &sample {
            assert!(z_normalize(v, &stats).unwrap().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn errors() {
        assert!(fit_norm_stats(&[], 1e-5).is_err());
        assert!(matches!(
            fit_norm_stats(&[emb(&[1.0]), emb(&[1.0, 2.0])], 1e-5),
            Err(Error::DimensionMismatch { .. })
        ));
        let stats = fit_norm_stats(&[emb(&[1.0, 2.0])], 1e-5).unwrap();
        assert!(z_normalize(&[1.0], &stats).is_err());
    }

    proptest! {
        #[test]
        fn normalised_sample_is_standardised(
            rows in prop::collection::vec(prop::collection::vec(-50.0f32..50.0, 3), 2..40)
        ) {
            let sample: Vec<_> = rows.iter().map(|r| emb(r)).collect();
            let stats = fit_norm_stats(&sample, 1e-5).unwrap();
            let z: Vec<Vec<f32>> = sample.iter().map(|v| z_normalize(v, &stats).unwrap()).collect();
            for j in 0..3 {
                let n = z.len() as f64;
                let mean: f64 = z.iter().map(|r| r[j] as f64).sum::<f64>() / n;
                let var: f64 = z.iter().map(|r| (r[j] as f64 - mean).powi(2)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-3);
                let s = stats.variance[j] as f64;
                let expected = s / (s + 1e-5);
                prop_assert!((var - expected).abs() < 1e-3, "var {} expected {}", var, expected);
            }
        }
    }
}
