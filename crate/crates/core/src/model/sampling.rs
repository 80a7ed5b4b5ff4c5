use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::TokenId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Nucleus,
}

impl DecodeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Nucleus => "nucleus",
        }
    }
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(DecodeMode::Greedy),
            "nucleus" => Ok(DecodeMode::Nucleus),
            other => Err(Error::Config(format!(
                "unknown decode mode {other:?} (expected greedy or nucleus)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            mode: DecodeMode::Greedy,
            temperature: 0.7,
            top_p: 0.95,
            max_new_tokens: 128,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self {
            max_new_tokens,
            ..Self::default()
        }
    }

    pub fn nucleus(temperature: f64, top_p: f64, max_new_tokens: usize, seed: u64) -> Self {
        Self {
            mode: DecodeMode::Nucleus,
            temperature,
            top_p,
            max_new_tokens,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::invalid("max_new_tokens must be positive"));
        }
        if self.mode == DecodeMode::Nucleus {
            if !(self.temperature > 0.0 && self.temperature.is_finite()) {
                return Err(Error::invalid(format!(
                    "nucleus sampling needs temperature > 0, got {}",
                    self.temperature
                )));
            }
            if !(self.top_p > 0.0 && self.top_p <= 1.0) {
                return Err(Error::invalid(format!(
                    "top_p must lie in (0, 1], got {}",
                    self.top_p
                )));
            }
        }
        Ok(())
    }
}

/// Counter-based random streams: one independent ChaCha stream per output
/// position, all derived from a single root seed.
///
/// The stream for a position depends only on `(seed, position)`, so the
/// token sampled at a given position from a given distribution is the same no
/// matter which draft row or iteration asks for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionalRng {
    pub seed: u64,
    pub base: u64,
}

impl PositionalRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, base: 0 }
    }

    pub fn offset(&self, by: u64) -> Self {
        Self {
            seed: self.seed,
            base: self.base + by,
        }
    }

    pub fn at(&self, position: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.base + position);
        rng
    }
}

fn check_distribution(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::invalid("empty distribution"));
    }
    let mut sum = 0.0;
    for &p in dist {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::invalid(format!(
                "distribution entry {p} is not a probability"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("distribution sums to {sum}, not 1")));
    }
    Ok(())
}

/// Highest-probability id; ties go to the lowest id.
pub fn argmax(dist: &[f64]) -> TokenId {
    let mut best = 0usize;
    for (i, &p) in dist.iter().enumerate().skip(1) {
        if p > dist[best] {
            best = i;
        }
    }
    best as TokenId
}

/// The temperature-scaled nucleus: the smallest set of ids, taken in
/// descending probability order, whose mass reaches `top_p`, renormalised.
pub fn nucleus_set(dist: &[f64], temperature: f64, top_p: f64) -> Vec<(TokenId, f64)> {
    // p^(1/T) in the log domain, shifted by the max for stability
    let inv_t = 1.0 / temperature;
    let max_log = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p.ln() * inv_t)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut scaled: Vec<(TokenId, f64)> = dist
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let q = if p > 0.0 {
                (p.ln() * inv_t - max_log).exp()
            } else {
                0.0
            };
            (i as TokenId, q)
        })
        .collect();
    let total: f64 = scaled.iter().map(|(_, q)| q).sum();
    for entry in &mut scaled {
        entry.1 /= total;
    }
    scaled.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut cumulative = 0.0;
    let mut keep = scaled.len();
    for (i, (_, q)) in scaled.iter().enumerate() {
        cumulative += q;
        if cumulative >= top_p {
            keep = i + 1;
            break;
        }
    }
    scaled.truncate(keep);
    let mass: f64 = scaled.iter().map(|(_, q)| q).sum();
    for entry in &mut scaled {
        entry.1 /= mass;
    }
    scaled
}

/// Draw the next token. Greedy never touches `rng`; nucleus draws exactly
/// one uniform from it.
pub fn sample_token<R: Rng + ?Sized>(
    dist: &[f64],
    config: &DecodeConfig,
    rng: &mut R,
) -> Result<TokenId> {
    check_distribution(dist)?;
    match config.mode {
        DecodeMode::Greedy => Ok(argmax(dist)),
        DecodeMode::Nucleus => {
            let set = nucleus_set(dist, config.temperature, config.top_p);
            let u: f64 = rng.random();
            let mut cumulative = 0.0;
            for &(id, q) in &set {
                cumulative += q;
                if u < cumulative {
                    return Ok(id);
                }
            }
            Ok(set.last().map(|&(id, _)| id).unwrap_or(0))
        }
    }
}
