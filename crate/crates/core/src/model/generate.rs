use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_token, DecodeConfig, LanguageModel, PositionalRng};
use crate::corpus::{TokenId, TokenSeq};
use crate::error::{Error, Result};

/// Plain token-by-token decoding, seeded from `config.seed`.
pub fn autoregressive_generate(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    config: &DecodeConfig,
) -> Result<TokenSeq> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    autoregressive_generate_with(model, prompt, config, RngSource::Shared(&mut rng))
}

/// Where the randomness for each new token comes from.
pub enum RngSource<'a> {
    /// One generator consumed sequentially.
    Shared(&'a mut dyn RngCore),
    /// An independent stream per output position, as speculative decoding
    /// uses; plain decoding with these streams reproduces it path by path.
    Positional(PositionalRng),
}

pub fn autoregressive_generate_with(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    config: &DecodeConfig,
    mut rngs: RngSource<'_>,
) -> Result<TokenSeq> {
    config.validate()?;
    if prompt.is_empty() {
        return Err(Error::invalid("prompt must not be empty"));
    }
    let mut context = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < config.max_new_tokens {
        let dist = model.forward(&context)?.distribution;
        let tok = match &mut rngs {
            RngSource::Shared(rng) => sample_token(&dist, config, *rng)?,
            RngSource::Positional(p) => sample_token(&dist, config, &mut p.at(out.len() as u64))?,
        };
        out.push(tok);
        context.push(tok);
        if tok == model.eos() {
            break;
        }
    }
    Ok(out)
}
