//! Score fields: estimators of `∇ₓ log p_t(x | conditioning)`.

mod analytic;
mod net;

pub use analytic::{AnalyticScoreField, GaussianComponent};
pub use net::{NetCache, NetInputRow, ToyScoreNet, HIDDEN_WIDTH};

use crate::conditioning::Conditioning;
use crate::error::{Error, Result};
use crate::schedule::{PriorField, State, HORIZON};

/// Dimension of the sinusoidal time embedding.
pub const TIME_EMBED_DIM: usize = 64;
const TIME_EMBED_PAIRS: usize = TIME_EMBED_DIM / 2;
const MAX_FREQUENCY: f64 = 1e4;

/// Anything that can evaluate a score at `(x, μ, t, context)`.
///
/// Implementations return a tensor with the shape of `x`.
pub trait ScoreField: Sync {
    fn score(&self, x: &State, prior: &PriorField, t: f64, cond: &Conditioning) -> Result<State>;

    /// Scores of several states sharing `t` and the context. The default
    /// evaluates them one at a time.
    fn score_batch(&self, xs: &[State], prior: &PriorField, t: f64, cond: &Conditioning) -> Result<Vec<State>> {
        xs.iter().map(|x| self.score(x, prior, t, cond)).collect()
    }
}

impl<F: ScoreField + ?Sized> ScoreField for &F {
    fn score(&self, x: &State, prior: &PriorField, t: f64, cond: &Conditioning) -> Result<State> {
        (**self).score(x, prior, t, cond)
    }

    fn score_batch(&self, xs: &[State], prior: &PriorField, t: f64, cond: &Conditioning) -> Result<Vec<State>> {
        (**self).score_batch(xs, prior, t, cond)
    }
}

/// Angular frequencies `ω_k`, geometric from 1 to 10⁴.
pub fn time_frequencies() -> [f64; TIME_EMBED_PAIRS] {
    let mut out = [0.0; TIME_EMBED_PAIRS];
    let ratio = MAX_FREQUENCY.ln() / (TIME_EMBED_PAIRS - 1) as f64;
    for (k, w) in out.iter_mut().enumerate() {
        *w = (ratio * k as f64).exp();
    }
    out
}

/// Interleaved `(sin tω_k, cos tω_k)` pairs.
pub fn time_embedding(t: f64) -> Result<[f64; TIME_EMBED_DIM]> {
    if !(0.0..=HORIZON).contains(&t) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            domain: "[0, 1]",
        });
    }
    let mut out = [0.0; TIME_EMBED_DIM];
    for (k, w) in time_frequencies().iter().enumerate() {
        let (s, c) = (t * w).sin_cos();
        out[2 * k] = s;
        out[2 * k + 1] = c;
    }
    Ok(out)
}
