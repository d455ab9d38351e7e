//! Classifier-free guidance over emotion labels.
//!
//! The guided score is `w·S(x, μ, t, spk, emo) − (w − 1)·S(x, μ, t, spk, ∅)`.
//! `w = 0` is the emotion-agnostic (null-token) score, `w = 1` the plain
//! conditional score, `w > 1` amplifies the emotion. Only the emotion is
//! nulled; both branches see the same speaker.

use serde::{Deserialize, Serialize};

use crate::conditioning::Conditioning;
use crate::error::{Error, Result};
use crate::schedule::{PriorField, State};
use crate::score::ScoreField;

/// Emotion intensity `w ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GuidanceWeight(f64);

impl GuidanceWeight {
    pub const CONDITIONAL: GuidanceWeight = GuidanceWeight(1.0);

    pub fn new(w: f64) -> Result<Self> {
        if w >= 0.0 && w.is_finite() {
            Ok(Self(w))
        } else {
            Err(Error::Domain {
                what: "emotion intensity",
                value: w,
                domain: "[0, inf)",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GuidanceWeight {
    type Error = Error;
    fn try_from(w: f64) -> Result<Self> {
        Self::new(w)
    }
}

impl From<GuidanceWeight> for f64 {
    fn from(w: GuidanceWeight) -> f64 {
        w.0
    }
}

/// `w·cond − (w − 1)·uncond`, elementwise.
pub fn combine_scores(cond: &State, uncond: &State, w: GuidanceWeight) -> Result<State> {
    if cond.dim() != uncond.dim() {
        return Err(Error::shape("guidance branches", cond.shape(), uncond.shape()));
    }
    let w = w.value();
    let mut out = cond * w;
    out.scaled_add(-(w - 1.0), uncond);
    Ok(out)
}

/// Evaluates the guided score. At `w ∈ {0, 1}` the field is called once.
pub fn guided_score<F: ScoreField + ?Sized>(
    field: &F,
    x: &State,
    prior: &PriorField,
    t: f64,
    cond: &Conditioning,
    w: GuidanceWeight,
) -> Result<State> {
    let w_val = w.value();
    if w_val == 0.0 || cond.emotion.is_none() {
        return field.score(x, prior, t, &cond.nulled());
    }
    if w_val == 1.0 {
        return field.score(x, prior, t, cond);
    }
    let s_cond = field.score(x, prior, t, cond)?;
    let s_uncond = field.score(x, prior, t, &cond.nulled())?;
    combine_scores(&s_cond, &s_uncond, w)
}

/// [`guided_score`] over several states sharing `t` and the context.
pub fn guided_score_batch<F: ScoreField + ?Sized>(
    field: &F,
    xs: &[State],
    prior: &PriorField,
    t: f64,
    cond: &Conditioning,
    w: GuidanceWeight,
) -> Result<Vec<State>> {
    let w_val = w.value();
    if w_val == 0.0 || cond.emotion.is_none() {
        return field.score_batch(xs, prior, t, &cond.nulled());
    }
    if w_val == 1.0 {
        return field.score_batch(xs, prior, t, cond);
    }
    let s_cond = field.score_batch(xs, prior, t, cond)?;
    let s_uncond = field.score_batch(xs, prior, t, &cond.nulled())?;
    s_cond
        .iter()
        .zip(&s_uncond)
        .map(|(c, u)| combine_scores(c, u, w))
        .collect()
}
