//! Denoising score-matching training with null-label dropout, joint text
//! prior and duration losses, an optional speaker-feature loss and Adam.

mod adam;
mod data;
mod objectives;

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::Emotion;
use crate::error::{Error, Result};
use crate::rng;
use crate::schedule::{NoiseSchedule, PriorField, State};
use crate::score::{NetInputRow, ToyScoreNet};
use crate::text_prior::{duration_loss_with_grad, expand, expand_backward, prior_loss_with_grad, TextPriorNet};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use data::{Example, TextTarget, TrainingData, UtteranceCorpus};
pub use objectives::{
    apply_null_dropout, denoised_estimate, dsm_loss, speaker_feature_loss,
    speaker_feature_loss_with_grad, weighted_score_error, NoisedElement, SpeakerFeatureNet,
    T_MIN_TRAIN,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub diffusion: f64,
    pub prior: f64,
    pub duration: f64,
    pub speaker: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            diffusion: 1.0,
            prior: 1.0,
            duration: 0.1,
            speaker: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub null_dropout_prob: f64,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Probability that a batch element comes from the unlabeled pool.
    pub unlabeled_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            iterations: 2000,
            null_dropout_prob: 0.10,
            loss_weights: LossWeights::default(),
            seed: 0,
            unlabeled_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Domain {
                what: "learning_rate",
                value: self.learning_rate,
                domain: "(0, inf)",
            });
        }
        for (what, p) in [
            ("null_dropout_prob", self.null_dropout_prob),
            ("unlabeled_fraction", self.unlabeled_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain {
                    what,
                    value: p,
                    domain: "[0, 1]",
                });
            }
        }
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::Input("batch_size and iterations must be positive".into()));
        }
        let w = self.loss_weights;
        for (what, v) in [
            ("loss_weights.diffusion", w.diffusion),
            ("loss_weights.prior", w.prior),
            ("loss_weights.duration", w.duration),
            ("loss_weights.speaker", w.speaker),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain {
                    what,
                    value: v,
                    domain: "[0, inf)",
                });
            }
        }
        Ok(())
    }
}

/// Batch-mean loss terms of one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub diffusion: f64,
    pub prior: f64,
    pub duration: f64,
    pub speaker: f64,
    /// Fraction of labeled draws whose label was replaced by the null token.
    pub null_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub history: Vec<LossRecord>,
    pub labeled_draws: usize,
    pub null_draws: usize,
}

impl TrainReport {
    pub fn null_fraction(&self) -> f64 {
        if self.labeled_draws == 0 {
            0.0
        } else {
            self.null_draws as f64 / self.labeled_draws as f64
        }
    }

    /// Mean diffusion loss over the first `n` iterations.
    pub fn initial_diffusion(&self, n: usize) -> f64 {
        mean(self.history.iter().take(n.max(1)).map(|r| r.diffusion))
    }

    /// Mean diffusion loss over the last `fraction` of iterations.
    pub fn final_diffusion(&self, fraction: f64) -> f64 {
        let n = ((self.history.len() as f64 * fraction).ceil() as usize).max(1);
        mean(self.history.iter().rev().take(n).map(|r| r.diffusion))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,total,diffusion,prior,duration,speaker,null_fraction\n");
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iteration, r.total, r.diffusion, r.prior, r.duration, r.speaker, r.null_fraction
            );
        }
        out
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

struct Prepared<'a> {
    example: &'a Example,
    label: Option<Emotion>,
    mu: State,
    elem: NoisedElement,
    text: Option<TextTerms>,
}

struct TextTerms {
    prior: f64,
    duration: f64,
    d_token_mu: Array2<f64>,
    d_log_dur: Array1<f64>,
    cache: crate::text_prior::TextPriorCache,
}

/// Runs `config.iterations` Adam steps and returns the loss history.
///
/// Every batch element draws from its own stream derived from
/// `(seed, iteration, index)`, so histories are reproducible. The diffusion
/// term sees the text prior's output as a fixed prior mean; the text prior
/// learns only from the prior and duration terms.
///
/// The speaker term compares features of the one-step denoised estimate
/// `x̂₀` with those of the clean example. It is scaled by the signal level
/// `a_t = e^{−B(t)/2}`, which keeps its gradient bounded as `t → 1`, and
/// uses the unit-variance inversion of the forward marginal.
pub fn train(
    score_net: &mut ToyScoreNet,
    mut text_prior: Option<&mut TextPriorNet>,
    data: &TrainingData,
    schedule: &NoiseSchedule,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    data.validate()?;
    let channels = data.channels();
    if score_net.state_dim() != channels {
        return Err(Error::shape("score net state", &[channels], &[score_net.state_dim()]));
    }
    if data.has_text() {
        match text_prior.as_deref() {
            None => return Err(Error::Input("text examples need a text prior network".into())),
            Some(tp) if tp.channels() != channels => {
                return Err(Error::shape("text prior channels", &[channels], &[tp.channels()]))
            }
            _ => {}
        }
    }
    let weights = config.loss_weights;
    let feature_net = SpeakerFeatureNet::new(channels);
    let mut score_adam = AdamState::new(score_net.params());
    let mut prior_adam = text_prior.as_deref().map(|tp| AdamState::new(tp.params()));
    let mut report = TrainReport::default();

    for iteration in 0..config.iterations {
        score_net.params_mut().zero_grad();
        if let Some(tp) = text_prior.as_deref_mut() {
            tp.params_mut().zero_grad();
        }

        let mut labeled_draws = 0usize;
        let mut null_draws = 0usize;
        let mut batch = Vec::with_capacity(config.batch_size);
        for index in 0..config.batch_size {
            let mut r = rng::derive(config.seed, &[iteration as u64, index as u64]);
            let use_unlabeled = !data.unlabeled.is_empty()
                && (data.labeled.is_empty() || r.random::<f64>() < config.unlabeled_fraction);
            let (example, label) = if use_unlabeled {
                (&data.unlabeled[r.random_range(0..data.unlabeled.len())], None)
            } else {
                let ex = &data.labeled[r.random_range(0..data.labeled.len())];
                let label = objectives::drop_label(ex.label, config.null_dropout_prob, &mut r);
                labeled_draws += 1;
                if label.is_none() {
                    null_draws += 1;
                }
                (ex, label)
            };
            let (mu, text) = match (&example.text, text_prior.as_deref()) {
                (Some(target), Some(tp)) => {
                    let enc = tp.encode(&target.tokens)?;
                    let frame_mu = expand(&enc.token_mu, &target.durations)?;
                    let (prior, d_frames) = prior_loss_with_grad(&frame_mu, &example.x0)?;
                    let (duration, d_log_dur) = duration_loss_with_grad(&enc.log_dur, &target.durations)?;
                    let d_token_mu = expand_backward(&d_frames, &target.durations);
                    (
                        frame_mu,
                        Some(TextTerms {
                            prior,
                            duration,
                            d_token_mu,
                            d_log_dur,
                            cache: enc.cache,
                        }),
                    )
                }
                _ => (State::zeros(example.x0.dim()), None),
            };
            let prior_field = PriorField::with_unit_variance(mu.clone());
            let elem = NoisedElement::draw(schedule, &prior_field, &example.x0, &mut r)?;
            batch.push(Prepared {
                example,
                label,
                mu,
                elem,
                text,
            });
        }

        let blocks_x: Vec<&State> = batch.iter().map(|p| &p.elem.x_t).collect();
        let blocks_mu: Vec<&State> = batch.iter().map(|p| &p.mu).collect();
        let x = objectives::stack_rows(&blocks_x, channels);
        let mu = objectives::stack_rows(&blocks_mu, channels);
        let mut rows = Vec::with_capacity(x.nrows());
        for p in &batch {
            let speaker = data.speakers.get(p.example.speaker)?;
            rows.extend((0..p.elem.x_t.nrows()).map(|_| NetInputRow {
                t: p.elem.t,
                speaker,
                label: p.label,
            }));
        }
        let (out, cache) = score_net.forward(x.view(), mu.view(), &rows)?;

        let n_batch = batch.len() as f64;
        let n_text = batch.iter().filter(|p| p.text.is_some()).count();
        let mut d_out = Array2::zeros(out.dim());
        let mut dsm_sum = 0.0;
        let mut speaker_sum = 0.0;
        let mut prior_sum = 0.0;
        let mut duration_sum = 0.0;
        let mut offset = 0;
        for p in &batch {
            let frames = p.elem.x_t.nrows();
            let score = out.slice(s![offset..offset + frames, ..]).to_owned();
            let (loss, grad) = weighted_score_error(&score, &p.elem)?;
            dsm_sum += loss;
            let mut d = grad * (weights.diffusion / n_batch);
            if let Some(terms) = &p.text {
                prior_sum += terms.prior;
                duration_sum += terms.duration;
                if weights.speaker > 0.0 {
                    let signal = (-0.5 * schedule.cum_beta(p.elem.t)?).exp();
                    let x0_hat = denoised_estimate(&p.elem, &p.mu, &score, signal);
                    let (l, g) = speaker_feature_loss_with_grad(&x0_hat, &p.example.x0, &feature_net)?;
                    speaker_sum += signal * l;
                    // d(a·L)/ds = a · (var/a) · dL/dx̂₀
                    d += &(&p.elem.var_t * &g * (weights.speaker / n_text as f64));
                }
            }
            d_out.slice_mut(s![offset..offset + frames, ..]).assign(&d);
            offset += frames;
        }

        let per_text = |v: f64| if n_text == 0 { 0.0 } else { v / n_text as f64 };
        let record = LossRecord {
            iteration,
            diffusion: dsm_sum / n_batch,
            prior: per_text(prior_sum),
            duration: per_text(duration_sum),
            speaker: per_text(speaker_sum),
            total: 0.0,
            null_fraction: if labeled_draws == 0 {
                0.0
            } else {
                null_draws as f64 / labeled_draws as f64
            },
        };
        let record = LossRecord {
            total: weights.diffusion * record.diffusion
                + weights.prior * record.prior
                + weights.duration * record.duration
                + weights.speaker * record.speaker,
            ..record
        };
        if !record.total.is_finite() {
            return Err(Error::TrainingDiverged {
                iteration,
                what: "loss",
            });
        }

        score_net.backward(&cache, &d_out);
        if let (Some(tp), true) = (text_prior.as_deref_mut(), n_text > 0) {
            let scale = 1.0 / n_text as f64;
            for p in &batch {
                if let Some(terms) = &p.text {
                    tp.backward(
                        &terms.cache,
                        &(&terms.d_token_mu * (weights.prior * scale)),
                        &(&terms.d_log_dur * (weights.duration * scale)),
                    );
                }
            }
        }
        let diverged = |e: Error| match e {
            Error::NonFiniteGradient { .. } => Error::TrainingDiverged {
                iteration,
                what: "gradient",
            },
            other => other,
        };
        adam_step(score_net.params_mut(), &mut score_adam, config.learning_rate).map_err(diverged)?;
        if let (Some(tp), Some(state)) = (text_prior.as_deref_mut(), prior_adam.as_mut()) {
            if n_text > 0 {
                adam_step(tp.params_mut(), state, config.learning_rate).map_err(diverged)?;
            }
        }

        report.labeled_draws += labeled_draws;
        report.null_draws += null_draws;
        report.history.push(record);
    }
    Ok(report)
}
