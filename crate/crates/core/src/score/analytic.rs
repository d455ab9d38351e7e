//! Exact scores of a diffused diagonal Gaussian mixture.
//!
//! A data component `N(m, v)` pushed through the forward kernel stays Gaussian
//! with mean `μ + (m − μ)a` and variance `v·a² + σ(1 − a²)`, where
//! `a = exp(−B(t)/(2σ))`. The diffused density is therefore known in closed
//! form, which makes this field the reference every sampler and training
//! check is measured against.

use std::f64::consts::PI;

use crate::conditioning::{Conditioning, Emotion};
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, PriorField, State};

use super::ScoreField;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    /// Flattened (row-major) mean over the whole state.
    pub mean: Vec<f64>,
    /// Flattened diagonal variance.
    pub var: Vec<f64>,
    pub label: Option<Emotion>,
}

#[derive(Clone, Debug)]
pub struct AnalyticScoreField {
    schedule: NoiseSchedule,
    components: Vec<GaussianComponent>,
    /// Label whose conditional law is the full mixture.
    baseline: Option<Emotion>,
    dim: usize,
}

impl AnalyticScoreField {
    pub fn new(
        schedule: NoiseSchedule,
        components: Vec<GaussianComponent>,
        baseline: Option<Emotion>,
    ) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Input("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        let mut total = 0.0;
        for c in &components {
            if c.mean.len() != dim || c.var.len() != dim {
                return Err(Error::shape("mixture component", &[dim], &[c.mean.len()]));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::Invariant(format!("component weight {}", c.weight)));
            }
            if c.var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Invariant(
                    "component variances must be positive".into(),
                ));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            schedule,
            components,
            baseline,
            dim,
        })
    }

    /// Single unlabeled Gaussian data law.
    pub fn gaussian(schedule: NoiseSchedule, mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        Self::new(
            schedule,
            vec![GaussianComponent {
                weight: 1.0,
                mean,
                var,
                label: None,
            }],
            None,
        )
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn baseline(&self) -> Option<Emotion> {
        self.baseline
    }

    /// Distinct labels carried by components, in table order.
    pub fn labels(&self) -> Vec<Emotion> {
        let mut out: Vec<Emotion> = self.components.iter().filter_map(|c| c.label).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Total mixture weight of components carrying `label`.
    pub fn label_weight(&self, label: Emotion) -> f64 {
        self.components
            .iter()
            .filter(|c| c.label == Some(label))
            .map(|c| c.weight)
            .sum()
    }

    fn selected(&self, label: Option<Emotion>) -> Result<Vec<&GaussianComponent>> {
        let picked: Vec<_> = match label {
            None => self.components.iter().collect(),
            Some(l) if Some(l) == self.baseline => self.components.iter().collect(),
            Some(l) => self
                .components
                .iter()
                .filter(|c| c.label == Some(l))
                .collect(),
        };
        if picked.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
            return Err(Error::Input(format!(
                "label {} has zero weight in the mixture",
                label.map_or("null", Emotion::name)
            )));
        }
        Ok(picked)
    }

    fn check(&self, x: &State, prior: &PriorField) -> Result<()> {
        prior.check_state("analytic score", x)?;
        if x.len() != self.dim {
            return Err(Error::shape("analytic score", &[self.dim], &[x.len()]));
        }
        Ok(())
    }

    /// Per-component log weight + log density of the diffused component at
    /// `x`, together with each component's `(mean_t, var_t)`.
    fn evolved(
        &self,
        x: &State,
        prior: &PriorField,
        t: f64,
        label: Option<Emotion>,
    ) -> Result<Vec<(f64, Vec<f64>, Vec<f64>)>> {
        self.check(x, prior)?;
        let b = self.schedule.cum_beta(t)?;
        let mu: Vec<f64> = prior.mu().iter().copied().collect();
        let sigma: Vec<f64> = prior.sigma().iter().copied().collect();
        let decay_sq: Vec<f64> = sigma.iter().map(|s| (-b / s).exp()).collect();
        let xs: Vec<f64> = x.iter().copied().collect();
        let comps = self.selected(label)?;
        let mut out = Vec::with_capacity(comps.len());
        for c in comps {
            let mut log_p = c.weight.ln();
            let mut means = Vec::with_capacity(self.dim);
            let mut vars = Vec::with_capacity(self.dim);
            for i in 0..self.dim {
                let a2 = decay_sq[i];
                let m = mu[i] + (c.mean[i] - mu[i]) * a2.sqrt();
                let v = c.var[i] * a2 + sigma[i] * (1.0 - a2);
                let d = xs[i] - m;
                log_p -= 0.5 * ((2.0 * PI * v).ln() + d * d / v);
                means.push(m);
                vars.push(v);
            }
            out.push((log_p, means, vars));
        }
        Ok(out)
    }

    /// `log p_t(x | label)`; `None` gives the unconditional density.
    pub fn log_density(
        &self,
        x: &State,
        prior: &PriorField,
        t: f64,
        label: Option<Emotion>,
    ) -> Result<f64> {
        let comps = self.evolved(x, prior, t, label)?;
        let norm: f64 = self.selected(label)?.iter().map(|c| c.weight).sum();
        Ok(log_sum_exp(comps.iter().map(|c| c.0)) - norm.ln())
    }

    /// Exact `∇ₓ log p_t(x | label)`.
    pub fn score_for(
        &self,
        x: &State,
        prior: &PriorField,
        t: f64,
        label: Option<Emotion>,
    ) -> Result<State> {
        let comps = self.evolved(x, prior, t, label)?;
        let lse = log_sum_exp(comps.iter().map(|c| c.0));
        let mut out = State::zeros(x.dim());
        for (log_p, means, vars) in &comps {
            let r = (log_p - lse).exp();
            if r == 0.0 {
                continue;
            }
            for ((o, xi), (m, v)) in out.iter_mut().zip(x.iter()).zip(means.iter().zip(vars)) {
                *o -= r * (xi - m) / v;
            }
        }
        Ok(out)
    }
}

impl ScoreField for AnalyticScoreField {
    fn score(&self, x: &State, prior: &PriorField, t: f64, cond: &Conditioning) -> Result<State> {
        self.score_for(x, prior, t, cond.emotion)
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}
