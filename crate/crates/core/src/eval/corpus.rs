//! Labeled Gaussian-mixture corpora with a closed-form Bayes posterior.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::conditioning::Emotion;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::schedule::NoiseSchedule;
use crate::score::{AnalyticScoreField, GaussianComponent};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledGaussian {
    pub label: Emotion,
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Label whose conditional law is the whole mixture, with its prior mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    pub label: Emotion,
    pub prior: f64,
}

/// A synthetic emotion corpus over `dim`-dimensional states.
///
/// Component weights sum to one and describe the data law. The optional
/// baseline label (the neutral analog) is constructed so that its
/// conditional equals the marginal; its posterior is then the constant
/// `baseline.prior` everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEmotionCorpus {
    pub dim: usize,
    pub components: Vec<LabeledGaussian>,
    pub baseline: Option<Baseline>,
}

impl SyntheticEmotionCorpus {
    pub fn new(dim: usize, components: Vec<LabeledGaussian>, baseline: Option<Baseline>) -> Result<Self> {
        let corpus = Self {
            dim,
            components,
            baseline,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Input("corpus has no components".into()));
        }
        let mut total = 0.0;
        for c in &self.components {
            if c.mean.len() != self.dim || c.var.len() != self.dim {
                return Err(Error::shape("corpus component", &[self.dim], &[c.mean.len()]));
            }
            if c.var.iter().any(|v| !(*v > 0.0)) || !(c.weight > 0.0) {
                return Err(Error::Invariant("corpus weights and variances must be positive".into()));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!("corpus weights sum to {total}")));
        }
        if let Some(b) = self.baseline {
            if !(0.0..1.0).contains(&b.prior) {
                return Err(Error::Invariant("baseline prior must be in [0, 1)".into()));
            }
            if self.components.iter().any(|c| c.label == b.label) {
                return Err(Error::Invariant(format!(
                    "baseline label {} must not own components",
                    b.label
                )));
            }
        }
        Ok(())
    }

    /// Two labels (Happy, Sad) on the first axis, `separation` standard
    /// deviations apart, in two dimensions.
    pub fn separated_pair(separation: f64, std: f64) -> Self {
        let half = 0.5 * separation * std;
        let comp = |label, x: f64| LabeledGaussian {
            label,
            weight: 0.5,
            mean: vec![x, 0.0],
            var: vec![std * std; 2],
        };
        Self {
            dim: 2,
            components: vec![comp(Emotion::Happy, half), comp(Emotion::Sad, -half)],
            baseline: None,
        }
    }

    /// The two-component 2-D reference task used to check training.
    pub fn training_pair() -> Self {
        let comp = |label, mean: [f64; 2]| LabeledGaussian {
            label,
            weight: 0.5,
            mean: mean.to_vec(),
            var: vec![0.04; 2],
        };
        Self {
            dim: 2,
            components: vec![comp(Emotion::Happy, [1.0, 0.5]), comp(Emotion::Sad, [-1.0, -0.5])],
            baseline: None,
        }
    }

    /// Three overlapping emotions on a circle plus a neutral baseline; the
    /// default intensity-sweep corpus.
    pub fn sweep_default() -> Self {
        let labels = [Emotion::Anger, Emotion::Happy, Emotion::Sad];
        let components = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| {
                let angle = PI / 2.0 + 2.0 * PI * i as f64 / 3.0;
                LabeledGaussian {
                    label,
                    weight: 1.0 / 3.0,
                    mean: vec![angle.cos(), angle.sin()],
                    var: vec![0.36; 2],
                }
            })
            .collect::<Vec<_>>();
        let mut corpus = Self {
            dim: 2,
            components,
            baseline: Some(Baseline {
                label: Emotion::Neutral,
                prior: 0.2,
            }),
        };
        // exact thirds so the weights sum to one within 1e-12
        let last = corpus.components.len() - 1;
        corpus.components[last].weight = 1.0 - 2.0 / 3.0;
        corpus
    }

    /// Every label with nonzero prior, in table order.
    pub fn labels(&self) -> Vec<Emotion> {
        let mut out: Vec<Emotion> = self.components.iter().map(|c| c.label).collect();
        if let Some(b) = self.baseline {
            out.push(b.label);
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn has_label(&self, label: Emotion) -> bool {
        self.labels().contains(&label)
    }

    pub fn baseline_label(&self) -> Option<Emotion> {
        self.baseline.map(|b| b.label)
    }

    fn baseline_prior(&self) -> f64 {
        self.baseline.map_or(0.0, |b| b.prior)
    }

    pub fn label_prior(&self, label: Emotion) -> f64 {
        if self.baseline_label() == Some(label) {
            return self.baseline_prior();
        }
        (1.0 - self.baseline_prior())
            * self
                .components
                .iter()
                .filter(|c| c.label == label)
                .map(|c| c.weight)
                .sum::<f64>()
    }

    fn log_weighted_densities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::shape("bayes probability", &[self.dim], &[x.len()]));
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                let mut lp = c.weight.ln();
                for ((xi, m), v) in x.iter().zip(&c.mean).zip(&c.var) {
                    lp -= 0.5 * ((2.0 * PI * v).ln() + (xi - m).powi(2) / v);
                }
                lp
            })
            .collect())
    }

    /// Exact posterior `P(label | x)` under the corpus law.
    pub fn bayes_probability(&self, x: &[f64], label: Emotion) -> Result<f64> {
        if !self.has_label(label) {
            return Err(Error::Input(format!("label {label} is not in the corpus")));
        }
        let lw = self.log_weighted_densities(x)?;
        if self.baseline_label() == Some(label) {
            return Ok(self.baseline_prior());
        }
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (c, l) in self.components.iter().zip(&lw) {
            let e = (l - max).exp();
            den += e;
            if c.label == label {
                num += e;
            }
        }
        Ok((1.0 - self.baseline_prior()) * num / den)
    }

    /// Posterior over every label.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<(Emotion, f64)>> {
        self.labels()
            .into_iter()
            .map(|l| self.bayes_probability(x, l).map(|p| (l, p)))
            .collect()
    }

    /// Draw from the label's conditional law (the full mixture for the
    /// baseline label).
    pub fn draw(&self, label: Option<Emotion>, rng: &mut Stream) -> Result<Vec<f64>> {
        use rand::Rng;
        let pool: Vec<&LabeledGaussian> = match label {
            Some(l) if Some(l) != self.baseline_label() => {
                self.components.iter().filter(|c| c.label == l).collect()
            }
            _ => self.components.iter().collect(),
        };
        if pool.is_empty() {
            return Err(Error::Input(format!(
                "label {} is not in the corpus",
                label.map_or("null", Emotion::name)
            )));
        }
        let total: f64 = pool.iter().map(|c| c.weight).sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = pool[pool.len() - 1];
        for c in &pool {
            if u < c.weight {
                chosen = c;
                break;
            }
            u -= c.weight;
        }
        Ok(chosen
            .mean
            .iter()
            .zip(&chosen.var)
            .map(|(m, v)| m + v.sqrt() * rng::normal(rng))
            .collect())
    }

    /// `per_label` draws for every label, in label order.
    pub fn labeled_samples(&self, per_label: usize, seed: u64) -> Result<Vec<(Vec<f64>, Emotion)>> {
        let mut out = Vec::with_capacity(per_label * self.labels().len());
        for label in self.labels() {
            let mut r = rng::derive(seed, &[label.index() as u64]);
            for _ in 0..per_label {
                out.push((self.draw(Some(label), &mut r)?, label));
            }
        }
        Ok(out)
    }

    /// Exact score field of the corpus law over a 1 × dim state.
    pub fn score_field(&self, schedule: NoiseSchedule) -> Result<AnalyticScoreField> {
        AnalyticScoreField::new(
            schedule,
            self.components
                .iter()
                .map(|c| GaussianComponent {
                    weight: c.weight,
                    mean: c.mean.clone(),
                    var: c.var.clone(),
                    label: Some(c.label),
                })
                .collect(),
            self.baseline_label(),
        )
    }
}
