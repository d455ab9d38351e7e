//! Multinomial logistic regression trained with the crate's Adam.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::conditioning::Emotion;
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::training::{adam_step, AdamState};

use super::corpus::SyntheticEmotionCorpus;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Training draws per label at uniform label prior; actual counts are
    /// proportional to the corpus label priors.
    pub train_per_label: usize,
    pub test_per_label: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            train_per_label: 1000,
            test_per_label: 500,
            iterations: 300,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyClassifier {
    labels: Vec<Emotion>,
    dim: usize,
    params: ParamStore,
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
}

fn to_matrix(points: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((points.len(), dim));
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::shape("classifier input", &[dim], &[p.len()]));
        }
        out.row_mut(i).assign(&Array1::from(p.clone()));
    }
    Ok(out)
}

impl ToyClassifier {
    /// Fits on fresh corpus draws and returns the classifier with its
    /// held-out accuracy.
    pub fn train(corpus: &SyntheticEmotionCorpus, config: &ClassifierConfig) -> Result<(Self, f64)> {
        let labels = corpus.labels();
        if labels.len() < 2 {
            return Err(Error::Input("a classifier needs at least two labels".into()));
        }
        let n_labels = labels.len() as f64;
        let draw = |per_label: usize, stream: u64| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (j, &l) in labels.iter().enumerate() {
                let count = (per_label as f64 * n_labels * corpus.label_prior(l)).round() as usize;
                let mut r = crate::rng::derive(config.seed, &[stream, l.index() as u64]);
                for _ in 0..count.max(1) {
                    xs.push(corpus.draw(Some(l), &mut r)?);
                    ys.push(j);
                }
            }
            Ok((xs, ys))
        };
        let (train_x, train_y) = draw(config.train_per_label, 0)?;
        let (test_x, test_y) = draw(config.test_per_label, 1)?;

        let mut params = ParamStore::new();
        params.push("weights", Array2::zeros((corpus.dim, labels.len())));
        params.push("bias", Array2::zeros((1, labels.len())));
        let mut clf = Self {
            labels,
            dim: corpus.dim,
            params,
        };
        let x = to_matrix(&train_x, corpus.dim)?;
        let n = x.nrows() as f64;
        let mut adam = AdamState::new(&clf.params);
        for _ in 0..config.iterations {
            let mut p = clf.logits(&x);
            softmax_rows(&mut p);
            for (i, &y) in train_y.iter().enumerate() {
                p[[i, y]] -= 1.0;
            }
            p /= n;
            clf.params.zero_grad();
            *clf.params.grad_mut(0) = x.t().dot(&p);
            *clf.params.grad_mut(1) = p.sum_axis(Axis(0)).insert_axis(Axis(0));
            adam_step(&mut clf.params, &mut adam, config.learning_rate)?;
        }
        let correct = test_x
            .iter()
            .zip(&test_y)
            .map(|(x, &y)| clf.predict_index(x).map(|p| (p == y) as usize))
            .sum::<Result<usize>>()?;
        let accuracy = correct as f64 / test_x.len() as f64;
        Ok((clf, accuracy))
    }

    fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(self.params.value(0)) + self.params.value(1)
    }

    pub fn labels(&self) -> &[Emotion] {
        &self.labels
    }

    /// Posterior over [`labels`](Self::labels).
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut l = self.logits(&to_matrix(&[x.to_vec()], self.dim)?);
        softmax_rows(&mut l);
        Ok(l.row(0).to_vec())
    }

    pub fn probability(&self, x: &[f64], label: Emotion) -> Result<f64> {
        let j = self
            .labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::Input(format!("classifier does not know label {label}")))?;
        Ok(self.probabilities(x)?[j])
    }

    fn predict_index(&self, x: &[f64]) -> Result<usize> {
        let p = self.probabilities(x)?;
        Ok(p.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Emotion> {
        self.predict_index(x).map(|i| self.labels[i])
    }
}
