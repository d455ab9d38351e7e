//! Guidance-intensity sweeps and accuracy reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conditioning::{Conditioning, Emotion, SpeakerEmbedding};
use crate::error::{Error, Result};
use crate::guidance::GuidanceWeight;
use crate::rng;
use crate::sampler::{sample_many, SamplerConfig};
use crate::schedule::{NoiseSchedule, PriorField};
use crate::score::ScoreField;

use super::classifier::ToyClassifier;
use super::corpus::SyntheticEmotionCorpus;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Bayes,
    Classifier,
}

impl Scorer {
    pub fn name(self) -> &'static str {
        match self {
            Scorer::Bayes => "bayes",
            Scorer::Classifier => "classifier",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: Emotion,
    pub w: f64,
    pub mean_prob: f64,
    pub std_error: f64,
    pub n: usize,
    pub scorer: Scorer,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Rows for one label and scorer in ascending `w`.
    pub fn curve(&self, label: Emotion, scorer: Scorer) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.label == label && r.scorer == scorer)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,w,meanProb,stderr,n,scorer\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.label,
                r.w,
                r.mean_prob,
                r.std_error,
                r.n,
                r.scorer.name()
            );
        }
        out
    }
}

/// Sweep settings. The sampler seed is combined with the label so that
/// every intensity of one label starts from the same terminal draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub weights: Vec<f64>,
    pub samples: usize,
    pub sampler: SamplerConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            weights: vec![0.0, 1.0, 2.0, 4.0, 8.0],
            samples: 2000,
            sampler: SamplerConfig::default(),
        }
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Samples every `(label, w)` cell with guidance and scores the draws by
/// the Bayes posterior and, when given, the toy classifier.
#[allow(clippy::too_many_arguments)]
pub fn intensity_sweep<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &NoiseSchedule,
    corpus: &SyntheticEmotionCorpus,
    labels: &[Emotion],
    config: &SweepConfig,
    speaker: &SpeakerEmbedding,
    classifier: Option<&ToyClassifier>,
) -> Result<SweepReport> {
    if config.weights.is_empty() {
        return Err(Error::Input("sweep needs at least one intensity".into()));
    }
    if config.samples == 0 {
        return Err(Error::Input("sweep needs at least one sample per cell".into()));
    }
    let weights = config
        .weights
        .iter()
        .map(|&w| GuidanceWeight::new(w))
        .collect::<Result<Vec<_>>>()?;
    let mut labels = labels.to_vec();
    labels.sort();
    labels.dedup();
    for l in &labels {
        if !corpus.has_label(*l) {
            return Err(Error::Input(format!("label {l} is not in the corpus")));
        }
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|a, b| weights[*a].value().total_cmp(&weights[*b].value()));
    let prior = PriorField::standard(1, corpus.dim);

    let mut rows = Vec::new();
    for &label in &labels {
        let cond = Conditioning::new(speaker.clone(), Some(label));
        let seed = rng::derive_seed(config.sampler.seed, &[label.index() as u64]);
        for &i in &order {
            let sampler = SamplerConfig {
                intensity: weights[i],
                seed,
                ..config.sampler
            };
            let draws = sample_many(field, schedule, &prior, &cond, &sampler, config.samples)?;
            let points: Vec<Vec<f64>> = draws.iter().map(|d| d.iter().copied().collect()).collect();
            let mut push = |scorer, probs: Vec<f64>| {
                let (mean_prob, std_error) = mean_and_stderr(&probs);
                rows.push(SweepRow {
                    label,
                    w: config.weights[i],
                    mean_prob,
                    std_error,
                    n: probs.len(),
                    scorer,
                });
            };
            push(
                Scorer::Bayes,
                points
                    .iter()
                    .map(|p| corpus.bayes_probability(p, label))
                    .collect::<Result<_>>()?,
            );
            if let Some(clf) = classifier {
                push(
                    Scorer::Classifier,
                    points
                        .iter()
                        .map(|p| clf.probability(p, label))
                        .collect::<Result<_>>()?,
                );
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.label, a.scorer)
            .cmp(&(b.label, b.scorer))
            .then(a.w.total_cmp(&b.w))
    });
    Ok(SweepReport { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub labels: Vec<Emotion>,
    /// `confusion[i][j]`: samples intended as `labels[i]` predicted as
    /// `labels[j]`.
    pub confusion: Vec<Vec<usize>>,
}

impl AccuracyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("intended");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            let _ = write!(out, "{l}");
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Classifier accuracy on generated samples; samples whose intended label
/// the classifier does not know are skipped.
pub fn accuracy_report(classifier: &ToyClassifier, samples: &[(Vec<f64>, Emotion)]) -> Result<AccuracyReport> {
    let labels = classifier.labels().to_vec();
    let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
    let mut total = 0usize;
    let mut correct = 0usize;
    for (x, intended) in samples {
        let Some(i) = labels.iter().position(|l| l == intended) else {
            log::warn!("accuracy report: skipping sample labeled {intended}");
            continue;
        };
        let predicted = classifier.predict(x)?;
        let j = labels.iter().position(|l| *l == predicted).expect("known label");
        confusion[i][j] += 1;
        total += 1;
        correct += (i == j) as usize;
    }
    if total == 0 {
        return Err(Error::Input(
            "no sample carries a label known to the classifier".into(),
        ));
    }
    Ok(AccuracyReport {
        accuracy: correct as f64 / total as f64,
        labels,
        confusion,
    })
}
