//! Whole-run configuration, read from and written to JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conditioning::Emotion;
use crate::error::{Error, Result};
use crate::eval::{ClassifierConfig, SyntheticEmotionCorpus};
use crate::sampler::SamplerConfig;
use crate::schedule::NoiseSchedule;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Single-frame states from a labeled Gaussian mixture.
    Mixture,
    /// Multi-frame log-mel utterances with a text prior.
    Utterance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub task: Task,
    pub mixture: SyntheticEmotionCorpus,
    pub per_label: usize,
    pub unlabeled: usize,
    pub speakers: usize,
    pub vocab: usize,
    pub channels: usize,
    pub max_tokens: usize,
    pub labels: Vec<Emotion>,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            task: Task::Mixture,
            mixture: SyntheticEmotionCorpus::training_pair(),
            per_label: 500,
            unlabeled: 0,
            speakers: 1,
            vocab: 16,
            channels: 128,
            max_tokens: 8,
            labels: Emotion::ALL.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub corpus: SyntheticEmotionCorpus,
    pub weights: Vec<f64>,
    pub samples: usize,
    /// Also score with a logistic classifier trained on the corpus.
    pub classifier: bool,
    pub classifier_config: ClassifierConfig,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            corpus: SyntheticEmotionCorpus::sweep_default(),
            weights: vec![0.0, 1.0, 2.0, 4.0, 8.0],
            samples: 1000,
            classifier: false,
            classifier_config: ClassifierConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub griffin_lim_iterations: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            griffin_lim_iterations: crate::audio::DEFAULT_GL_ITERATIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: NoiseSchedule,
    pub sampler: SamplerConfig,
    pub training: TrainConfig,
    pub corpus: CorpusConfig,
    pub sweep: SweepSettings,
    pub dsp: DspConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::default(),
            sampler: SamplerConfig::default(),
            training: TrainConfig::default(),
            corpus: CorpusConfig::default(),
            sweep: SweepSettings::default(),
            dsp: DspConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Input(reason) => Error::Format {
                kind: "config",
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        NoiseSchedule::new(self.schedule.beta0, self.schedule.beta1)?;
        self.sampler.validate()?;
        self.training.validate()?;
        self.corpus.mixture.validate()?;
        self.sweep.corpus.validate()?;
        if self.sweep.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Input("sweep weights must be finite and non-negative".into()));
        }
        if self.dsp.griffin_lim_iterations == 0 {
            return Err(Error::Input("griffin_lim_iterations must be positive".into()));
        }
        Ok(())
    }
}
