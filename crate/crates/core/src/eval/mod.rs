//! Evaluation: synthetic labeled corpora, Bayes and classifier scorers and
//! guidance-intensity sweeps.

mod classifier;
mod corpus;
mod sweep;

pub use classifier::{ClassifierConfig, ToyClassifier};
pub use corpus::{Baseline, LabeledGaussian, SyntheticEmotionCorpus};
pub use sweep::{accuracy_report, intensity_sweep, AccuracyReport, Scorer, SweepConfig, SweepReport, SweepRow};
