//! Score-based diffusion synthesis with emotion-intensity control.
//!
//! The crate is organised around the generative pipeline:
//!
//! * [`schedule`]: linear noise schedule and the closed-form forward process
//! * [`score`]: score fields: an exact Gaussian-mixture oracle and a
//!   trainable toy network
//! * [`guidance`]: classifier-free guidance over emotion labels
//! * [`sampler`]: probability-flow ODE and reverse SDE integrators
//! * [`text_prior`]: toy text encoder producing the frame-level prior mean
//! * [`training`]: denoising score matching with null-label dropout, Adam
//! * [`audio`]: mel features, mel-cepstral distortion, Griffin-Lim, WAV
//! * [`eval`]: intensity sweeps scored by a Bayes oracle or toy classifier
//! * [`checkpoint`], [`config`]: model files and run configuration
//! * [`oracle_check`]: quick self-checks against closed-form references

pub mod audio;
pub mod checkpoint;
pub mod conditioning;
pub mod config;
pub mod error;
pub mod guidance;
pub mod nn;
pub mod oracle_check;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod score;
pub mod text_prior;
pub mod training;
pub mod eval;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use conditioning::{Conditioning, Emotion, SpeakerBank, SpeakerEmbedding};
pub use error::{Error, Result};
pub use guidance::{combine_scores, guided_score, GuidanceWeight};
pub use sampler::{SamplerConfig, Solver};
pub use schedule::{NoiseSchedule, PriorField, State};
pub use score::{AnalyticScoreField, ScoreField, ToyScoreNet};
