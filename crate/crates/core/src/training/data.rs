//! Training examples and the synthetic utterance corpus.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::conditioning::{Emotion, SpeakerBank};
use crate::error::{Error, Result};
use crate::eval::SyntheticEmotionCorpus;
use crate::rng::{self, Stream};
use crate::schedule::{NoiseSchedule, PriorField, State};
use crate::score::{AnalyticScoreField, GaussianComponent};
use crate::text_prior::{expand, TokenSequence};

/// Tokens and ground-truth per-token durations of an utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct TextTarget {
    pub tokens: TokenSequence,
    pub durations: Vec<usize>,
}

/// One clean training state with its conditioning.
///
/// Examples without text use a zero prior mean; text examples take their
/// prior mean from the text encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub x0: State,
    pub label: Option<Emotion>,
    pub speaker: usize,
    pub text: Option<TextTarget>,
}

/// Labeled examples, an optional unlabeled pool (always trained with the
/// null label) and the speaker embeddings they refer to.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub labeled: Vec<Example>,
    pub unlabeled: Vec<Example>,
    pub speakers: SpeakerBank,
}

impl TrainingData {
    pub fn new(labeled: Vec<Example>, unlabeled: Vec<Example>, speakers: SpeakerBank) -> Result<Self> {
        let data = Self {
            labeled,
            unlabeled,
            speakers,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labeled.is_empty() && self.unlabeled.is_empty() {
            return Err(Error::Input("training data is empty".into()));
        }
        let channels = self.channels();
        for ex in self.labeled.iter().chain(&self.unlabeled) {
            if ex.x0.ncols() != channels || ex.x0.nrows() == 0 {
                return Err(Error::shape("training example", &[channels], &[ex.x0.ncols()]));
            }
            self.speakers.get(ex.speaker)?;
            if let Some(text) = &ex.text {
                if text.durations.len() != text.tokens.len()
                    || text.durations.iter().sum::<usize>() != ex.x0.nrows()
                {
                    return Err(Error::Input(
                        "text durations must match the token count and frame count".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.labeled
            .first()
            .or(self.unlabeled.first())
            .map_or(0, |e| e.x0.ncols())
    }

    pub fn has_text(&self) -> bool {
        self.labeled.iter().chain(&self.unlabeled).any(|e| e.text.is_some())
    }

    /// Single-frame examples drawn from a synthetic emotion corpus, with
    /// `per_label` draws for each label and `unlabeled` draws from the
    /// marginal.
    pub fn from_corpus(
        corpus: &SyntheticEmotionCorpus,
        per_label: usize,
        unlabeled: usize,
        speakers: usize,
        seed: u64,
    ) -> Result<Self> {
        let bank = SpeakerBank::synthetic(speakers.max(1), seed);
        let mut r = rng::derive(seed, &[1]);
        let make = |label: Option<Emotion>, r: &mut Stream| -> Result<Example> {
            let x = corpus.draw(label, r)?;
            Ok(Example {
                x0: Array2::from_shape_vec((1, x.len()), x).expect("row vector"),
                label,
                speaker: r.random_range(0..bank.len()),
                text: None,
            })
        };
        let mut labeled = Vec::new();
        for label in corpus.labels() {
            for _ in 0..per_label {
                labeled.push(make(Some(label), &mut r)?);
            }
        }
        let unlabeled = (0..unlabeled)
            .map(|_| make(None, &mut r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(labeled, unlabeled, bank)
    }

    /// Utterances from the synthetic corpus with random token strings.
    pub fn from_utterances(
        corpus: &UtteranceCorpus,
        labels: &[Emotion],
        per_label: usize,
        unlabeled: usize,
        max_tokens: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut r = rng::derive(seed, &[2]);
        let make = |label: Option<Emotion>, r: &mut Stream| -> Result<Example> {
            let tokens = corpus.random_tokens(max_tokens, r)?;
            let speaker = r.random_range(0..corpus.speakers.len());
            corpus.utterance(&tokens, label, speaker, r)
        };
        let mut labeled = Vec::new();
        for &label in labels {
            for _ in 0..per_label {
                labeled.push(make(Some(label), &mut r)?);
            }
        }
        let unlabeled = (0..unlabeled)
            .map(|_| make(None, &mut r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(labeled, unlabeled, corpus.speakers.clone())
    }
}

/// Log-mel-like utterances built from per-token spectral templates with
/// fixed durations, shifted by emotion- and speaker-specific offsets.
#[derive(Clone, Debug)]
pub struct UtteranceCorpus {
    pub vocab: usize,
    pub channels: usize,
    pub token_means: Array2<f64>,
    pub token_durations: Vec<usize>,
    pub emotion_offsets: Array2<f64>,
    pub speaker_offsets: Array2<f64>,
    pub speakers: SpeakerBank,
    pub noise_std: f64,
}

impl UtteranceCorpus {
    pub fn synthetic(vocab: usize, channels: usize, speakers: usize, seed: u64) -> Result<Self> {
        if vocab == 0 || channels == 0 || speakers == 0 {
            return Err(Error::Input("utterance corpus needs tokens, channels and speakers".into()));
        }
        let mut r = rng::derive(seed, &[3]);
        let c = channels as f64;
        let axis = Array1::from_shape_fn(channels, |i| i as f64);
        let mut token_means = Array2::zeros((vocab, channels));
        let mut token_durations = Vec::with_capacity(vocab);
        for v in 0..vocab {
            let f1 = r.random_range(0.05..0.4) * c;
            let f2 = r.random_range(0.4..0.8) * c;
            let width = 0.06 * c;
            let row = axis.mapv(|i| {
                -5.0 + 3.0 * (-(i - f1).powi(2) / (2.0 * width * width)).exp()
                    + 2.0 * (-(i - f2).powi(2) / (2.0 * width * width)).exp()
                    - 1.5 * i / c
            });
            token_means.row_mut(v).assign(&row);
            token_durations.push(r.random_range(2..=6));
        }
        let mut emotion_offsets = Array2::zeros((Emotion::ALL.len(), channels));
        for e in Emotion::ALL {
            if e == Emotion::Neutral {
                continue;
            }
            let gain = 0.5 * rng::normal(&mut r);
            let tilt = 0.5 * rng::normal(&mut r);
            emotion_offsets
                .row_mut(e.index())
                .assign(&axis.mapv(|i| gain + tilt * (i / c - 0.5)));
        }
        let mut speaker_offsets = Array2::zeros((speakers, channels));
        for s in 0..speakers {
            let level = 0.2 * rng::normal(&mut r);
            let tilt = 0.2 * rng::normal(&mut r);
            speaker_offsets
                .row_mut(s)
                .assign(&axis.mapv(|i| level + tilt * (i / c - 0.5)));
        }
        Ok(Self {
            vocab,
            channels,
            token_means,
            token_durations,
            emotion_offsets,
            speaker_offsets,
            speakers: SpeakerBank::synthetic(speakers, seed),
            noise_std: 0.3,
        })
    }

    pub fn random_tokens(&self, max_len: usize, rng: &mut Stream) -> Result<TokenSequence> {
        let len = rng.random_range(1..=max_len.max(1));
        TokenSequence::new((0..len).map(|_| rng.random_range(0..self.vocab)).collect(), self.vocab)
    }

    pub fn durations(&self, tokens: &TokenSequence) -> Vec<usize> {
        tokens.tokens().iter().map(|&t| self.token_durations[t]).collect()
    }

    /// Noise-free, offset-free frames for a token string.
    pub fn clean_frames(&self, tokens: &TokenSequence) -> Result<Array2<f64>> {
        let rows = tokens
            .tokens()
            .iter()
            .map(|&t| self.token_means.row(t).to_owned())
            .collect::<Vec<_>>();
        let mut token_mu = Array2::zeros((rows.len(), self.channels));
        for (i, row) in rows.iter().enumerate() {
            token_mu.row_mut(i).assign(row);
        }
        expand(&token_mu, &self.durations(tokens))
    }

    /// Exact score field of the utterance law for fixed tokens and speaker,
    /// one equally weighted component per label, together with the prior
    /// whose mean is the clean frames.
    pub fn score_field(
        &self,
        schedule: NoiseSchedule,
        tokens: &TokenSequence,
        speaker: usize,
        labels: &[Emotion],
    ) -> Result<(AnalyticScoreField, PriorField)> {
        self.speakers.get(speaker)?;
        if labels.is_empty() {
            return Err(Error::Input("utterance field needs at least one label".into()));
        }
        let clean = self.clean_frames(tokens)?;
        let base = &clean + &self.speaker_offsets.row(speaker);
        let var = vec![self.noise_std * self.noise_std; clean.len()];
        let components = labels
            .iter()
            .map(|&l| GaussianComponent {
                weight: 1.0 / labels.len() as f64,
                mean: (&base + &self.emotion_offsets.row(l.index())).iter().copied().collect(),
                var: var.clone(),
                label: Some(l),
            })
            .collect::<Vec<_>>();
        let mut components = components;
        let rest: f64 = components[1..].iter().map(|c| c.weight).sum();
        components[0].weight = 1.0 - rest;
        Ok((
            AnalyticScoreField::new(schedule, components, None)?,
            PriorField::with_unit_variance(clean),
        ))
    }

    pub fn utterance(
        &self,
        tokens: &TokenSequence,
        label: Option<Emotion>,
        speaker: usize,
        rng: &mut Stream,
    ) -> Result<Example> {
        self.speakers.get(speaker)?;
        let mut x0 = self.clean_frames(tokens)?;
        if let Some(l) = label {
            x0 += &self.emotion_offsets.row(l.index());
        }
        x0 += &self.speaker_offsets.row(speaker);
        x0.mapv_inplace(|v| v + self.noise_std * rng::normal(rng));
        Ok(Example {
            x0,
            label,
            speaker,
            text: Some(TextTarget {
                tokens: tokens.clone(),
                durations: self.durations(tokens),
            }),
        })
    }
}
