//! Emotion labels, speaker embeddings and the conditioning context passed to
//! score fields.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Dimension of the speaker (face-identity) embedding.
pub const SPEAKER_DIM: usize = 512;
/// Dimension of one emotion embedding row.
pub const EMOTION_DIM: usize = 128;
/// Rows in the emotion table: seven emotions plus the null token.
pub const EMOTION_ROWS: usize = 8;
/// Row reserved for the null token.
pub const NULL_ROW: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Happy,
    Neutral,
    Sad,
    Surprise,
}

impl Emotion {
    pub const ALL: [Emotion; 7] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Happy,
        Emotion::Neutral,
        Emotion::Sad,
        Emotion::Surprise,
    ];

    /// Row of this emotion in the embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "Anger",
            Emotion::Disgust => "Disgust",
            Emotion::Fear => "Fear",
            Emotion::Happy => "Happy",
            Emotion::Neutral => "Neutral",
            Emotion::Sad => "Sad",
            Emotion::Surprise => "Surprise",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let valid: Vec<_> = Emotion::ALL.iter().map(|e| e.name()).collect();
                Error::Input(format!(
                    "unknown emotion label `{s}`; valid labels: {}, or null",
                    valid.join(", ")
                ))
            })
    }
}

/// Parses a label or the null token (`null`, `none`, `∅`).
pub fn parse_label(s: &str) -> Result<Option<Emotion>> {
    match s.to_ascii_lowercase().as_str() {
        "null" | "none" | "∅" => Ok(None),
        _ => s.parse().map(Some),
    }
}

/// Table row for a label; the null token maps to [`NULL_ROW`].
pub fn table_row(label: Option<Emotion>) -> usize {
    label.map_or(NULL_ROW, Emotion::index)
}

/// Fixed-dimension speaker identity vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEmbedding(Arc<[f64]>);

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != SPEAKER_DIM {
            return Err(Error::shape("speaker embedding", &[SPEAKER_DIM], &[values.len()]));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("speaker embedding must be finite".into()));
        }
        Ok(Self(values.into()))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; SPEAKER_DIM].into())
    }

    /// Random unit-norm identity vector, the desk-scale stand-in for a
    /// face-network output.
    pub fn random(rng: &mut Stream) -> Self {
        let mut v: Vec<f64> = (0..SPEAKER_DIM).map(|_| rng::normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        Self(v.into())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A bank of synthetic speakers derived from one seed.
#[derive(Clone, Debug)]
pub struct SpeakerBank {
    speakers: Vec<SpeakerEmbedding>,
}

impl SpeakerBank {
    pub fn synthetic(count: usize, seed: u64) -> Self {
        let speakers = (0..count)
            .map(|i| SpeakerEmbedding::random(&mut rng::derive(seed, &[0x5EED, i as u64])))
            .collect();
        Self { speakers }
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&SpeakerEmbedding> {
        self.speakers.get(index).ok_or_else(|| {
            Error::Input(format!(
                "speaker index {index} out of range (bank has {})",
                self.speakers.len()
            ))
        })
    }
}

/// What a score field is conditioned on besides the state, prior and time.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub speaker: SpeakerEmbedding,
    pub emotion: Option<Emotion>,
}

impl Conditioning {
    pub fn new(speaker: SpeakerEmbedding, emotion: Option<Emotion>) -> Self {
        Self { speaker, emotion }
    }

    /// Context with a zero speaker vector; for fields that ignore speakers.
    pub fn label_only(emotion: Option<Emotion>) -> Self {
        Self::new(SpeakerEmbedding::zeros(), emotion)
    }

    /// Same speaker, emotion replaced by the null token.
    pub fn nulled(&self) -> Self {
        Self {
            speaker: self.speaker.clone(),
            emotion: None,
        }
    }
}
