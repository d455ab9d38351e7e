use std::io::{Cursor, Read};
use std::path::Path;

use crate::error::{Error, Result};

use super::SAMPLE_RATE;

const PCM_SCALE: f64 = 32768.0;

/// Mono samples in `[−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|s| !(s.abs() <= 1.0)) {
            return Err(Error::Input(format!("audio sample {bad} is outside [-1, 1]")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Rejects anything but 16 kHz.
    pub fn require_pipeline_rate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::Input(format!(
                "sample rate {} Hz is not supported; resample to {SAMPLE_RATE} Hz first",
                self.sample_rate
            )));
        }
        Ok(())
    }

    /// 16-bit PCM mono WAV bytes.
    pub fn to_wav_bytes(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).expect("in-memory writer");
            for s in &self.samples {
                let q = (s * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
                w.write_sample(q).expect("in-memory write");
            }
            w.finalize().expect("in-memory finalize");
        }
        cursor.into_inner()
    }

    pub fn from_wav_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        parse(Cursor::new(bytes))
    }
}

fn parse<R: Read>(reader: R) -> std::result::Result<AudioBuffer, String> {
    let r = hound::WavReader::new(reader).map_err(|e| e.to_string())?;
    let spec = r.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(format!(
            "unsupported encoding: {} bit {:?}; only 16-bit integer PCM is accepted",
            spec.bits_per_sample, spec.sample_format
        ));
    }
    if spec.channels != 1 {
        return Err(format!("{} channels found; only mono is accepted", spec.channels));
    }
    let expected = r.len() as usize;
    let samples = r
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    if samples.len() != expected {
        return Err(format!("data chunk holds {} of {expected} samples", samples.len()));
    }
    Ok(AudioBuffer {
        samples,
        sample_rate: spec.sample_rate,
    })
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    AudioBuffer::from_wav_bytes(&bytes).map_err(|reason| Error::Format {
        kind: "wav",
        path: path.to_path_buf(),
        reason,
    })
}

pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    std::fs::write(path, audio.to_wav_bytes()).map_err(|e| Error::io(path, e))
}
