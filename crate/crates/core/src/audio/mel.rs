use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::stft::stft;
use super::wav::AudioBuffer;
use super::{F_MAX, F_MIN, HOP, N_BINS, N_FFT, SAMPLE_RATE};

pub const MEL_CHANNELS: usize = 128;
/// Magnitude floor applied before the natural log.
pub const LOG_FLOOR: f64 = 1e-5;

const MAGIC: &str = "emotts-mel";

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn mel_edges() -> Vec<f64> {
    let lo = hz_to_mel(F_MIN);
    let hi = hz_to_mel(F_MAX);
    (0..MEL_CHANNELS + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (MEL_CHANNELS + 1) as f64))
        .collect()
}

/// Peak frequency in Hz of every filter.
pub fn mel_center_frequencies() -> Vec<f64> {
    mel_edges()[1..=MEL_CHANNELS].to_vec()
}

/// Triangular filters with unit peak, 128 × 513. Filter `k` rises from
/// edge `k` to edge `k + 1` and falls to edge `k + 2`, the edges being
/// equally spaced on the mel scale.
pub fn mel_filterbank() -> Array2<f64> {
    let edges = mel_edges();
    let bin_hz = SAMPLE_RATE as f64 / N_FFT as f64;
    Array2::from_shape_fn((MEL_CHANNELS, N_BINS), |(k, b)| {
        let f = b as f64 * bin_hz;
        let (lo, c, hi) = (edges[k], edges[k + 1], edges[k + 2]);
        let up = (f - lo) / (c - lo);
        let down = (hi - f) / (hi - c);
        up.min(down).max(0.0)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    frames: usize,
    channels: usize,
    sample_rate: u32,
    n_fft: usize,
    hop: usize,
    window: String,
    fmin: f64,
    fmax: f64,
    dtype: String,
}

/// Natural-log mel energies, frames × 128.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    values: Array2<f64>,
}

impl MelSpectrogram {
    /// Values below `ln(1e-5)` are raised to the floor.
    pub fn new(mut values: Array2<f64>) -> Result<Self> {
        if values.ncols() != MEL_CHANNELS {
            return Err(Error::shape("mel spectrogram", &[MEL_CHANNELS], &[values.ncols()]));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Input("mel spectrogram contains NaN".into()));
        }
        let floor = LOG_FLOOR.ln();
        values.mapv_inplace(|v| v.max(floor));
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    /// Index of the loudest channel in every frame.
    pub fn argmax_channels(&self) -> Vec<usize> {
        self.values
            .axis_iter(Axis(0))
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect()
    }

    /// JSON header line, then little-endian f32 values row by row.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: MAGIC.into(),
            frames: self.frames(),
            channels: MEL_CHANNELS,
            sample_rate: SAMPLE_RATE,
            n_fft: N_FFT,
            hop: HOP,
            window: "hann".into(),
            fmin: F_MIN,
            fmax: F_MAX,
            dtype: "f32le".into(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.reserve(self.values.len() * 4);
        for v in self.values.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or("missing header line")?;
        let header: Header =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| format!("bad header: {e}"))?;
        if header.format != MAGIC || header.dtype != "f32le" {
            return Err(format!("unknown format {} / {}", header.format, header.dtype));
        }
        if header.channels != MEL_CHANNELS
            || header.n_fft != N_FFT
            || header.hop != HOP
            || header.sample_rate != SAMPLE_RATE
        {
            return Err("framing parameters differ from the supported analysis setup".into());
        }
        let body = &bytes[nl + 1..];
        let expected = header.frames * header.channels * 4;
        if body.len() != expected {
            return Err(format!("payload has {} bytes, header implies {expected}", body.len()));
        }
        let values: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let values = Array2::from_shape_vec((header.frames, header.channels), values)
            .map_err(|e| e.to_string())?;
        Self::new(values).map_err(|e| e.to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Format {
            kind: "mel",
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// Log-mel features of 16 kHz audio.
pub fn mel_spectrogram(audio: &AudioBuffer) -> Result<MelSpectrogram> {
    audio.require_pipeline_rate()?;
    let spec = stft(&audio.samples)?;
    let mag = spec.mapv(|c| c.norm());
    let energies = mag.dot(&mel_filterbank().t());
    MelSpectrogram::new(energies.mapv(|e| e.max(LOG_FLOOR).ln()))
}
