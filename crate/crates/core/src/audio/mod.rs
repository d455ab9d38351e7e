//! Audio front end: WAV I/O, STFT, 128-channel log-mel features, mel
//! cepstra with mel-cepstral distortion, and Griffin-Lim resynthesis.
//!
//! Fixed analysis setup: 16 kHz mono, periodic Hann window of 1024 samples,
//! hop 256, centered frames with reflect padding, HTK mel scale over
//! 0–8000 Hz, natural log with a 1e-5 floor.

mod cepstra;
mod griffin_lim;
mod mel;
mod stft;
mod wav;

pub use cepstra::{dct_ortho, idct_ortho, mcd, mcd_trimmed, mel_cepstra, CepstraMatrix, CEPSTRAL_COEFFS};
pub use griffin_lim::{griffin_lim, griffin_lim_traced, mel_to_linear, GriffinLimTrace, DEFAULT_GL_ITERATIONS};
pub use mel::{
    hz_to_mel, mel_center_frequencies, mel_filterbank, mel_spectrogram, mel_to_hz, MelSpectrogram,
    LOG_FLOOR, MEL_CHANNELS,
};
pub use stft::{frame_count, hann_window, stft, Spectrogram};
pub use wav::{read_wav, write_wav, AudioBuffer};

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_FFT: usize = 1024;
pub const HOP: usize = 256;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const F_MIN: f64 = 0.0;
pub const F_MAX: f64 = 8000.0;
