use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

use super::mel::{mel_filterbank, MelSpectrogram};
use super::stft::Stft;
use super::wav::AudioBuffer;
use super::{HOP, N_BINS, N_FFT, SAMPLE_RATE};

pub const DEFAULT_GL_ITERATIONS: usize = 32;
const NNLS_ITERATIONS: usize = 200;
const PEAK: f64 = 0.95;

/// Spectral convergence `‖|X| − S‖ / ‖S‖` after every iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct GriffinLimTrace {
    pub spectral_convergence: Vec<f64>,
}

/// Non-negative linear magnitudes whose mel projection matches the mel
/// energies in the least-squares sense (multiplicative updates from a
/// transpose-normalized start).
pub fn mel_to_linear(mel: &MelSpectrogram) -> Array2<f64> {
    let fb = mel_filterbank();
    let target = mel.values().mapv(f64::exp);
    let row_sums = fb.sum_axis(ndarray::Axis(1));
    let col_sums = fb.sum_axis(ndarray::Axis(0));
    let per_weight = &target / &row_sums;
    let mut s = per_weight.dot(&fb);
    Zip::from(s.columns_mut()).and(&col_sums).for_each(|mut col, &c| {
        if c > 0.0 {
            col /= c;
        } else {
            col.fill(0.0);
        }
    });
    let gram = fb.t().dot(&fb);
    let numer = target.dot(&fb);
    for _ in 0..NNLS_ITERATIONS {
        let denom = s.dot(&gram);
        Zip::from(&mut s).and(&numer).and(&denom).for_each(|v, &n, &d| {
            *v = if d > 0.0 { *v * n / d } else { 0.0 };
        });
    }
    s
}

fn spectral_convergence(x: &Array2<Complex64>, target: &Array2<f64>) -> f64 {
    // interior bins stand for two conjugate bins of the full spectrum
    let mut num = 0.0;
    let mut den = 0.0;
    for ((f, b), s) in target.indexed_iter() {
        let w = if b == 0 || b == N_BINS - 1 { 1.0 } else { 2.0 };
        num += w * (x[[f, b]].norm() - s).powi(2);
        den += w * s * s;
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// Griffin-Lim reconstruction with a per-iteration convergence trace.
///
/// Iterates on the full padded signal, where analysis and least-squares
/// synthesis are exact projections; the padding is cropped at the end and
/// the result peak-normalized to 0.95. Deterministic.
pub fn griffin_lim_traced(
    mel: &MelSpectrogram,
    iterations: usize,
) -> Result<(AudioBuffer, GriffinLimTrace)> {
    if iterations == 0 {
        return Err(Error::Input("griffin-lim needs at least one iteration".into()));
    }
    if mel.frames() == 0 {
        return Err(Error::Input("mel spectrogram has no frames".into()));
    }
    let target = mel_to_linear(mel);
    let stft = Stft::new();
    // every bin starts as a steady sinusoid at its center frequency
    let advance = 2.0 * PI * HOP as f64 / N_FFT as f64;
    let mut spec = Array2::from_shape_fn(target.dim(), |(f, b)| {
        let phase = (advance * (b * f) as f64) % (2.0 * PI);
        Complex64::from_polar(target[[f, b]], phase)
    });
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let signal = stft.synthesize(&spec);
        let analysed = stft.analyze(&signal);
        trace.push(spectral_convergence(&analysed, &target));
        Zip::from(&mut spec)
            .and(&analysed)
            .and(&target)
            .for_each(|y, x, &s| {
                let n = x.norm();
                *y = if n > 0.0 { x * (s / n) } else { Complex64::new(s, 0.0) };
            });
    }
    let signal = stft.synthesize(&spec);
    let mut samples = signal[N_FFT / 2..signal.len() - N_FFT / 2].to_vec();
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    Ok((
        AudioBuffer::new(samples, SAMPLE_RATE)?,
        GriffinLimTrace {
            spectral_convergence: trace,
        },
    ))
}

pub fn griffin_lim(mel: &MelSpectrogram, iterations: usize) -> Result<AudioBuffer> {
    griffin_lim_traced(mel, iterations).map(|r| r.0)
}
