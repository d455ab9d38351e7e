use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

use super::{HOP, N_BINS, N_FFT};

/// Complex half spectrum, frames × `N_BINS`.
pub type Spectrogram = Array2<Complex64>;

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Frames produced for `samples` samples under centered padding.
pub fn frame_count(samples: usize) -> usize {
    1 + samples / HOP
}

pub(crate) struct Stft {
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub(crate) fn new() -> Self {
        let mut planner = FftPlanner::new();
        Self {
            window: hann_window(N_FFT),
            forward: planner.plan_fft_forward(N_FFT),
            inverse: planner.plan_fft_inverse(N_FFT),
        }
    }

    /// Frames of an already padded signal: frame `m` covers
    /// `[m·HOP, m·HOP + N_FFT)`.
    pub(crate) fn analyze(&self, padded: &[f64]) -> Spectrogram {
        let frames = if padded.len() < N_FFT {
            0
        } else {
            1 + (padded.len() - N_FFT) / HOP
        };
        let mut out = Array2::zeros((frames, N_BINS));
        let mut buf = vec![Complex64::new(0.0, 0.0); N_FFT];
        for m in 0..frames {
            let seg = &padded[m * HOP..m * HOP + N_FFT];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new(x * w, 0.0);
            }
            self.forward.process(&mut buf);
            for (o, b) in out.row_mut(m).iter_mut().zip(&buf) {
                *o = *b;
            }
        }
        out
    }

    /// Least-squares signal of length `(frames − 1)·HOP + N_FFT` whose
    /// windowed frames best match the spectrogram. Samples no window covers
    /// are zero.
    pub(crate) fn synthesize(&self, spec: &Spectrogram) -> Vec<f64> {
        let frames = spec.nrows();
        let len = (frames.max(1) - 1) * HOP + N_FFT;
        let mut num = vec![0.0; len];
        let mut den = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); N_FFT];
        for m in 0..frames {
            let row = spec.row(m);
            for k in 0..N_BINS {
                buf[k] = row[k];
            }
            for k in 1..N_FFT - N_BINS + 1 {
                buf[N_FFT - k] = row[k].conj();
            }
            self.inverse.process(&mut buf);
            for (i, (b, &w)) in buf.iter().zip(&self.window).enumerate() {
                num[m * HOP + i] += w * b.re / N_FFT as f64;
                den[m * HOP + i] += w * w;
            }
        }
        num.iter()
            .zip(&den)
            .map(|(n, d)| if *d > 1e-12 { n / d } else { 0.0 })
            .collect()
    }
}

pub(crate) fn reflect_pad(x: &[f64], pad: usize) -> Result<Vec<f64>> {
    if x.len() <= pad {
        return Err(Error::Input(format!(
            "signal of {} samples is too short for reflect padding of {pad}",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len() + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    let n = x.len();
    out.extend((1..=pad).map(|i| x[n - 1 - i]));
    Ok(out)
}

/// Centered short-time Fourier transform with reflect padding.
pub fn stft(samples: &[f64]) -> Result<Spectrogram> {
    if samples.len() < N_FFT {
        return Err(Error::Input(format!(
            "signal of {} samples is shorter than one {N_FFT}-sample window",
            samples.len()
        )));
    }
    let padded = reflect_pad(samples, N_FFT / 2)?;
    Ok(Stft::new().analyze(&padded))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_matches_centered_framing() {
        for n in [1024, 1025, 4000, 16_000] {
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
            assert_eq!(stft(&x).unwrap().nrows(), frame_count(n));
            assert_eq!(frame_count(n), 1 + n / 256);
        }
        assert!(stft(&[0.0; 100]).is_err());
    }

    #[test]
    fn reflect_padding_mirrors_without_the_edge() {
        assert_eq!(
            reflect_pad(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(),
            vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]
        );
    }

    #[test]
    fn synthesis_inverts_analysis() {
        let x: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
        let s = Stft::new();
        let y = s.synthesize(&s.analyze(&x));
        // near the ends the window overlap sum is tiny and amplifies
        // round-off; the interior is what synthesis keeps after cropping
        for i in N_FFT / 2..y.len() - N_FFT / 2 {
            assert!((x[i] - y[i]).abs() < 1e-12, "{i}");
        }
    }

    #[test]
    fn hann_is_periodic() {
        let w = hann_window(8);
        assert_eq!(w[0], 0.0);
        assert!((w[4] - 1.0).abs() < 1e-15);
        assert!((w[1] - w[7]).abs() < 1e-15);
    }
}
