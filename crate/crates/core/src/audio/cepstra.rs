use std::f64::consts::{LN_10, PI};

use ndarray::{s, Array2, Axis};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

use super::mel::MelSpectrogram;

/// Kept coefficients `c₁ … c₁₃`; `c₀` (overall level) is dropped.
pub const CEPSTRAL_COEFFS: usize = 13;

/// Orthonormal DCT-II through an N-point FFT of the even/odd reordered
/// input.
pub fn dct_ortho(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| {
            let src = if i < n.div_ceil(2) { 2 * i } else { 2 * (n - 1 - i) + 1 };
            Complex64::new(x[src], 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut v);
    let nf = n as f64;
    v.iter()
        .enumerate()
        .map(|(k, vk)| {
            let c = (Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * nf)) * vk).re;
            c * if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() }
        })
        .collect()
}

/// Inverse of [`dct_ortho`].
pub fn idct_ortho(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    let raw = |k: usize| {
        if k == 0 {
            c[0] * nf.sqrt()
        } else if k < n {
            c[k] * (nf / 2.0).sqrt()
        } else {
            0.0
        }
    };
    let mut v: Vec<Complex64> = (0..n)
        .map(|k| {
            Complex64::from_polar(1.0, PI * k as f64 / (2.0 * nf))
                * Complex64::new(raw(k), -if k == 0 { 0.0 } else { raw(n - k) })
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut v);
    let mut x = vec![0.0; n];
    for (i, vi) in v.iter().enumerate() {
        let dst = if i < n.div_ceil(2) { 2 * i } else { 2 * (n - 1 - i) + 1 };
        x[dst] = vi.re / nf;
    }
    x
}

/// Frames × 13 mel-cepstral coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CepstraMatrix(Array2<f64>);

impl CepstraMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.ncols() != CEPSTRAL_COEFFS {
            return Err(Error::shape("cepstra", &[CEPSTRAL_COEFFS], &[values.ncols()]));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("cepstra must be finite".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn frames(&self) -> usize {
        self.0.nrows()
    }

    pub fn truncated(&self, frames: usize) -> Self {
        Self(self.0.slice(s![..frames.min(self.frames()), ..]).to_owned())
    }
}

pub fn mel_cepstra(mel: &MelSpectrogram) -> CepstraMatrix {
    let v = mel.values();
    let mut out = Array2::zeros((v.nrows(), CEPSTRAL_COEFFS));
    for (row, mut dst) in v.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let c = dct_ortho(&row.to_vec());
        for k in 0..CEPSTRAL_COEFFS {
            dst[k] = c[k + 1];
        }
    }
    CepstraMatrix(out)
}

/// Mean over frames of `(10/ln 10)·sqrt(2·Σₖ(aₖ − bₖ)²)`, in dB.
pub fn mcd(a: &CepstraMatrix, b: &CepstraMatrix) -> Result<f64> {
    if a.frames() != b.frames() {
        return Err(Error::shape("mcd frames", &[a.frames()], &[b.frames()]));
    }
    if a.frames() == 0 {
        return Err(Error::Input("mcd of an empty sequence".into()));
    }
    let k = 10.0 / LN_10;
    let total: f64 = a
        .0
        .axis_iter(Axis(0))
        .zip(b.0.axis_iter(Axis(0)))
        .map(|(ra, rb)| {
            let sq: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
            k * (2.0 * sq).sqrt()
        })
        .sum();
    Ok(total / a.frames() as f64)
}

/// [`mcd`] after trimming both sequences to the shorter length.
pub fn mcd_trimmed(a: &CepstraMatrix, b: &CepstraMatrix) -> Result<f64> {
    if a.frames() != b.frames() {
        let n = a.frames().min(b.frames());
        log::warn!("mcd: trimming {} and {} frames to {n}", a.frames(), b.frames());
        return mcd(&a.truncated(n), &b.truncated(n));
    }
    mcd(a, b)
}
