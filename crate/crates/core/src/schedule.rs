//! Linear noise schedule and the closed-form forward process.
//!
//! The forward SDE `dX = ½ Σ⁻¹(μ − X) β_t dt + √β_t dW` is an
//! Ornstein–Uhlenbeck process per coordinate, so its marginals given `X_0`
//! are Gaussian with
//!
//! ```text
//! mean = μ + (x0 − μ)·exp(−B(t)/(2σ))
//! var  = σ·(1 − exp(−B(t)/σ))
//! ```
//!
//! where `B(t) = ∫₀ᵗ β_s ds`.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// A state of the diffusion process: frames × channels.
pub type State = Array2<f64>;

/// Terminal time of the forward process.
pub const HORIZON: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSchedule {
    pub beta0: f64,
    pub beta1: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            beta0: 0.05,
            beta1: 20.0,
        }
    }
}

/// Terminal law `N(μ, diag σ)` of the forward process, stored elementwise
/// with the same shape as the state.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorField {
    mu: State,
    sigma: State,
}

impl PriorField {
    pub fn new(mu: State, sigma: State) -> Result<Self> {
        if mu.dim() != sigma.dim() {
            return Err(Error::shape("prior sigma", mu.shape(), sigma.shape()));
        }
        if let Some(bad) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Invariant(format!(
                "prior variance entries must be positive and finite, found {bad}"
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Invariant("prior mean must be finite".into()));
        }
        Ok(Self { mu, sigma })
    }

    /// Prior with the given mean and identity covariance.
    pub fn with_unit_variance(mu: State) -> Self {
        let sigma = State::ones(mu.dim());
        Self { mu, sigma }
    }

    /// `N(0, I)` over a frames × channels state.
    pub fn standard(frames: usize, channels: usize) -> Self {
        Self::with_unit_variance(State::zeros((frames, channels)))
    }

    pub fn mu(&self) -> &State {
        &self.mu
    }

    pub fn sigma(&self) -> &State {
        &self.sigma
    }

    pub fn dim(&self) -> (usize, usize) {
        self.mu.dim()
    }

    pub(crate) fn check_state(&self, context: &'static str, x: &State) -> Result<()> {
        if x.dim() != self.mu.dim() {
            return Err(Error::shape(context, self.mu.shape(), x.shape()));
        }
        Ok(())
    }
}

/// Closed-form forward marginal moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    pub mean: State,
    pub var: State,
}

impl NoiseSchedule {
    pub fn new(beta0: f64, beta1: f64) -> Result<Self> {
        for (what, v) in [("beta0", beta0), ("beta1", beta1)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    what,
                    value: v,
                    domain: "(0, inf)",
                });
            }
        }
        Ok(Self { beta0, beta1 })
    }

    pub fn horizon(&self) -> f64 {
        HORIZON
    }

    fn check_time(t: f64) -> Result<()> {
        if (0.0..=HORIZON).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "t",
                value: t,
                domain: "[0, 1]",
            })
        }
    }

    pub fn beta(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.beta0 + t * (self.beta1 - self.beta0))
    }

    /// `B(t) = beta0·t + (beta1 − beta0)·t²/2`.
    pub fn cum_beta(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.beta0 * t + 0.5 * (self.beta1 - self.beta0) * t * t)
    }

    pub fn forward_marginal(&self, prior: &PriorField, x0: &State, t: f64) -> Result<Marginal> {
        prior.check_state("forward marginal", x0)?;
        let b = self.cum_beta(t)?;
        let mut mean = State::zeros(x0.dim());
        let mut var = State::zeros(x0.dim());
        Zip::from(&mut mean)
            .and(&mut var)
            .and(x0)
            .and(&prior.mu)
            .and(&prior.sigma)
            .for_each(|m, v, &x, &mu, &s| {
                *m = mu + (x - mu) * (-b / (2.0 * s)).exp();
                *v = -s * (-b / s).exp_m1();
            });
        Ok(Marginal { mean, var })
    }

    /// Exact draw of `X_t | X_0 = x0`.
    pub fn sample_forward(
        &self,
        prior: &PriorField,
        x0: &State,
        t: f64,
        rng: &mut Stream,
    ) -> Result<State> {
        let Marginal { mut mean, var } = self.forward_marginal(prior, x0, t)?;
        Zip::from(&mut mean).and(&var).for_each(|m, &v| {
            let z = rng::normal(rng);
            *m += v.sqrt() * z;
        });
        Ok(mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::default()
    }

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut acc = 0.5 * (f(a) + f(b));
        for i in 1..panels {
            acc += f(a + i as f64 * h);
        }
        acc * h
    }

    #[test]
    fn beta_endpoints_and_midpoint() {
        let s = sched();
        assert_eq!(s.beta(0.0).unwrap(), 0.05);
        assert_eq!(s.beta(1.0).unwrap(), 20.0);
        assert!((s.beta(0.5).unwrap() - 10.025).abs() < 1e-12);
        assert!((s.beta(0.5).unwrap() - 0.5 * (0.05 + 20.0)).abs() < 1e-12);
    }

    #[test]
    fn time_outside_horizon_is_a_domain_error() {
        let s = sched();
        assert!(matches!(s.beta(-1e-9), Err(Error::Domain { .. })));
        assert!(matches!(s.cum_beta(1.0 + 1e-9), Err(Error::Domain { .. })));
        assert!(s.beta(f64::NAN).is_err());
    }

    #[test]
    fn cum_beta_matches_trapezoid_quadrature() {
        let s = sched();
        assert_eq!(s.cum_beta(0.0).unwrap(), 0.0);
        for (t, expected) in [(1.0, 10.025), (0.5, 2.51875)] {
            let beta = |u: f64| s.beta(u).unwrap();
            let quad = trapezoid(beta, 0.0, t, 1_000_000);
            assert!((quad - expected).abs() < 1e-10, "quadrature {quad}");
            assert!((s.cum_beta(t).unwrap() - quad).abs() < 1e-10);
        }
        for t in [0.1, 0.25, 0.77, 0.93] {
            let quad = trapezoid(|u| s.beta(u).unwrap(), 0.0, t, 1_000_000);
            assert!((s.cum_beta(t).unwrap() - quad).abs() < 1e-10);
        }
    }

    #[test]
    fn cum_beta_strictly_increasing() {
        let s = sched();
        let mut prev = s.cum_beta(0.0).unwrap();
        for i in 1..=1000 {
            let b = s.cum_beta(i as f64 / 1000.0).unwrap();
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn marginal_at_zero_is_the_data_point() {
        let prior = PriorField::standard(2, 3);
        let x0 = array![[1.0, -2.0, 0.5], [3.0, 0.0, -1.0]];
        let m = sched().forward_marginal(&prior, &x0, 0.0).unwrap();
        assert_eq!(m.mean, x0);
        assert!(m.var.iter().all(|&v| v == 0.0));
        let mut rng = rng::stream(1);
        assert_eq!(sched().sample_forward(&prior, &x0, 0.0, &mut rng).unwrap(), x0);
    }

    #[test]
    fn marginal_reference_values() {
        let prior = PriorField::standard(1, 1);
        let x0 = array![[1.0]];
        let m = sched().forward_marginal(&prior, &x0, 0.5).unwrap();
        assert!((m.mean[[0, 0]] - (-1.259375f64).exp()).abs() < 1e-15);
        assert!((m.mean[[0, 0]] - 0.2839).abs() < 1e-4);
        assert!((m.var[[0, 0]] - 0.9194).abs() < 1e-4);

        let m = sched().forward_marginal(&prior, &x0, 1.0).unwrap();
        // e^{-B(1)/2} with B(1) = 10.025
        assert!((m.mean[[0, 0]] - 6.6535e-3).abs() < 1e-6);
        assert!((1.0 - m.var[[0, 0]] - 4.4270e-5).abs() < 1e-8);
    }

    #[test]
    fn variance_grows_monotonically_and_stays_below_sigma() {
        let sigma = array![[0.5, 2.0]];
        let prior = PriorField::new(State::zeros((1, 2)), sigma.clone()).unwrap();
        let x0 = array![[1.0, 1.0]];
        let mut prev = State::zeros((1, 2));
        for i in 1..=200 {
            let t = i as f64 / 200.0;
            let m = sched().forward_marginal(&prior, &x0, t).unwrap();
            for c in 0..2 {
                assert!(m.var[[0, c]] > prev[[0, c]]);
                assert!(m.var[[0, c]] <= sigma[[0, c]]);
            }
            prev = m.var;
        }
    }

    #[test]
    fn invalid_prior_rejected() {
        let bad = PriorField::new(State::zeros((1, 2)), array![[1.0, 0.0]]);
        assert!(matches!(bad, Err(Error::Invariant(_))));
        let bad = PriorField::new(State::zeros((1, 2)), State::ones((2, 1)));
        assert!(matches!(bad, Err(Error::Shape { .. })));
        let prior = PriorField::standard(1, 2);
        assert!(sched()
            .forward_marginal(&prior, &State::zeros((1, 3)), 0.5)
            .is_err());
    }

    #[test]
    fn sample_forward_is_deterministic_per_stream() {
        let prior = PriorField::standard(3, 4);
        let x0 = State::from_elem((3, 4), 0.7);
        let a = sched()
            .sample_forward(&prior, &x0, 0.3, &mut rng::stream(42))
            .unwrap();
        let b = sched()
            .sample_forward(&prior, &x0, 0.3, &mut rng::stream(42))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_forward_moments_match_closed_form() {
        let prior = PriorField::standard(1, 1);
        let x0 = array![[1.0]];
        let m = sched().forward_marginal(&prior, &x0, 0.5).unwrap();
        let (mean, var) = (m.mean[[0, 0]], m.var[[0, 0]]);
        let n = 100_000;
        let mut rng = rng::stream(5);
        let draws: Vec<f64> = (0..n)
            .map(|_| sched().sample_forward(&prior, &x0, 0.5, &mut rng).unwrap()[[0, 0]])
            .collect();
        let emp_mean = draws.iter().sum::<f64>() / n as f64;
        let emp_var = draws.iter().map(|x| (x - emp_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = (var / n as f64).sqrt();
        let se_var = var * (2.0 / (n - 1) as f64).sqrt();
        assert!((emp_mean - mean).abs() < 4.0 * se_mean);
        assert!((emp_var - var).abs() < 4.0 * se_var);
    }

    #[test]
    fn stationary_law_is_preserved() {
        // x0 ~ N(μ, σ) pushed through the exact forward kernel stays N(μ, σ).
        let mu = array![[0.5, -1.0]];
        let sigma = array![[2.0, 0.3]];
        let prior = PriorField::new(mu.clone(), sigma.clone()).unwrap();
        let n = 20_000;
        let mut rng = rng::stream(11);
        for t in [0.1, 0.5, 1.0] {
            let mut sum = [0.0; 2];
            let mut sq = [0.0; 2];
            for _ in 0..n {
                let x0 = State::from_shape_fn((1, 2), |(_, c)| {
                    mu[[0, c]] + sigma[[0, c]].sqrt() * rng::normal(&mut rng)
                });
                let xt = sched().sample_forward(&prior, &x0, t, &mut rng).unwrap();
                for c in 0..2 {
                    sum[c] += xt[[0, c]];
                    sq[c] += xt[[0, c]] * xt[[0, c]];
                }
            }
            for c in 0..2 {
                let m = sum[c] / n as f64;
                let v = sq[c] / n as f64 - m * m;
                let s = sigma[[0, c]];
                assert!((m - mu[[0, c]]).abs() < 4.0 * (s / n as f64).sqrt());
                assert!((v - s).abs() < 4.0 * s * (2.0 / n as f64).sqrt());
            }
        }
    }
}
