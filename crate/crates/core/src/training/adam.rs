//! Adam with bias correction (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<_> = params.iter().map(|p| Array2::zeros(p.value.dim())).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update from the gradients currently stored in `params`. Nothing is
/// modified if any gradient is non-finite.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState, lr: f64) -> Result<()> {
    if state.first.len() != params.len() {
        return Err(Error::shape("adam state", &[params.len()], &[state.first.len()]));
    }
    for p in params.iter() {
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                group: p.name.clone(),
            });
        }
    }
    state.step += 1;
    let bc1 = 1.0 - BETA1.powi(state.step as i32);
    let bc2 = 1.0 - BETA2.powi(state.step as i32);
    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        Zip::from(&mut p.value)
            .and(&p.grad)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            });
    }
    Ok(())
}
