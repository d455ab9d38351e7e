//! Parameter storage and the dense-layer primitives the toy networks are
//! built from. Gradients are computed by explicit reverse passes over cached
//! activations.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

/// Named parameter tensors, each paired with a gradient slot, kept in
/// declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        let grad = Array2::zeros(value.dim());
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, idx: usize) -> &Array2<f64> {
        &self.params[idx].value
    }

    pub fn grad_mut(&mut self, idx: usize) -> &mut Array2<f64> {
        &mut self.params[idx].grad
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.params[idx]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Sets every parameter to zero.
    pub fn zero_values(&mut self) {
        for p in &mut self.params {
            p.value.fill(0.0);
        }
    }

    /// All values flattened in declaration order, row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        for p in &self.params {
            out.extend(p.value.iter().copied());
        }
        out
    }

    pub fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_values() {
            return Err(Error::shape("parameter store", &[self.num_values()], &[values.len()]));
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.value.len();
            for (dst, src) in p.value.iter_mut().zip(&values[offset..offset + n]) {
                *dst = *src;
            }
            offset += n;
        }
        Ok(())
    }

    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.nrows(), p.value.ncols()))
            .collect()
    }
}

/// Glorot-uniform matrix, `±sqrt(6/(fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, rng: &mut Stream) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

/// Standard normal matrix scaled by `scale`.
pub fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut Stream) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng::normal(rng))
}

/// `x·w + b` with `b` stored as a 1 × n row.
pub fn affine(x: ArrayView2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += &b.row(0);
    y
}

/// Accumulates the weight and bias gradients of `y = x·w + b` and returns
/// `dL/dx`.
pub fn affine_backward(
    x: ArrayView2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    *dw += &x.t().dot(dy);
    let col_sums: Array1<f64> = dy.sum_axis(Axis(0));
    db.row_mut(0).scaled_add(1.0, &col_sums);
    dy.dot(&w.t())
}

/// `dL/dz` for `h = tanh(z)` given `dL/dh` and the activation `h`.
pub fn tanh_backward(h: &Array2<f64>, dh: &Array2<f64>) -> Array2<f64> {
    let mut dz = dh.clone();
    dz.zip_mut_with(h, |d, &a| *d *= 1.0 - a * a);
    dz
}

/// Worst relative error between accumulated and central-difference
/// gradients within one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupCheck {
    pub group: String,
    pub max_rel_error: f64,
}

/// Probes `probes` random entries of every group of a model whose gradient
/// slots already hold `d objective / d params`.
pub fn gradient_check<M: Clone>(
    model: &M,
    params: impl Fn(&M) -> &ParamStore,
    params_mut: impl Fn(&mut M) -> &mut ParamStore,
    objective: impl Fn(&M) -> f64,
    probes: usize,
    rng: &mut Stream,
) -> Vec<GroupCheck> {
    let h = 1e-5;
    let store = params(model);
    (0..store.len())
        .map(|g| {
            let (rows, cols) = store.value(g).dim();
            let mut worst: f64 = 0.0;
            for _ in 0..probes {
                let idx = (rng.random_range(0..rows), rng.random_range(0..cols));
                let analytic = store.get(g).grad[idx];
                let mut plus = model.clone();
                params_mut(&mut plus).get_mut(g).value[idx] += h;
                let mut minus = model.clone();
                params_mut(&mut minus).get_mut(g).value[idx] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-7);
                worst = worst.max(rel);
            }
            GroupCheck {
                group: store.get(g).name.clone(),
                max_rel_error: worst,
            }
        })
        .collect()
}
