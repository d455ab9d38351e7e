//! Trainable toy score network.
//!
//! Each frame is scored independently by a two-hidden-layer tanh MLP over
//! `[x ⊕ μ ⊕ time(t) ⊕ speaker ⊕ emotion(label)]`. The emotion embedding
//! table is a parameter group like any other; the null token owns row 7.

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::conditioning::{
    table_row, Conditioning, Emotion, SpeakerEmbedding, EMOTION_DIM, EMOTION_ROWS, SPEAKER_DIM,
};
use crate::error::{Error, Result};
use crate::nn::{self, ParamStore};
use crate::rng::Stream;
use crate::schedule::{PriorField, State};

use super::{time_embedding, ScoreField, TIME_EMBED_DIM};

pub const HIDDEN_WIDTH: usize = 128;

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;
const W3: usize = 4;
const B3: usize = 5;
const EMO: usize = 6;

/// Per-row conditioning for a batched forward pass.
#[derive(Clone, Debug)]
pub struct NetInputRow<'a> {
    pub t: f64,
    pub speaker: &'a SpeakerEmbedding,
    pub label: Option<Emotion>,
}

/// Activations kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct NetCache {
    input: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyScoreNet {
    state_dim: usize,
    hidden: usize,
    params: ParamStore,
}

impl ToyScoreNet {
    pub fn new(state_dim: usize, rng: &mut Stream) -> Self {
        Self::with_hidden(state_dim, HIDDEN_WIDTH, rng)
    }

    pub fn with_hidden(state_dim: usize, hidden: usize, rng: &mut Stream) -> Self {
        let input = Self::input_dim_for(state_dim);
        let mut params = ParamStore::new();
        params.push("w1", nn::glorot(input, hidden, rng));
        params.push("b1", Array2::zeros((1, hidden)));
        params.push("w2", nn::glorot(hidden, hidden, rng));
        params.push("b2", Array2::zeros((1, hidden)));
        params.push("w3", nn::glorot(hidden, state_dim, rng));
        params.push("b3", Array2::zeros((1, state_dim)));
        params.push("emotion_table", nn::gaussian(EMOTION_ROWS, EMOTION_DIM, 0.02, rng));
        Self {
            state_dim,
            hidden,
            params,
        }
    }

    /// Rebuilds a network from stored parameters, validating every shape.
    pub fn from_params(state_dim: usize, hidden: usize, params: ParamStore) -> Result<Self> {
        let input = Self::input_dim_for(state_dim);
        let expected = [
            ("w1", input, hidden),
            ("b1", 1, hidden),
            ("w2", hidden, hidden),
            ("b2", 1, hidden),
            ("w3", hidden, state_dim),
            ("b3", 1, state_dim),
            ("emotion_table", EMOTION_ROWS, EMOTION_DIM),
        ];
        let got = params.shapes();
        if got.len() != expected.len()
            || got
                .iter()
                .zip(&expected)
                .any(|(g, e)| g.0 != e.0 || g.1 != e.1 || g.2 != e.2)
        {
            return Err(Error::Input(format!(
                "score net parameters do not match topology: got {got:?}"
            )));
        }
        Ok(Self {
            state_dim,
            hidden,
            params,
        })
    }

    pub fn input_dim_for(state_dim: usize) -> usize {
        2 * state_dim + TIME_EMBED_DIM + SPEAKER_DIM + EMOTION_DIM
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Embedding row for a label (row 7 for the null token).
    pub fn emotion_embedding(&self, label: Option<Emotion>) -> Vec<f64> {
        self.params.value(EMO).row(table_row(label)).to_vec()
    }

    /// Batched forward pass. Row `i` of `x` and `mu` is conditioned on
    /// `rows[i]`.
    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mu: ArrayView2<f64>,
        rows: &[NetInputRow<'_>],
    ) -> Result<(Array2<f64>, NetCache)> {
        let n = x.nrows();
        if x.ncols() != self.state_dim {
            return Err(Error::shape("score net state", &[n, self.state_dim], x.shape()));
        }
        if mu.dim() != x.dim() {
            return Err(Error::shape("score net prior mean", x.shape(), mu.shape()));
        }
        if rows.len() != n {
            return Err(Error::shape("score net conditioning rows", &[n], &[rows.len()]));
        }
        let d = self.state_dim;
        let emo_off = 2 * d + TIME_EMBED_DIM + SPEAKER_DIM;
        let mut input = Array2::zeros((n, Self::input_dim_for(d)));
        let table = self.params.value(EMO);
        let mut table_rows = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            let mut dst = input.row_mut(i);
            dst.slice_mut(s![..d]).assign(&x.row(i));
            dst.slice_mut(s![d..2 * d]).assign(&mu.row(i));
            let temb = time_embedding(row.t)?;
            for (o, v) in dst.slice_mut(s![2 * d..2 * d + TIME_EMBED_DIM]).iter_mut().zip(temb) {
                *o = v;
            }
            for (o, v) in dst
                .slice_mut(s![2 * d + TIME_EMBED_DIM..emo_off])
                .iter_mut()
                .zip(row.speaker.as_slice())
            {
                *o = *v;
            }
            let r = table_row(row.label);
            dst.slice_mut(s![emo_off..]).assign(&table.row(r));
            table_rows.push(r);
        }
        let p = &self.params;
        let mut h1 = nn::affine(input.view(), p.value(W1), p.value(B1));
        h1.mapv_inplace(f64::tanh);
        let mut h2 = nn::affine(h1.view(), p.value(W2), p.value(B2));
        h2.mapv_inplace(f64::tanh);
        let out = nn::affine(h2.view(), p.value(W3), p.value(B3));
        Ok((
            out,
            NetCache {
                input,
                h1,
                h2,
                rows: table_rows,
            },
        ))
    }

    /// Accumulates parameter gradients for `dL/d(output)`.
    pub fn backward(&mut self, cache: &NetCache, d_out: &Array2<f64>) {
        let (w1, w2, w3) = (
            self.params.value(W1).clone(),
            self.params.value(W2).clone(),
            self.params.value(W3).clone(),
        );
        let dh2 = self.affine_back(cache.h2.view(), &w3, d_out, W3, B3);
        let dz2 = nn::tanh_backward(&cache.h2, &dh2);
        let dh1 = self.affine_back(cache.h1.view(), &w2, &dz2, W2, B2);
        let dz1 = nn::tanh_backward(&cache.h1, &dh1);
        let dinput = self.affine_back(cache.input.view(), &w1, &dz1, W1, B1);
        let emo_off = 2 * self.state_dim + TIME_EMBED_DIM + SPEAKER_DIM;
        let demb = dinput.slice(s![.., emo_off..]);
        let table_grad = self.params.grad_mut(EMO);
        for (i, &r) in cache.rows.iter().enumerate() {
            table_grad.row_mut(r).scaled_add(1.0, &demb.row(i));
        }
    }

    fn affine_back(
        &mut self,
        x: ArrayView2<f64>,
        w: &Array2<f64>,
        dy: &Array2<f64>,
        wi: usize,
        bi: usize,
    ) -> Array2<f64> {
        let mut dw = std::mem::take(self.params.grad_mut(wi));
        let mut db = std::mem::take(self.params.grad_mut(bi));
        let dx = nn::affine_backward(x, w, dy, &mut dw, &mut db);
        *self.params.grad_mut(wi) = dw;
        *self.params.grad_mut(bi) = db;
        dx
    }

    /// Mean output for a full state under one conditioning context.
    pub fn predict(&self, x: &State, mu: &State, t: f64, cond: &Conditioning) -> Result<State> {
        let rows: Vec<_> = (0..x.nrows())
            .map(|_| NetInputRow {
                t,
                speaker: &cond.speaker,
                label: cond.emotion,
            })
            .collect();
        Ok(self.forward(x.view(), mu.view(), &rows)?.0)
    }
}

impl ScoreField for ToyScoreNet {
    fn score(&self, x: &State, prior: &PriorField, t: f64, cond: &Conditioning) -> Result<State> {
        prior.check_state("score net", x)?;
        self.predict(x, prior.mu(), t, cond)
    }

    /// One stacked forward pass over all states.
    fn score_batch(&self, xs: &[State], prior: &PriorField, t: f64, cond: &Conditioning) -> Result<Vec<State>> {
        for x in xs {
            prior.check_state("score net", x)?;
        }
        let frames = prior.dim().0;
        let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
        let mu_views = vec![prior.mu().view(); xs.len()];
        if views.is_empty() {
            return Ok(Vec::new());
        }
        let x = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Invariant(e.to_string()))?;
        let mu = ndarray::concatenate(Axis(0), &mu_views).map_err(|e| Error::Invariant(e.to_string()))?;
        let rows: Vec<_> = (0..x.nrows())
            .map(|_| NetInputRow {
                t,
                speaker: &cond.speaker,
                label: cond.emotion,
            })
            .collect();
        let out = self.forward(x.view(), mu.view(), &rows)?.0;
        Ok((0..xs.len())
            .map(|i| out.slice(s![i * frames..(i + 1) * frames, ..]).to_owned())
            .collect())
    }
}

impl NetCache {
    pub fn batch_rows(&self) -> usize {
        self.input.len_of(Axis(0))
    }
}
