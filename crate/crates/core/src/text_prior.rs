//! Toy text encoder: per-token mel-frame means and log-durations, expanded to
//! a frame-level prior mean `μ`.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{self, ParamStore};
use crate::rng::Stream;

pub const TOKEN_EMBED_DIM: usize = 128;
pub const MAX_VOCAB: usize = 64;
/// Upper clamp on a single predicted token duration.
pub const MAX_TOKEN_FRAMES: usize = 1000;

const EMB: usize = 0;
const WH: usize = 1;
const BH: usize = 2;
const WMU: usize = 3;
const BMU: usize = 4;
const WDUR: usize = 5;
const BDUR: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence(Vec<usize>);

impl TokenSequence {
    pub fn new(tokens: Vec<usize>, vocab: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Input("token sequence is empty".into()));
        }
        if let Some(bad) = tokens.iter().find(|&&t| t >= vocab) {
            return Err(Error::Input(format!(
                "token id {bad} is outside the vocabulary of {vocab} symbols"
            )));
        }
        Ok(Self(tokens))
    }

    /// Parses `"3,1,4"` or `"3 1 4"`.
    pub fn parse(text: &str, vocab: usize) -> Result<Self> {
        let tokens = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Input(format!("token `{s}` is not a non-negative integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(tokens, vocab)
    }

    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct TextPriorCache {
    tokens: Vec<usize>,
    hidden: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct Encoded {
    /// tokens × channels
    pub token_mu: Array2<f64>,
    pub log_dur: Array1<f64>,
    pub cache: TextPriorCache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextPriorNet {
    vocab: usize,
    channels: usize,
    params: ParamStore,
}

impl TextPriorNet {
    pub fn new(vocab: usize, channels: usize, rng: &mut Stream) -> Result<Self> {
        if vocab == 0 || vocab > MAX_VOCAB {
            return Err(Error::Input(format!(
                "vocabulary size {vocab} must be in 1..={MAX_VOCAB}"
            )));
        }
        let d = TOKEN_EMBED_DIM;
        let mut params = ParamStore::new();
        params.push("token_embedding", nn::gaussian(vocab, d, 1.0, rng));
        params.push("w_hidden", nn::glorot(d, d, rng));
        params.push("b_hidden", Array2::zeros((1, d)));
        params.push("w_mu", nn::glorot(d, channels, rng));
        params.push("b_mu", Array2::zeros((1, channels)));
        params.push("w_duration", nn::glorot(d, 1, rng));
        params.push("b_duration", Array2::zeros((1, 1)));
        Ok(Self {
            vocab,
            channels,
            params,
        })
    }

    pub fn from_params(vocab: usize, channels: usize, params: ParamStore) -> Result<Self> {
        let d = TOKEN_EMBED_DIM;
        let expected = [
            ("token_embedding", vocab, d),
            ("w_hidden", d, d),
            ("b_hidden", 1, d),
            ("w_mu", d, channels),
            ("b_mu", 1, channels),
            ("w_duration", d, 1),
            ("b_duration", 1, 1),
        ];
        let got = params.shapes();
        if got.len() != expected.len()
            || got
                .iter()
                .zip(&expected)
                .any(|(g, e)| g.0 != e.0 || g.1 != e.1 || g.2 != e.2)
        {
            return Err(Error::Input(format!(
                "text prior parameters do not match topology: got {got:?}"
            )));
        }
        Ok(Self {
            vocab,
            channels,
            params,
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encode(&self, seq: &TokenSequence) -> Result<Encoded> {
        if let Some(bad) = seq.tokens().iter().find(|&&t| t >= self.vocab) {
            return Err(Error::Input(format!(
                "token id {bad} is outside the vocabulary of {} symbols",
                self.vocab
            )));
        }
        let p = &self.params;
        let emb = p.value(EMB);
        let mut x = Array2::zeros((seq.len(), TOKEN_EMBED_DIM));
        for (i, &tok) in seq.tokens().iter().enumerate() {
            x.row_mut(i).assign(&emb.row(tok));
        }
        let mut hidden = nn::affine(x.view(), p.value(WH), p.value(BH));
        hidden.mapv_inplace(f64::tanh);
        let token_mu = nn::affine(hidden.view(), p.value(WMU), p.value(BMU));
        let log_dur = nn::affine(hidden.view(), p.value(WDUR), p.value(BDUR)).column(0).to_owned();
        Ok(Encoded {
            token_mu,
            log_dur,
            cache: TextPriorCache {
                tokens: seq.tokens().to_vec(),
                hidden,
            },
        })
    }

    /// Accumulates parameter gradients given `dL/d token_mu` and `dL/d log_dur`.
    pub fn backward(&mut self, cache: &TextPriorCache, d_token_mu: &Array2<f64>, d_log_dur: &Array1<f64>) {
        let emb = self.params.value(EMB).clone();
        let mut x = Array2::zeros((cache.tokens.len(), TOKEN_EMBED_DIM));
        for (i, &tok) in cache.tokens.iter().enumerate() {
            x.row_mut(i).assign(&emb.row(tok));
        }
        let d_dur = d_log_dur.clone().insert_axis(ndarray::Axis(1));
        let dh_mu = self.affine_back(cache.hidden.view(), d_token_mu, WMU, BMU);
        let dh_dur = self.affine_back(cache.hidden.view(), &d_dur, WDUR, BDUR);
        let dz = nn::tanh_backward(&cache.hidden, &(dh_mu + dh_dur));
        let dx = self.affine_back(x.view(), &dz, WH, BH);
        let g = self.params.grad_mut(EMB);
        for (i, &tok) in cache.tokens.iter().enumerate() {
            g.row_mut(tok).scaled_add(1.0, &dx.row(i));
        }
    }

    fn affine_back(&mut self, x: ArrayView2<f64>, dy: &Array2<f64>, wi: usize, bi: usize) -> Array2<f64> {
        let w = self.params.value(wi).clone();
        let mut dw = std::mem::take(self.params.grad_mut(wi));
        let mut db = std::mem::take(self.params.grad_mut(bi));
        let dx = nn::affine_backward(x, &w, dy, &mut dw, &mut db);
        *self.params.grad_mut(wi) = dw;
        *self.params.grad_mut(bi) = db;
        dx
    }

    /// Frame-level prior mean at inference, using predicted durations.
    pub fn prior_mean(&self, seq: &TokenSequence) -> Result<(Array2<f64>, Vec<usize>)> {
        let enc = self.encode(seq)?;
        let durations = round_durations(&enc.log_dur);
        Ok((expand(&enc.token_mu, &durations)?, durations))
    }
}

/// Inference rounding: `max(1, round-half-up(exp(log_dur)))`.
pub fn round_durations(log_dur: &Array1<f64>) -> Vec<usize> {
    log_dur
        .iter()
        .map(|l| {
            let d = (l.exp() + 0.5).floor();
            if d.is_nan() {
                1
            } else {
                d.clamp(1.0, MAX_TOKEN_FRAMES as f64) as usize
            }
        })
        .collect()
}

/// Repeats row `i` of `token_mu` `durations[i]` times.
pub fn expand(token_mu: &Array2<f64>, durations: &[usize]) -> Result<Array2<f64>> {
    if durations.len() != token_mu.nrows() {
        return Err(Error::shape("duration expansion", &[token_mu.nrows()], &[durations.len()]));
    }
    if durations.iter().any(|&d| d == 0) {
        return Err(Error::Input("durations must be at least one frame".into()));
    }
    let frames: usize = durations.iter().sum();
    let mut out = Array2::zeros((frames, token_mu.ncols()));
    let mut f = 0;
    for (i, &d) in durations.iter().enumerate() {
        for _ in 0..d {
            out.row_mut(f).assign(&token_mu.row(i));
            f += 1;
        }
    }
    Ok(out)
}

/// Adjoint of [`expand`]: sums frame gradients back onto their tokens.
pub fn expand_backward(d_frames: &Array2<f64>, durations: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((durations.len(), d_frames.ncols()));
    let mut f = 0;
    for (i, &d) in durations.iter().enumerate() {
        let block = d_frames.slice(s![f..f + d, ..]);
        out.row_mut(i).assign(&block.sum_axis(ndarray::Axis(0)));
        f += d;
    }
    out
}

/// Mean over frames and channels of `½(target − μ)²`, with its gradient
/// with respect to `μ`.
pub fn prior_loss_with_grad(frame_mu: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if frame_mu.dim() != target.dim() {
        return Err(Error::shape("prior loss", frame_mu.shape(), target.shape()));
    }
    let n = frame_mu.len() as f64;
    let diff = frame_mu - target;
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff / n))
}

pub fn prior_loss(frame_mu: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    prior_loss_with_grad(frame_mu, target).map(|r| r.0)
}

/// Mean squared error between `log_dur` and `log(target)`, with gradient.
pub fn duration_loss_with_grad(log_dur: &Array1<f64>, target: &[usize]) -> Result<(f64, Array1<f64>)> {
    if log_dur.len() != target.len() {
        return Err(Error::shape("duration loss", &[log_dur.len()], &[target.len()]));
    }
    if target.iter().any(|&d| d == 0) {
        return Err(Error::Input("target durations must be positive".into()));
    }
    let n = target.len() as f64;
    let diff: Array1<f64> = log_dur
        .iter()
        .zip(target)
        .map(|(l, &d)| l - (d as f64).ln())
        .collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

pub fn duration_loss(log_dur: &Array1<f64>, target: &[usize]) -> Result<f64> {
    duration_loss_with_grad(log_dur, target).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn net() -> TextPriorNet {
        TextPriorNet::new(10, 6, &mut rng::stream(2)).unwrap()
    }

    #[test]
    fn zero_parameters_give_unit_durations() {
        let mut n = net();
        n.params_mut().zero_values();
        let seq = TokenSequence::new(vec![1, 2, 3], 10).unwrap();
        let enc = n.encode(&seq).unwrap();
        assert!(enc.token_mu.iter().all(|v| *v == 0.0));
        assert!(enc.log_dur.iter().all(|v| *v == 0.0));
        assert_eq!(round_durations(&enc.log_dur), vec![1, 1, 1]);
    }

    #[test]
    fn permuting_tokens_permutes_rows() {
        let n = net();
        let a = n.encode(&TokenSequence::new(vec![4, 7, 1], 10).unwrap()).unwrap();
        let b = n.encode(&TokenSequence::new(vec![1, 4, 7], 10).unwrap()).unwrap();
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            assert_eq!(a.token_mu.row(i), b.token_mu.row(j));
            assert_eq!(a.log_dur[i], b.log_dur[j]);
        }
    }

    #[test]
    fn vocabulary_enforced() {
        assert!(TokenSequence::new(vec![], 10).is_err());
        assert!(TokenSequence::new(vec![10], 10).is_err());
        assert!(TokenSequence::parse("1, 2 x", 10).is_err());
        assert_eq!(TokenSequence::parse("1,2 3", 10).unwrap().tokens(), &[1, 2, 3]);
        assert!(TextPriorNet::new(65, 4, &mut rng::stream(0)).is_err());
    }

    #[test]
    fn expand_examples() {
        let mu = array![[0.0], [1.0], [2.0]];
        let out = expand(&mu, &[2, 1, 3]).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![0.0, 0.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(expand(&mu, &[1, 1, 1]).unwrap(), mu);
        assert!(expand(&mu, &[1, 0, 1]).is_err());
        assert!(expand(&mu, &[1, 1]).is_err());
    }

    proptest! {
        #[test]
        fn expand_is_length_exact_and_order_preserving(durs in proptest::collection::vec(1usize..6, 1..12)) {
            let mu = Array2::from_shape_fn((durs.len(), 2), |(i, c)| (i * 10 + c) as f64);
            let out = expand(&mu, &durs).unwrap();
            prop_assert_eq!(out.nrows(), durs.iter().sum::<usize>());
            let mut f = 0;
            for (i, &d) in durs.iter().enumerate() {
                for _ in 0..d {
                    prop_assert_eq!(out.row(f), mu.row(i));
                    f += 1;
                }
            }
        }
    }

    #[test]
    fn prior_loss_examples() {
        let mu = array![[0.5, -1.0], [2.0, 0.0]];
        assert_eq!(prior_loss(&mu, &mu).unwrap(), 0.0);
        let shifted = &mu + 0.3;
        assert!((prior_loss(&mu, &shifted).unwrap() - 0.045).abs() < 1e-15);
        assert!(prior_loss(&mu, &array![[1.0, 2.0]]).is_err());

        let mut r = rng::stream(3);
        let a = nn::gaussian(7, 5, 1.0, &mut r);
        let b = nn::gaussian(7, 5, 1.0, &mut r);
        let mut naive = 0.0;
        for i in 0..7 {
            for j in 0..5 {
                naive += 0.5 * (b[[i, j]] - a[[i, j]]).powi(2);
            }
        }
        naive /= 35.0;
        assert!((prior_loss(&a, &b).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn duration_loss_examples() {
        let targets = [2, 3, 5];
        let exact: Array1<f64> = targets.iter().map(|&d| (d as f64).ln()).collect();
        assert_eq!(duration_loss(&exact, &targets).unwrap(), 0.0);
        let l = duration_loss(&array![2f64.ln()], &[4]).unwrap();
        assert!((l - 2f64.ln().powi(2)).abs() < 1e-15);
        assert!((l - 0.4805).abs() < 1e-4);
        assert!(duration_loss(&array![0.0], &[1, 2]).is_err());

        let mut r = rng::stream(5);
        let logs: Array1<f64> = (0..9).map(|_| rng::normal(&mut r)).collect();
        let t: Vec<usize> = (0..9).map(|_| r.random_range(1..8)).collect();
        let mut naive = 0.0;
        for i in 0..9 {
            naive += (logs[i] - (t[i] as f64).ln()).powi(2);
        }
        assert!((duration_loss(&logs, &t).unwrap() - naive / 9.0).abs() < 1e-12);
    }

    #[test]
    fn rounding_is_half_up_with_floor_one() {
        let l = array![0.0, 1.5f64.ln(), 2.49f64.ln(), (-5.0f64), 3.0f64.ln()];
        assert_eq!(round_durations(&l), vec![1, 2, 2, 1, 3]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut n = net();
        let seq = TokenSequence::new(vec![3, 0, 3, 9], 10).unwrap();
        let durs = [2, 1, 3, 2];
        let mut r = rng::stream(6);
        let target = nn::gaussian(8, 6, 1.0, &mut r);
        let tdur = [3, 1, 2, 4];
        let objective = |n: &TextPriorNet| {
            let enc = n.encode(&seq).unwrap();
            let mu = expand(&enc.token_mu, &durs).unwrap();
            prior_loss(&mu, &target).unwrap() + duration_loss(&enc.log_dur, &tdur).unwrap()
        };
        n.params_mut().zero_grad();
        let enc = n.encode(&seq).unwrap();
        let mu = expand(&enc.token_mu, &durs).unwrap();
        let (_, d_mu) = prior_loss_with_grad(&mu, &target).unwrap();
        let (_, d_dur) = duration_loss_with_grad(&enc.log_dur, &tdur).unwrap();
        n.backward(&enc.cache, &expand_backward(&d_mu, &durs), &d_dur);
        let h = 1e-5;
        for g in 0..n.params().len() {
            let (rows, cols) = n.params().value(g).dim();
            for _ in 0..10 {
                let mut idx = (r.random_range(0..rows), r.random_range(0..cols));
                if g == EMB {
                    idx.0 = [0, 3, 9][r.random_range(0..3)];
                }
                let analytic = n.params().get(g).grad[idx];
                let mut plus = n.clone();
                plus.params_mut().get_mut(g).value[idx] += h;
                let mut minus = n.clone();
                minus.params_mut().get_mut(g).value[idx] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-7);
                assert!(rel < 1e-4, "{}: {analytic} vs {fd}", n.params().get(g).name);
            }
        }
    }
}
