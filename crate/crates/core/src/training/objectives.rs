//! Training objectives: denoising score matching, null-label dropout and the
//! frozen speaker-feature L1 loss.

use ndarray::{s, Array2, Zip};
use rand::Rng;

use crate::conditioning::{Conditioning, Emotion};
use crate::error::{Error, Result};
use crate::nn;
use crate::rng::{self, Stream};
use crate::schedule::{NoiseSchedule, PriorField, State, HORIZON};
use crate::score::{NetInputRow, ToyScoreNet};

/// Lower end of the training time range.
pub const T_MIN_TRAIN: f64 = 1e-5;

const FEATURE_HIDDEN: usize = 64;
const FEATURE_OUT: usize = 32;
const FEATURE_SEED: u64 = 0xFEA7_0001;

/// Replaces the emotion with the null token with probability `prob`. The
/// speaker is never dropped.
pub fn apply_null_dropout(cond: &Conditioning, prob: f64, rng: &mut Stream) -> Conditioning {
    Conditioning {
        speaker: cond.speaker.clone(),
        emotion: drop_label(cond.emotion, prob, rng),
    }
}

pub(crate) fn drop_label(label: Option<Emotion>, prob: f64, rng: &mut Stream) -> Option<Emotion> {
    let u: f64 = rng.random();
    if u < prob {
        None
    } else {
        label
    }
}

/// One noised training element: `x_t` drawn from the forward kernel at
/// time `t`, with the exact conditional moments that define its target.
#[derive(Clone, Debug)]
pub struct NoisedElement {
    pub t: f64,
    pub x_t: State,
    pub mean_t: State,
    pub var_t: State,
}

impl NoisedElement {
    pub fn draw(schedule: &NoiseSchedule, prior: &PriorField, x0: &State, rng: &mut Stream) -> Result<Self> {
        let t = rng.random_range(T_MIN_TRAIN..=HORIZON);
        let m = schedule.forward_marginal(prior, x0, t)?;
        let mut x_t = m.mean.clone();
        Zip::from(&mut x_t).and(&m.var).for_each(|x, &v| *x += v.sqrt() * rng::normal(rng));
        Ok(Self {
            t,
            x_t,
            mean_t: m.mean,
            var_t: m.var,
        })
    }

    /// Exact conditional score `−(x_t − mean_t)/var_t`.
    pub fn target(&self) -> State {
        let mut out = &self.mean_t - &self.x_t;
        out /= &self.var_t;
        out
    }
}

/// `mean(var ⊙ (s − target)²)` and its gradient with respect to `s`.
pub fn weighted_score_error(score: &State, elem: &NoisedElement) -> Result<(f64, State)> {
    if score.dim() != elem.x_t.dim() {
        return Err(Error::shape("dsm loss", elem.x_t.shape(), score.shape()));
    }
    let n = score.len() as f64;
    let target = elem.target();
    let mut grad = score - &target;
    let mut loss = 0.0;
    Zip::from(&mut grad).and(&elem.var_t).for_each(|g, &v| {
        loss += v * *g * *g;
        *g *= 2.0 * v / n;
    });
    Ok((loss / n, grad))
}

/// Denoising score-matching loss for a single example, accumulating
/// gradients into `net`.
pub fn dsm_loss(
    net: &mut ToyScoreNet,
    schedule: &NoiseSchedule,
    prior: &PriorField,
    x0: &State,
    cond: &Conditioning,
    rng: &mut Stream,
) -> Result<f64> {
    prior.check_state("dsm loss", x0)?;
    let elem = NoisedElement::draw(schedule, prior, x0, rng)?;
    let rows: Vec<_> = (0..x0.nrows())
        .map(|_| NetInputRow {
            t: elem.t,
            speaker: &cond.speaker,
            label: cond.emotion,
        })
        .collect();
    let (out, cache) = net.forward(elem.x_t.view(), prior.mu().view(), &rows)?;
    let (loss, grad) = weighted_score_error(&out, &elem)?;
    net.backward(&cache, &grad);
    Ok(loss)
}

/// Frozen two-layer random projection standing in for a pre-trained audio
/// network: `f(m) = tanh(m·P₁)·P₂`, applied per frame.
#[derive(Clone, Debug)]
pub struct SpeakerFeatureNet {
    p1: Array2<f64>,
    p2: Array2<f64>,
}

impl SpeakerFeatureNet {
    pub fn new(channels: usize) -> Self {
        let mut r = rng::stream(FEATURE_SEED);
        Self {
            p1: nn::gaussian(channels, FEATURE_HIDDEN, (1.0 / channels as f64).sqrt(), &mut r),
            p2: nn::gaussian(FEATURE_HIDDEN, FEATURE_OUT, (1.0 / FEATURE_HIDDEN as f64).sqrt(), &mut r),
        }
    }

    pub fn channels(&self) -> usize {
        self.p1.nrows()
    }

    fn hidden(&self, mel: &Array2<f64>) -> Array2<f64> {
        mel.dot(&self.p1).mapv(f64::tanh)
    }

    pub fn features(&self, mel: &Array2<f64>) -> Array2<f64> {
        self.hidden(mel).dot(&self.p2)
    }
}

/// Mean absolute feature difference and its (sub)gradient with respect to
/// `generated`.
pub fn speaker_feature_loss_with_grad(
    generated: &Array2<f64>,
    reference: &Array2<f64>,
    net: &SpeakerFeatureNet,
) -> Result<(f64, Array2<f64>)> {
    if generated.dim() != reference.dim() {
        return Err(Error::shape("speaker loss", reference.shape(), generated.shape()));
    }
    if generated.ncols() != net.channels() {
        return Err(Error::shape("speaker loss channels", &[net.channels()], &[generated.ncols()]));
    }
    let h = net.hidden(generated);
    let diff = h.dot(&net.p2) - net.features(reference);
    let n = diff.len() as f64;
    let loss = diff.iter().map(|d| d.abs()).sum::<f64>() / n;
    let d_feat = diff.mapv(|d| d.signum() / n);
    let dh = d_feat.dot(&net.p2.t());
    let dz = nn::tanh_backward(&h, &dh);
    Ok((loss, dz.dot(&net.p1.t())))
}

pub fn speaker_feature_loss(
    generated: &Array2<f64>,
    reference: &Array2<f64>,
    net: &SpeakerFeatureNet,
) -> Result<f64> {
    speaker_feature_loss_with_grad(generated, reference, net).map(|r| r.0)
}

/// One-step denoised estimate from a score, for unit prior variance:
/// `x̂₀ = μ + (x_t + var_t·s − μ)/a_t` with `a_t = e^{−B(t)/2}`.
pub fn denoised_estimate(elem: &NoisedElement, mu: &State, score: &State, signal: f64) -> State {
    let mut out = &elem.x_t + &(&elem.var_t * score) - mu;
    out /= signal;
    out + mu
}

pub(crate) fn stack_rows(blocks: &[&State], cols: usize) -> Array2<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Array2::zeros((rows, cols));
    let mut r = 0;
    for b in blocks {
        out.slice_mut(s![r..r + b.nrows(), ..]).assign(*b);
        r += b.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::SpeakerBank;
    use ndarray::array;

    #[test]
    fn dropout_edge_probabilities() {
        let bank = SpeakerBank::synthetic(1, 0);
        let cond = Conditioning::new(bank.get(0).unwrap().clone(), Some(Emotion::Anger));
        let mut r = rng::stream(1);
        for _ in 0..1000 {
            assert_eq!(apply_null_dropout(&cond, 0.0, &mut r), cond);
            let d = apply_null_dropout(&cond, 1.0, &mut r);
            assert_eq!(d.emotion, None);
            assert_eq!(d.speaker, cond.speaker);
        }
    }

    #[test]
    fn dropout_rate_concentrates() {
        let cond = Conditioning::label_only(Some(Emotion::Sad));
        let mut r = rng::stream(2);
        let n = 10_000;
        let nulls = (0..n)
            .filter(|_| apply_null_dropout(&cond, 0.10, &mut r).emotion.is_none())
            .count();
        let frac = nulls as f64 / n as f64;
        assert!((0.09..=0.11).contains(&frac), "{frac}");
    }

    #[test]
    fn exact_target_gives_zero_loss() {
        let schedule = NoiseSchedule::default();
        let prior = PriorField::standard(2, 3);
        let x0 = State::from_elem((2, 3), 0.4);
        let elem = NoisedElement::draw(&schedule, &prior, &x0, &mut rng::stream(3)).unwrap();
        let (loss, grad) = weighted_score_error(&elem.target(), &elem).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn zero_network_loss_is_one_per_dimension() {
        // With s = 0 the loss is (x_t − mean_t)²/var_t, a χ²₁ variable.
        let schedule = NoiseSchedule::default();
        let prior = PriorField::standard(1, 1);
        let x0 = array![[0.0]];
        let mut r = rng::stream(4);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let elem = NoisedElement::draw(&schedule, &prior, &x0, &mut r).unwrap();
            let (l, _) = weighted_score_error(&State::zeros((1, 1)), &elem).unwrap();
            sum += l;
            sq += l * l;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn dsm_gradient_matches_finite_differences() {
        use rand::Rng;
        let schedule = NoiseSchedule::default();
        let prior = PriorField::new(array![[0.2, -0.1]], array![[1.0, 1.0]]).unwrap();
        let bank = SpeakerBank::synthetic(1, 5);
        let cond = Conditioning::new(bank.get(0).unwrap().clone(), Some(Emotion::Happy));
        let x0 = array![[1.0, -0.5]];
        let mut net = ToyScoreNet::with_hidden(2, 12, &mut rng::stream(6));
        let loss_at = |net: &ToyScoreNet| {
            let mut n = net.clone();
            dsm_loss(&mut n, &schedule, &prior, &x0, &cond, &mut rng::stream(99)).unwrap()
        };
        net.params_mut().zero_grad();
        dsm_loss(&mut net, &schedule, &prior, &x0, &cond, &mut rng::stream(99)).unwrap();
        let mut r = rng::stream(7);
        let h = 1e-5;
        for g in 0..net.params().len() {
            let (rows, cols) = net.params().value(g).dim();
            for _ in 0..8 {
                let mut idx = (r.random_range(0..rows), r.random_range(0..cols));
                if g == 6 {
                    idx.0 = Emotion::Happy.index();
                }
                let analytic = net.params().get(g).grad[idx];
                let mut plus = net.clone();
                plus.params_mut().get_mut(g).value[idx] += h;
                let mut minus = net.clone();
                minus.params_mut().get_mut(g).value[idx] -= h;
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-7);
                assert!(rel < 1e-4, "group {g}: {analytic} vs {fd}");
            }
        }
    }

    #[test]
    fn speaker_loss_properties() {
        let net = SpeakerFeatureNet::new(8);
        let mut r = rng::stream(8);
        let a = nn::gaussian(5, 8, 1.0, &mut r);
        let b = nn::gaussian(5, 8, 1.0, &mut r);
        assert_eq!(speaker_feature_loss(&a, &a, &net).unwrap(), 0.0);
        let ab = speaker_feature_loss(&a, &b, &net).unwrap();
        let ba = speaker_feature_loss(&b, &a, &net).unwrap();
        assert!(ab > 0.0);
        assert_eq!(ab, ba);
        assert!(speaker_feature_loss(&a, &nn::gaussian(4, 8, 1.0, &mut r), &net).is_err());

        // naive loops over frames, hidden units and features
        let mut naive = 0.0;
        for f in 0..5 {
            for k in 0..FEATURE_OUT {
                let mut fa = 0.0;
                let mut fb = 0.0;
                for j in 0..FEATURE_HIDDEN {
                    let (mut za, mut zb) = (0.0, 0.0);
                    for c in 0..8 {
                        za += a[[f, c]] * net.p1[[c, j]];
                        zb += b[[f, c]] * net.p1[[c, j]];
                    }
                    fa += za.tanh() * net.p2[[j, k]];
                    fb += zb.tanh() * net.p2[[j, k]];
                }
                naive += (fa - fb).abs();
            }
        }
        naive /= (5 * FEATURE_OUT) as f64;
        assert!((ab - naive).abs() < 1e-12);
    }

    #[test]
    fn speaker_loss_gradient_matches_finite_differences() {
        let net = SpeakerFeatureNet::new(6);
        let mut r = rng::stream(9);
        let a = nn::gaussian(3, 6, 1.0, &mut r);
        let b = nn::gaussian(3, 6, 1.0, &mut r);
        let (_, g) = speaker_feature_loss_with_grad(&a, &b, &net).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for c in 0..6 {
                let mut p = a.clone();
                p[[i, c]] += h;
                let mut m = a.clone();
                m[[i, c]] -= h;
                let fd = (speaker_feature_loss(&p, &b, &net).unwrap()
                    - speaker_feature_loss(&m, &b, &net).unwrap())
                    / (2.0 * h);
                assert!((fd - g[[i, c]]).abs() < 1e-6, "{fd} vs {}", g[[i, c]]);
            }
        }
    }
}
