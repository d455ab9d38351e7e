//! Fast self-checks of the numerical core against closed-form references.
//!
//! These are reduced-size versions of the acceptance checks, cheap enough to
//! run from the command line on any machine.

use std::f64::consts::PI;

use ndarray::array;

use crate::audio::{self, AudioBuffer, MelSpectrogram};
use crate::conditioning::{Conditioning, Emotion, SpeakerBank, SpeakerEmbedding};
use crate::error::Result;
use crate::eval::{intensity_sweep, Scorer, SweepConfig, SyntheticEmotionCorpus};
use crate::guidance::{combine_scores, GuidanceWeight};
use crate::nn::{self, gradient_check};
use crate::rng;
use crate::sampler::{sample, sample_many, terminal_draw, SamplerConfig};
use crate::schedule::{NoiseSchedule, PriorField, State};
use crate::score::{AnalyticScoreField, NetInputRow, ToyScoreNet};
use crate::text_prior::{self, TextPriorNet, TokenSequence};
use crate::training::apply_null_dropout;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from(name: &'static str, outcome: Result<(bool, String)>) -> Self {
        match outcome {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

pub fn run_oracle_checks() -> Vec<CheckResult> {
    vec![
        CheckResult::from("forward-marginal", forward_marginal()),
        CheckResult::from("ode-stationarity", ode_stationarity()),
        CheckResult::from("oracle-recovery", oracle_recovery()),
        CheckResult::from("guidance-identities", guidance_identities()),
        CheckResult::from("intensity-monotonicity", intensity_monotonicity()),
        CheckResult::from("null-dropout", null_dropout()),
        CheckResult::from("gradients", gradients()),
        CheckResult::from("mcd", mcd_values()),
        CheckResult::from("dsp-round-trips", dsp_round_trips()),
    ]
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn forward_marginal() -> Result<(bool, String)> {
    let sched = NoiseSchedule::default();
    let prior = PriorField::new(array![[0.5]], array![[2.0]])?;
    let x0 = array![[1.5]];
    let (t_end, h, paths) = (0.5, 1e-3, 2000);
    let mut r = rng::stream(11);
    let mut ends = Vec::with_capacity(paths);
    for _ in 0..paths {
        let mut x = x0[[0, 0]];
        let mut t = 0.0;
        while t < t_end - 1e-12 {
            let beta = sched.beta(t)?;
            x += -0.5 * beta * (x - 0.5) / 2.0 * h + (beta * h).sqrt() * rng::normal(&mut r);
            t += h;
        }
        ends.push(x);
    }
    let m = sched.forward_marginal(&prior, &x0, t_end)?;
    let (em, ev) = mean_var(&ends);
    let (tm, tv) = (m.mean[[0, 0]], m.var[[0, 0]]);
    let se_m = (tv / paths as f64).sqrt();
    let se_v = tv * (2.0 / (paths as f64 - 1.0)).sqrt();
    let ok = (em - tm).abs() < 4.0 * se_m && (ev - tv).abs() < 4.0 * se_v;
    Ok((ok, format!("mean {em:.4} vs {tm:.4}, var {ev:.4} vs {tv:.4}")))
}

fn ode_stationarity() -> Result<(bool, String)> {
    let sched = NoiseSchedule::default();
    let prior = PriorField::new(array![[0.3, -1.0]], array![[0.5, 2.0]])?;
    let field = AnalyticScoreField::gaussian(sched, vec![0.3, -1.0], vec![0.5, 2.0])?;
    let config = SamplerConfig {
        steps: 50,
        seed: 5,
        ..SamplerConfig::default()
    };
    let out = sample(&field, &sched, &prior, &Conditioning::label_only(None), &config, false)?;
    let start = terminal_draw(&prior, 1.0, &mut rng::derive(5, &[0]));
    Ok((out.state == start, format!("final state {:?}", out.state.as_slice().unwrap_or(&[]))))
}

fn oracle_recovery() -> Result<(bool, String)> {
    let sched = NoiseSchedule::default();
    let field = AnalyticScoreField::gaussian(sched, vec![1.0], vec![0.25])?;
    let prior = PriorField::standard(1, 1);
    let config = SamplerConfig {
        steps: 200,
        seed: 2,
        ..SamplerConfig::default()
    };
    let xs: Vec<f64> = sample_many(&field, &sched, &prior, &Conditioning::label_only(None), &config, 4000)?
        .iter()
        .map(|s| s[[0, 0]])
        .collect();
    let (m, v) = mean_var(&xs);
    let ok = (m - 1.0).abs() < 0.04 && (v / 0.25 - 1.0).abs() < 0.1;
    Ok((ok, format!("mean {m:.4}, variance {v:.4}")))
}

fn guidance_identities() -> Result<(bool, String)> {
    let mut r = rng::stream(21);
    let c = nn::gaussian(3, 4, 1.0, &mut r);
    let u = nn::gaussian(3, 4, 1.0, &mut r);
    let w = |v: f64| GuidanceWeight::new(v);
    let max_diff = |a: &State, b: &State| (a - b).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let e0 = max_diff(&combine_scores(&c, &u, w(0.0)?)?, &u);
    let e1 = max_diff(&combine_scores(&c, &u, w(1.0)?)?, &c);
    let mut e_aff: f64 = 0.0;
    for (a, b) in [(0.5, 3.0), (2.0, 7.5)] {
        let lam = 0.3;
        let mid = combine_scores(&c, &u, w(lam * a + (1.0 - lam) * b)?)?;
        let mix = combine_scores(&c, &u, w(a)?)? * lam + combine_scores(&c, &u, w(b)?)? * (1.0 - lam);
        e_aff = e_aff.max(max_diff(&mid, &mix));
    }
    let ok = e0 <= 1e-15 && e1 <= 1e-15 && e_aff <= 1e-12;
    Ok((ok, format!("w=0 {e0:.1e}, w=1 {e1:.1e}, affine {e_aff:.1e}")))
}

fn intensity_monotonicity() -> Result<(bool, String)> {
    let sched = NoiseSchedule::default();
    let corpus = SyntheticEmotionCorpus::sweep_default();
    let field = corpus.score_field(sched)?;
    let config = SweepConfig {
        weights: vec![1.0, 8.0],
        samples: 400,
        sampler: SamplerConfig {
            steps: 50,
            ..SamplerConfig::default()
        },
    };
    let report = intensity_sweep(&field, &sched, &corpus, &[Emotion::Happy], &config, &SpeakerEmbedding::zeros(), None)?;
    let curve = report.curve(Emotion::Happy, Scorer::Bayes);
    let gain = curve[1].mean_prob - curve[0].mean_prob;
    Ok((gain > 0.05, format!("P(8) - P(1) = {gain:.3}")))
}

fn null_dropout() -> Result<(bool, String)> {
    let cond = Conditioning::label_only(Some(Emotion::Anger));
    let mut r = rng::stream(31);
    let n = 10_000;
    let nulls = (0..n)
        .filter(|_| apply_null_dropout(&cond, 0.1, &mut r).emotion.is_none())
        .count();
    let frac = nulls as f64 / n as f64;
    Ok(((0.09..=0.11).contains(&frac), format!("null fraction {frac:.4}")))
}

fn gradients() -> Result<(bool, String)> {
    let mut r = rng::stream(41);
    let bank = SpeakerBank::synthetic(2, 42);
    let mut net = ToyScoreNet::with_hidden(3, 16, &mut r);
    let x = nn::gaussian(4, 3, 1.0, &mut r);
    let mu = nn::gaussian(4, 3, 1.0, &mut r);
    let labels = [Some(Emotion::Sad), None, Some(Emotion::Fear), None];
    let rows: Vec<_> = (0..4)
        .map(|i| NetInputRow {
            t: 0.2 + 0.2 * i as f64,
            speaker: bank.get(i % 2).expect("two speakers"),
            label: labels[i],
        })
        .collect();
    let weights = nn::gaussian(4, 3, 1.0, &mut r);
    net.params_mut().zero_grad();
    let (_, cache) = net.forward(x.view(), mu.view(), &rows)?;
    net.backward(&cache, &weights);
    let objective = |n: &ToyScoreNet| {
        n.forward(x.view(), mu.view(), &rows)
            .map(|(out, _)| (out * &weights).sum())
            .unwrap_or(f64::NAN)
    };
    let mut checks = gradient_check(&net, ToyScoreNet::params, ToyScoreNet::params_mut, objective, 6, &mut r);

    let mut prior = TextPriorNet::new(6, 5, &mut r)?;
    let seq = TokenSequence::new(vec![1, 4, 1], 6)?;
    let durs = [2, 1, 3];
    let target = nn::gaussian(6, 5, 1.0, &mut r);
    let target_dur = [1, 2, 2];
    prior.params_mut().zero_grad();
    let enc = prior.encode(&seq)?;
    let frame_mu = text_prior::expand(&enc.token_mu, &durs)?;
    let (_, d_mu) = text_prior::prior_loss_with_grad(&frame_mu, &target)?;
    let (_, d_dur) = text_prior::duration_loss_with_grad(&enc.log_dur, &target_dur)?;
    prior.backward(&enc.cache, &text_prior::expand_backward(&d_mu, &durs), &d_dur);
    let objective = |n: &TextPriorNet| -> f64 {
        let run = || -> Result<f64> {
            let enc = n.encode(&seq)?;
            let mu = text_prior::expand(&enc.token_mu, &durs)?;
            Ok(text_prior::prior_loss(&mu, &target)? + text_prior::duration_loss(&enc.log_dur, &target_dur)?)
        };
        run().unwrap_or(f64::NAN)
    };
    checks.extend(gradient_check(&prior, TextPriorNet::params, TextPriorNet::params_mut, objective, 6, &mut r));

    let worst = checks
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .expect("networks have parameters");
    Ok((
        worst.max_rel_error < 1e-4,
        format!("{} groups, worst {} at {:.1e}", checks.len(), worst.group, worst.max_rel_error),
    ))
}

fn mcd_values() -> Result<(bool, String)> {
    let mut r = rng::stream(51);
    let a = audio::CepstraMatrix::new(nn::gaussian(5, audio::CEPSTRAL_COEFFS, 1.0, &mut r))?;
    let b = audio::CepstraMatrix::new(a.values() + 0.1)?;
    let same = audio::mcd(&a, &a)?;
    let off = audio::mcd(&a, &b)?;
    let expected = 10.0 / std::f64::consts::LN_10 * 0.26f64.sqrt();
    let ok = same == 0.0 && (off - expected).abs() < 1e-9;
    Ok((ok, format!("mcd(x,x) = {same}, offset {off:.10} vs {expected:.10}")))
}

fn dsp_round_trips() -> Result<(bool, String)> {
    let n = audio::SAMPLE_RATE as usize / 2;
    let tone: Vec<f64> = (0..n)
        .map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / audio::SAMPLE_RATE as f64).cos())
        .collect();
    let buf = AudioBuffer::new(tone, audio::SAMPLE_RATE)?;
    let bytes = buf.to_wav_bytes();
    let wav_ok = AudioBuffer::from_wav_bytes(&bytes)
        .map(|b| b.to_wav_bytes() == bytes)
        .unwrap_or(false);
    let mel = audio::mel_spectrogram(&buf)?;
    let mel_bytes = mel.to_bytes();
    let mel_ok = MelSpectrogram::from_bytes(&mel_bytes)
        .map(|m| m.to_bytes() == mel_bytes)
        .unwrap_or(false);
    let mut edges = vec![audio::F_MIN];
    edges.extend(audio::mel_center_frequencies());
    edges.push(audio::F_MAX);
    let weight = |k: usize| {
        let (lo, c, hi) = (edges[k], edges[k + 1], edges[k + 2]);
        ((440.0 - lo) / (c - lo)).min((hi - 440.0) / (hi - c)).max(0.0)
    };
    let expected = (0..audio::MEL_CHANNELS)
        .max_by(|a, b| weight(*a).total_cmp(&weight(*b)))
        .unwrap_or(0);
    let channels = mel.argmax_channels();
    let tone_ok = channels.iter().all(|&c| c == expected);
    Ok((
        wav_ok && mel_ok && tone_ok,
        format!("wav {wav_ok}, mel {mel_ok}, 440 Hz in channel {expected} for every frame: {tone_ok}"),
    ))
}
