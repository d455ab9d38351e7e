//! Reverse-time generation with guided scores.
//!
//! Both solvers march a uniform grid from `T` to `0` with explicit Euler
//! steps. Per step of size `h` at time `t`:
//!
//! ```text
//! PF-ODE:      x ← x − h·(β_t/2)·(Σ⁻¹(μ − x) − s)
//! reverse SDE: x ← x − h·β_t·(½Σ⁻¹(μ − x) − s) + √(β_t·h)·z
//! ```
//!
//! With the data law equal to the terminal prior (`s = −Σ⁻¹(x − μ)`) the ODE
//! drift is identically zero, which pins the sign convention.

use ndarray::Zip;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::Conditioning;
use crate::error::{Error, Result};
use crate::guidance::{guided_score, guided_score_batch, GuidanceWeight};
use crate::rng::{self, Stream};
use crate::schedule::{NoiseSchedule, PriorField, State};
use crate::score::ScoreField;

/// Earliest time at which a score is evaluated.
pub const T_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Solver {
    #[serde(rename = "ode")]
    ProbabilityFlow,
    #[serde(rename = "sde")]
    ReverseSde,
}

impl std::str::FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ode" => Ok(Solver::ProbabilityFlow),
            "sde" => Ok(Solver::ReverseSde),
            other => Err(Error::Input(format!(
                "unknown solver `{other}`; expected `ode` or `sde`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub solver: Solver,
    pub steps: usize,
    pub intensity: GuidanceWeight,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            solver: Solver::ProbabilityFlow,
            steps: 100,
            intensity: GuidanceWeight::CONDITIONAL,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Input("sampler needs at least one step".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Domain {
                what: "temperature",
                value: self.temperature,
                domain: "(0, inf)",
            });
        }
        Ok(())
    }
}

/// States visited by one reverse pass, from `T` down to `0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl Trajectory {
    /// CSV with columns `t, v0, v1, …` (state flattened row-major).
    pub fn to_csv(&self) -> String {
        let width = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for i in 0..width {
            out.push_str(&format!(",v{i}"));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t}"));
            for v in s.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SampleOutput {
    pub state: State,
    pub trajectory: Option<Trajectory>,
}

/// `X_T = μ + temperature·√Σ ⊙ z`.
pub fn terminal_draw(prior: &PriorField, temperature: f64, rng: &mut Stream) -> State {
    let mut x = prior.mu().clone();
    Zip::from(&mut x).and(prior.sigma()).for_each(|v, &s| {
        *v += temperature * s.sqrt() * rng::normal(rng);
    });
    x
}

fn check_step(t: f64, h: f64) -> Result<()> {
    if !(h > 0.0 && h <= t) {
        return Err(Error::Domain {
            what: "step size",
            value: h,
            domain: "(0, t]",
        });
    }
    Ok(())
}

/// One backward Euler step of the probability-flow ODE.
pub fn ode_step(
    x: &State,
    t: f64,
    h: f64,
    score: &State,
    schedule: &NoiseSchedule,
    prior: &PriorField,
) -> Result<State> {
    check_step(t, h)?;
    prior.check_state("ode step", x)?;
    prior.check_state("ode step score", score)?;
    let k = 0.5 * h * schedule.beta(t)?;
    let mut out = x.clone();
    Zip::from(&mut out)
        .and(score)
        .and(prior.mu())
        .and(prior.sigma())
        .for_each(|o, &s, &mu, &sig| {
            let xv = *o;
            *o = xv - k * ((mu - xv) / sig - s);
        });
    Ok(out)
}

/// One backward Euler–Maruyama step of the reverse SDE.
pub fn sde_step(
    x: &State,
    t: f64,
    h: f64,
    score: &State,
    schedule: &NoiseSchedule,
    prior: &PriorField,
    rng: &mut Stream,
) -> Result<State> {
    check_step(t, h)?;
    prior.check_state("sde step", x)?;
    prior.check_state("sde step score", score)?;
    let beta = schedule.beta(t)?;
    let noise = (beta * h).sqrt();
    let mut out = x.clone();
    Zip::from(&mut out)
        .and(score)
        .and(prior.mu())
        .and(prior.sigma())
        .for_each(|o, &s, &mu, &sig| {
            let xv = *o;
            *o = xv - h * beta * (0.5 * (mu - xv) / sig - s) + noise * rng::normal(rng);
        });
    Ok(out)
}

/// Runs one reverse pass drawing all randomness from `rng`.
pub fn sample_with_stream<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &NoiseSchedule,
    prior: &PriorField,
    cond: &Conditioning,
    config: &SamplerConfig,
    rng: &mut Stream,
    record: bool,
) -> Result<SampleOutput> {
    config.validate()?;
    let horizon = schedule.horizon();
    let n = config.steps;
    let time = |i: usize| horizon * i as f64 / n as f64;
    let mut x = terminal_draw(prior, config.temperature, rng);
    let mut traj = record.then(|| Trajectory {
        times: vec![horizon],
        states: vec![x.clone()],
    });
    for (step, i) in (1..=n).rev().enumerate() {
        let (t, t_next) = (time(i), time(i - 1));
        let h = t - t_next;
        let eval_t = t.max(T_MIN);
        let s = guided_score(field, &x, prior, eval_t, cond, config.intensity)?;
        x = match config.solver {
            Solver::ProbabilityFlow => ode_step(&x, t, h, &s, schedule, prior)?,
            Solver::ReverseSde => sde_step(&x, t, h, &s, schedule, prior, rng)?,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SamplingDiverged { step });
        }
        if let Some(tr) = traj.as_mut() {
            tr.times.push(t_next);
            tr.states.push(x.clone());
        }
    }
    Ok(SampleOutput {
        state: x,
        trajectory: traj,
    })
}

/// One sample; randomness comes from `(seed, 0)`.
pub fn sample<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &NoiseSchedule,
    prior: &PriorField,
    cond: &Conditioning,
    config: &SamplerConfig,
    record: bool,
) -> Result<SampleOutput> {
    let mut rng = rng::derive(config.seed, &[0]);
    sample_with_stream(field, schedule, prior, cond, config, &mut rng, record)
}

/// Paths advanced together per score evaluation in [`sample_many`].
const CHUNK: usize = 64;

/// `count` independent samples; sample `i` uses stream `(seed, i)`, so
/// `sample_many(..)[0]` equals `sample(..)` up to the field's batch
/// evaluation (exactly, for the analytic field). Paths are advanced in
/// lockstep chunks, chunks run in parallel.
pub fn sample_many<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &NoiseSchedule,
    prior: &PriorField,
    cond: &Conditioning,
    config: &SamplerConfig,
    count: usize,
) -> Result<Vec<State>> {
    config.validate()?;
    let chunks: Vec<Vec<State>> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(count);
            sample_chunk(field, schedule, prior, cond, config, range)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn sample_chunk<F: ScoreField + ?Sized>(
    field: &F,
    schedule: &NoiseSchedule,
    prior: &PriorField,
    cond: &Conditioning,
    config: &SamplerConfig,
    range: std::ops::Range<usize>,
) -> Result<Vec<State>> {
    let mut streams: Vec<Stream> = range.map(|i| rng::derive(config.seed, &[i as u64])).collect();
    let mut xs: Vec<State> = streams
        .iter_mut()
        .map(|r| terminal_draw(prior, config.temperature, r))
        .collect();
    let horizon = schedule.horizon();
    let n = config.steps;
    let time = |i: usize| horizon * i as f64 / n as f64;
    for (step, i) in (1..=n).rev().enumerate() {
        let (t, t_next) = (time(i), time(i - 1));
        let h = t - t_next;
        let scores = guided_score_batch(field, &xs, prior, t.max(T_MIN), cond, config.intensity)?;
        for ((x, s), r) in xs.iter_mut().zip(&scores).zip(&mut streams) {
            *x = match config.solver {
                Solver::ProbabilityFlow => ode_step(x, t, h, s, schedule, prior)?,
                Solver::ReverseSde => sde_step(x, t, h, s, schedule, prior, r)?,
            };
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SamplingDiverged { step });
            }
        }
    }
    Ok(xs)
}
