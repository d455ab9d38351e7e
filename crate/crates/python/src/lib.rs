//! Python bindings. Tensors cross the boundary as nested lists of floats.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyFloatingPointError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use emotts::audio::{self, AudioBuffer, CepstraMatrix, MelSpectrogram};
use emotts::conditioning::{parse_label, Conditioning, Emotion, SpeakerBank};
use emotts::eval::{intensity_sweep as run_sweep, SweepConfig, SyntheticEmotionCorpus};
use emotts::sampler::{sample_many, SamplerConfig, Solver};
use emotts::schedule::PriorField;
use emotts::score::{AnalyticScoreField, ToyScoreNet};
use emotts::text_prior::TokenSequence;
use emotts::training::{train, TrainConfig, TrainingData};
use emotts::{rng, Checkpoint, Error, GuidanceWeight, NoiseSchedule};

fn py_err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyFloatingPointError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn sampler_config(steps: usize, solver: &str, intensity: f64, temperature: f64, seed: u64) -> PyResult<SamplerConfig> {
    Ok(SamplerConfig {
        solver: solver.parse::<Solver>().map_err(py_err)?,
        steps,
        intensity: GuidanceWeight::new(intensity).map_err(py_err)?,
        temperature,
        seed,
    })
}

fn speaker_cond(speaker: usize, corpus_seed: u64, label: Option<Emotion>) -> PyResult<Conditioning> {
    let bank = SpeakerBank::synthetic(speaker + 1, corpus_seed);
    Ok(Conditioning::new(bank.get(speaker).map_err(py_err)?.clone(), label))
}

fn label(emotion: Option<&str>) -> PyResult<Option<Emotion>> {
    emotion.map_or(Ok(None), |e| parse_label(e).map_err(py_err))
}

#[pyclass(name = "NoiseSchedule", frozen)]
struct PySchedule(NoiseSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (beta0 = 0.05, beta1 = 20.0))]
    fn new(beta0: f64, beta1: f64) -> PyResult<Self> {
        NoiseSchedule::new(beta0, beta1).map(Self).map_err(py_err)
    }

    fn beta(&self, t: f64) -> PyResult<f64> {
        self.0.beta(t).map_err(py_err)
    }

    fn cum_beta(&self, t: f64) -> PyResult<f64> {
        self.0.cum_beta(t).map_err(py_err)
    }

    /// Mean and variance of `X_t | X_0 = x0` under prior `N(mu, sigma)`.
    fn forward_marginal(
        &self,
        x0: Vec<Vec<f64>>,
        mu: Vec<Vec<f64>>,
        sigma: Vec<Vec<f64>>,
        t: f64,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let prior = PriorField::new(to_array(mu)?, to_array(sigma)?).map_err(py_err)?;
        let m = self.0.forward_marginal(&prior, &to_array(x0)?, t).map_err(py_err)?;
        Ok((to_rows(&m.mean), to_rows(&m.var)))
    }

    fn __repr__(&self) -> String {
        format!("NoiseSchedule(beta0={}, beta1={})", self.0.beta0, self.0.beta1)
    }
}

/// A trained score network, optionally with its text prior.
#[pyclass(name = "Model")]
struct PyModel(Checkpoint);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Checkpoint::read(&path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.write(&path).map_err(py_err)
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.0.score_net.state_dim()
    }

    #[getter]
    fn has_text_prior(&self) -> bool {
        self.0.text_prior.is_some()
    }

    /// Guided samples. Mixture models return `count` row vectors; text
    /// models need `tokens` and return `count` frames x channels matrices.
    #[pyo3(signature = (emotion = None, intensity = 1.0, count = 1, steps = 100, solver = "ode", seed = 0, temperature = 1.0, tokens = None, speaker = 0, corpus_seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn sample(
        &self,
        py: Python<'_>,
        emotion: Option<&str>,
        intensity: f64,
        count: usize,
        steps: usize,
        solver: &str,
        seed: u64,
        temperature: f64,
        tokens: Option<Vec<usize>>,
        speaker: usize,
        corpus_seed: u64,
    ) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let config = sampler_config(steps, solver, intensity, temperature, seed)?;
        let cond = speaker_cond(speaker, corpus_seed, label(emotion)?)?;
        let prior = match (&self.0.text_prior, tokens) {
            (Some(tp), Some(tokens)) => {
                let seq = TokenSequence::new(tokens, tp.vocab()).map_err(py_err)?;
                PriorField::with_unit_variance(tp.prior_mean(&seq).map_err(py_err)?.0)
            }
            (Some(_), None) => return Err(PyValueError::new_err("text models need `tokens`")),
            (None, _) => PriorField::standard(1, self.0.score_net.state_dim()),
        };
        let ck = &self.0;
        let states = py
            .detach(|| sample_many(&ck.score_net, &ck.schedule, &prior, &cond, &config, count))
            .map_err(py_err)?;
        Ok(states.iter().map(to_rows).collect())
    }
}

/// Trains a score network on the two-label 2D mixture task. Returns the
/// model and the per-iteration diffusion loss.
#[pyfunction]
#[pyo3(signature = (iterations = 2000, batch_size = 64, learning_rate = 2e-3, seed = 0, per_label = 500))]
fn train_mixture(
    py: Python<'_>,
    iterations: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
    per_label: usize,
) -> PyResult<(PyModel, Vec<f64>)> {
    let config = TrainConfig {
        iterations,
        batch_size,
        learning_rate,
        seed,
        ..TrainConfig::default()
    };
    let schedule = NoiseSchedule::default();
    let (net, history) = py
        .detach(|| -> emotts::Result<_> {
            let data = TrainingData::from_corpus(&SyntheticEmotionCorpus::training_pair(), per_label, 0, 1, 0)?;
            let mut net = ToyScoreNet::new(data.channels(), &mut rng::derive(seed, &[0x1417]));
            let report = train(&mut net, None, &data, &schedule, &config)?;
            Ok((net, report.history.iter().map(|r| r.diffusion).collect()))
        })
        .map_err(py_err)?;
    Ok((
        PyModel(Checkpoint {
            schedule,
            score_net: net,
            text_prior: None,
        }),
        history,
    ))
}

/// Samples from the exact score of Gaussian data `N(mean, var)` with a
/// standard terminal prior.
#[pyfunction]
#[pyo3(signature = (mean, var, count, steps = 200, solver = "ode", seed = 0))]
fn sample_gaussian(
    py: Python<'_>,
    mean: Vec<f64>,
    var: Vec<f64>,
    count: usize,
    steps: usize,
    solver: &str,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let schedule = NoiseSchedule::default();
    let dim = mean.len();
    let field = AnalyticScoreField::gaussian(schedule, mean, var).map_err(py_err)?;
    let config = sampler_config(steps, solver, 1.0, 1.0, seed)?;
    let prior = PriorField::standard(1, dim);
    let states = py
        .detach(|| sample_many(&field, &schedule, &prior, &Conditioning::label_only(None), &config, count))
        .map_err(py_err)?;
    Ok(states.iter().map(|s| s.iter().copied().collect()).collect())
}

/// `w * cond - (w - 1) * uncond`.
#[pyfunction]
fn combine_scores(cond: Vec<Vec<f64>>, uncond: Vec<Vec<f64>>, w: f64) -> PyResult<Vec<Vec<f64>>> {
    let w = GuidanceWeight::new(w).map_err(py_err)?;
    let out = emotts::combine_scores(&to_array(cond)?, &to_array(uncond)?, w).map_err(py_err)?;
    Ok(to_rows(&out))
}

/// Intensity sweep on the default three-emotion corpus (plus its neutral
/// baseline), scored by the Bayes posterior. With `model`, the trained
/// network replaces the exact field and the two-label training corpus is used.
#[pyfunction]
#[pyo3(signature = (weights = vec![0.0, 1.0, 2.0, 4.0, 8.0], samples = 1000, steps = 100, seed = 0, model = None))]
fn intensity_sweep<'py>(
    py: Python<'py>,
    weights: Vec<f64>,
    samples: usize,
    steps: usize,
    seed: u64,
    model: Option<PyRef<'py, PyModel>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = SweepConfig {
        weights,
        samples,
        sampler: sampler_config(steps, "ode", 1.0, 1.0, seed)?,
    };
    let speaker = speaker_cond(0, 0, None)?.speaker;
    let report = match &model {
        Some(m) => {
            let corpus = SyntheticEmotionCorpus::training_pair();
            let ck = &m.0;
            py.detach(|| {
                run_sweep(&ck.score_net, &ck.schedule, &corpus, &corpus.labels(), &config, &speaker, None)
            })
        }
        None => {
            let corpus = SyntheticEmotionCorpus::sweep_default();
            let schedule = NoiseSchedule::default();
            py.detach(|| {
                let field = corpus.score_field(schedule)?;
                run_sweep(&field, &schedule, &corpus, &corpus.labels(), &config, &speaker, None)
            })
        }
    }
    .map_err(py_err)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("label", r.label.name())?;
            d.set_item("w", r.w)?;
            d.set_item("mean_prob", r.mean_prob)?;
            d.set_item("stderr", r.std_error)?;
            d.set_item("n", r.n)?;
            d.set_item("scorer", r.scorer.name())?;
            Ok(d)
        })
        .collect()
}

/// Log-mel spectrogram (frames x 128) of 16 kHz mono samples in [-1, 1].
#[pyfunction]
#[pyo3(signature = (samples, sample_rate = audio::SAMPLE_RATE))]
fn mel_spectrogram(samples: Vec<f64>, sample_rate: u32) -> PyResult<Vec<Vec<f64>>> {
    let buf = AudioBuffer::new(samples, sample_rate).map_err(py_err)?;
    Ok(to_rows(audio::mel_spectrogram(&buf).map_err(py_err)?.values()))
}

/// Mel-cepstral distortion in dB between two log-mel matrices.
#[pyfunction]
#[pyo3(signature = (a, b, trim = false))]
fn mcd(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, trim: bool) -> PyResult<f64> {
    let ca = audio::mel_cepstra(&MelSpectrogram::new(to_array(a)?).map_err(py_err)?);
    let cb = audio::mel_cepstra(&MelSpectrogram::new(to_array(b)?).map_err(py_err)?);
    if trim { audio::mcd_trimmed(&ca, &cb) } else { audio::mcd(&ca, &cb) }.map_err(py_err)
}

/// MCD between cepstral coefficient matrices (frames x 13).
#[pyfunction]
fn mcd_cepstra(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    let ca = CepstraMatrix::new(to_array(a)?).map_err(py_err)?;
    let cb = CepstraMatrix::new(to_array(b)?).map_err(py_err)?;
    audio::mcd(&ca, &cb).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (mel, iterations = audio::DEFAULT_GL_ITERATIONS))]
fn griffin_lim(py: Python<'_>, mel: Vec<Vec<f64>>, iterations: usize) -> PyResult<Vec<f64>> {
    let mel = MelSpectrogram::new(to_array(mel)?).map_err(py_err)?;
    let wav = py.detach(|| audio::griffin_lim(&mel, iterations)).map_err(py_err)?;
    Ok(wav.samples)
}

#[pyfunction]
fn read_wav(path: PathBuf) -> PyResult<(Vec<f64>, u32)> {
    let buf = audio::read_wav(&path).map_err(py_err)?;
    Ok((buf.samples, buf.sample_rate))
}

#[pyfunction]
#[pyo3(signature = (path, samples, sample_rate = audio::SAMPLE_RATE))]
fn write_wav(path: PathBuf, samples: Vec<f64>, sample_rate: u32) -> PyResult<()> {
    let buf = AudioBuffer::new(samples, sample_rate).map_err(py_err)?;
    audio::write_wav(&path, &buf).map_err(py_err)
}

/// Runs the built-in closed-form self-checks: `[(name, passed, detail)]`.
#[pyfunction]
fn oracle_check(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.detach(emotts::oracle_check::run_oracle_checks)
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn emotts_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(sample_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(combine_scores, m)?)?;
    m.add_function(wrap_pyfunction!(intensity_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(mel_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(mcd, m)?)?;
    m.add_function(wrap_pyfunction!(mcd_cepstra, m)?)?;
    m.add_function(wrap_pyfunction!(griffin_lim, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add("EMOTIONS", Emotion::ALL.iter().map(|e| e.name()).collect::<Vec<_>>())?;
    m.add("SAMPLE_RATE", audio::SAMPLE_RATE)?;
    m.add("MEL_CHANNELS", audio::MEL_CHANNELS)?;
    Ok(())
}
