//! `emotts`: train, sample, sweep and inspect the emotion-guided diffusion
//! engine from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::Rng;

use emotts::audio::{self, MelSpectrogram};
use emotts::config::{RunConfig, Task};
use emotts::conditioning::{parse_label, Conditioning, Emotion, SpeakerBank};
use emotts::eval::{accuracy_report, intensity_sweep, SweepConfig, ToyClassifier};
use emotts::oracle_check::run_oracle_checks;
use emotts::rng;
use emotts::sampler::{sample, sample_many, SamplerConfig, Solver};
use emotts::schedule::PriorField;
use emotts::score::ToyScoreNet;
use emotts::text_prior::{TextPriorNet, TokenSequence};
use emotts::training::{train, TrainingData, UtteranceCorpus};
use emotts::{Checkpoint, Error, GuidanceWeight, Result};

const INTENSITY_WARN: f64 = 30.0;

#[derive(Parser, Debug)]
#[command(name = "emotts", version, about, allow_negative_numbers = true, after_long_help = defaults_help())]
struct Cli {
    /// Run configuration (JSON). Missing keys take the defaults listed below.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for sampling and training (overrides the config).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(flatten)]
    sampler: SamplerFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SamplerFlags {
    /// Emotion intensity w >= 0 (0 = emotion-agnostic, 1 = conditional).
    #[arg(long, global = true, value_name = "W")]
    intensity: Option<f64>,

    /// Reverse-time solver: `ode` or `sde`.
    #[arg(long, global = true)]
    solver: Option<Solver>,

    /// Number of reverse-time steps.
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,

    /// Scale of the terminal draw's standard deviation.
    #[arg(long, global = true)]
    temperature: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the closed-form self-checks and print PASS/FAIL per check.
    OracleCheck,
    /// Train a score network (and text prior) on the configured corpus.
    Train,
    /// Generate a mel spectrogram (or mixture states) with guidance.
    Sample(SampleArgs),
    /// Sweep intensities and score the samples per label.
    Sweep(SweepArgs),
    /// Compute the log-mel spectrogram of a 16 kHz mono WAV file.
    Mel { input: PathBuf, output: PathBuf },
    /// Mel-cepstral distortion in dB between two mel files.
    Mcd {
        a: PathBuf,
        b: PathBuf,
        /// Trim the longer sequence instead of failing on a length mismatch.
        #[arg(long)]
        trim: bool,
    },
    /// Reconstruct a waveform from a mel file with Griffin-Lim.
    Resynth { input: PathBuf, output: PathBuf },
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Trained model; without it the exact field of the synthetic corpus is used.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,

    /// Token ids, e.g. "3,1,4"; random tokens are drawn when omitted.
    #[arg(long)]
    tokens: Option<String>,

    /// Target emotion, or `null` for the unconditional branch.
    #[arg(long, default_value = "Happy")]
    emotion: String,

    /// Speaker index into the corpus speaker bank.
    #[arg(long, default_value_t = 0)]
    speaker: usize,

    /// Number of draws (mixture models only).
    #[arg(long, default_value_t = 1)]
    count: usize,

    /// Also write a Griffin-Lim waveform.
    #[arg(long)]
    wav: bool,

    /// Write the reverse trajectory as CSV.
    #[arg(long)]
    dump_traj: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Trained mixture model; without it the exact field of the sweep corpus is used.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,

    /// Comma-separated intensity grid (overrides the config).
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,

    /// Samples per (label, intensity) cell (overrides the config).
    #[arg(long)]
    samples: Option<usize>,

    /// Also score with a trained logistic classifier.
    #[arg(long)]
    classifier: bool,

    #[arg(long, default_value_t = 0)]
    speaker: usize,
}

fn defaults_help() -> String {
    format!(
        "Default configuration (every key is optional; unknown keys are rejected):\n{}\n\n\
         ENGINE_THREADS caps the worker threads used for sampling and training.\n\
         Exit codes: 0 success, 1 input error, 2 numerical failure.",
        RunConfig::default().to_json()
    )
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[input]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error[input]: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error[input]: {}", one_line(&msg));
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error[numerical]: {}", one_line(&msg));
            ExitCode::from(2)
        }
    }
}

fn one_line(msg: &str) -> String {
    msg.replace('\n', " ")
}

fn init_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("ENGINE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("ENGINE_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sampler.seed = seed;
        cfg.training.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let f = &cli.sampler;
    if let Some(w) = f.intensity {
        cfg.sampler.intensity = GuidanceWeight::new(w)?;
    }
    if let Some(s) = f.solver {
        cfg.sampler.solver = s;
    }
    if let Some(n) = f.steps {
        cfg.sampler.steps = n;
    }
    if let Some(t) = f.temperature {
        cfg.sampler.temperature = t;
    }
    if let Command::Sweep(args) = &cli.command {
        if let Some(w) = &args.weights {
            cfg.sweep.weights = w.clone();
        }
        if let Some(n) = args.samples {
            cfg.sweep.samples = n;
        }
        cfg.sweep.classifier |= args.classifier;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = effective_config(&cli)?;
    if cli.dump_config {
        return emit(&format!("{}\n", cfg.to_json()));
    }
    if cfg.sampler.intensity.value() > INTENSITY_WARN {
        log::warn!(
            "intensity {} is above {INTENSITY_WARN}; output quality typically degrades",
            cfg.sampler.intensity.value()
        );
    }
    match &cli.command {
        Command::OracleCheck => oracle_check(),
        Command::Train => train_cmd(&cfg),
        Command::Sample(args) => sample_cmd(&cfg, args),
        Command::Sweep(args) => sweep_cmd(&cfg, args),
        Command::Mel { input, output } => {
            let wav = audio::read_wav(input)?;
            audio::mel_spectrogram(&wav)?.write(output)?;
            Ok(())
        }
        Command::Mcd { a, b, trim } => {
            let ca = audio::mel_cepstra(&MelSpectrogram::read(a)?);
            let cb = audio::mel_cepstra(&MelSpectrogram::read(b)?);
            let d = if *trim { audio::mcd_trimmed(&ca, &cb)? } else { audio::mcd(&ca, &cb)? };
            println!("{d:.4}");
            Ok(())
        }
        Command::Resynth { input, output } => {
            let mel = MelSpectrogram::read(input)?;
            let wav = audio::griffin_lim(&mel, cfg.dsp.griffin_lim_iterations)?;
            audio::write_wav(output, &wav)?;
            Ok(())
        }
    }
}

fn oracle_check() -> CliResult<()> {
    let results = run_oracle_checks();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("oracle checks failed: {}", failed.join(", "))))
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> CliResult<()> {
    use std::io::Write;
    match std::io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Input(e.to_string())),
        _ => Ok(()),
    }
}

fn out_dir(cfg: &RunConfig) -> CliResult<&Path> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| {
        Failure::Input(format!("cannot create output directory {}: {e}", cfg.output_dir.display()))
    })?;
    Ok(&cfg.output_dir)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn utterance_corpus(cfg: &RunConfig) -> Result<UtteranceCorpus> {
    let c = &cfg.corpus;
    UtteranceCorpus::synthetic(c.vocab, c.channels, c.speakers, c.seed)
}

fn train_cmd(cfg: &RunConfig) -> CliResult<()> {
    let c = &cfg.corpus;
    let mut init = rng::derive(cfg.training.seed, &[0x1417]);
    let (data, mut prior) = match c.task {
        Task::Mixture => (
            TrainingData::from_corpus(&c.mixture, c.per_label, c.unlabeled, c.speakers, c.seed)?,
            None,
        ),
        Task::Utterance => {
            let corpus = utterance_corpus(cfg)?;
            let data = TrainingData::from_utterances(&corpus, &c.labels, c.per_label, c.unlabeled, c.max_tokens, c.seed)?;
            (data, Some(TextPriorNet::new(c.vocab, c.channels, &mut init)?))
        }
    };
    let mut net = ToyScoreNet::new(data.channels(), &mut init);
    let report = train(&mut net, prior.as_mut(), &data, &cfg.schedule, &cfg.training)?;
    let dir = out_dir(cfg)?;
    write_text(&dir.join("train_loss.csv"), &report.to_csv())?;
    let ckpt = Checkpoint {
        schedule: cfg.schedule,
        score_net: net,
        text_prior: prior,
    };
    ckpt.write(&dir.join("model.ckpt"))?;
    let first = report.history.first().map_or(f64::NAN, |r| r.diffusion);
    let last = report.history.last().map_or(f64::NAN, |r| r.diffusion);
    println!(
        "trained {} iterations: diffusion loss {first:.4} -> {last:.4}, null fraction {:.4}",
        report.history.len(),
        report.null_fraction()
    );
    Ok(())
}

fn tokens_for(args: &SampleArgs, cfg: &RunConfig, vocab: usize) -> Result<TokenSequence> {
    match &args.tokens {
        Some(text) => TokenSequence::parse(text, vocab),
        None => {
            let mut r = rng::derive(cfg.sampler.seed, &[0x70C5]);
            let len = r.random_range(1..=cfg.corpus.max_tokens.max(1));
            TokenSequence::new((0..len).map(|_| r.random_range(0..vocab)).collect(), vocab)
        }
    }
}

fn sample_cmd(cfg: &RunConfig, args: &SampleArgs) -> CliResult<()> {
    let label = parse_label(&args.emotion)?;
    let ckpt = args.checkpoint.as_deref().map(Checkpoint::read).transpose()?;
    let schedule = ckpt.as_ref().map_or(cfg.schedule, |c| c.schedule);
    let config: SamplerConfig = cfg.sampler;
    let dir = out_dir(cfg)?;

    if let Some(ck) = ckpt.as_ref().filter(|c| c.text_prior.is_none()) {
        let dim = ck.score_net.state_dim();
        let bank = SpeakerBank::synthetic(cfg.corpus.speakers.max(1), cfg.corpus.seed);
        let cond = Conditioning::new(bank.get(args.speaker)?.clone(), label);
        let prior = PriorField::standard(1, dim);
        let states = sample_many(&ck.score_net, &schedule, &prior, &cond, &config, args.count.max(1))?;
        let mut csv = (0..dim).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
        csv.push('\n');
        for s in &states {
            csv.push_str(&s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            csv.push('\n');
        }
        write_text(&dir.join("samples.csv"), &csv)?;
        println!("wrote {} samples to {}", states.len(), dir.join("samples.csv").display());
        return Ok(());
    }

    let corpus = utterance_corpus(cfg)?;
    let cond = Conditioning::new(corpus.speakers.get(args.speaker)?.clone(), label);
    let out = match &ckpt {
        Some(ck) => {
            let tp = ck.text_prior.as_ref().expect("filtered above");
            let tokens = tokens_for(args, cfg, tp.vocab())?;
            let (mu, _) = tp.prior_mean(&tokens)?;
            let prior = PriorField::with_unit_variance(mu);
            sample(&ck.score_net, &schedule, &prior, &cond, &config, args.dump_traj)?
        }
        None => {
            let tokens = tokens_for(args, cfg, corpus.vocab)?;
            let labels: Vec<Emotion> = if cfg.corpus.labels.is_empty() {
                Emotion::ALL.to_vec()
            } else {
                cfg.corpus.labels.clone()
            };
            let (field, prior) = corpus.score_field(schedule, &tokens, args.speaker, &labels)?;
            sample(&field, &schedule, &prior, &cond, &config, args.dump_traj)?
        }
    };
    if out.state.ncols() != audio::MEL_CHANNELS {
        return Err(Failure::Input(format!(
            "model produces {} channels; mel output needs {}",
            out.state.ncols(),
            audio::MEL_CHANNELS
        )));
    }
    let mel = MelSpectrogram::new(Array2::from(out.state))?;
    let mel_path = dir.join("sample.mel");
    mel.write(&mel_path)?;
    if let Some(traj) = &out.trajectory {
        write_text(&dir.join("trajectory.csv"), &traj.to_csv())?;
    }
    if args.wav {
        let wav = audio::griffin_lim(&mel, cfg.dsp.griffin_lim_iterations)?;
        audio::write_wav(&dir.join("sample.wav"), &wav)?;
    }
    println!("wrote {} frames to {}", mel.frames(), mel_path.display());
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig, args: &SweepArgs) -> CliResult<()> {
    let ckpt = args.checkpoint.as_deref().map(Checkpoint::read).transpose()?;
    let corpus = if ckpt.is_some() { &cfg.corpus.mixture } else { &cfg.sweep.corpus };
    let schedule = ckpt.as_ref().map_or(cfg.schedule, |c| c.schedule);
    let sweep = SweepConfig {
        weights: cfg.sweep.weights.clone(),
        samples: cfg.sweep.samples,
        sampler: cfg.sampler,
    };
    let classifier = if cfg.sweep.classifier {
        Some(ToyClassifier::train(corpus, &cfg.sweep.classifier_config)?)
    } else {
        None
    };
    let labels = corpus.labels();
    let bank = SpeakerBank::synthetic(cfg.corpus.speakers.max(1), cfg.corpus.seed);
    let speaker = bank.get(args.speaker)?;
    let clf = classifier.as_ref().map(|c| &c.0);
    let report = match &ckpt {
        Some(ck) => {
            if ck.score_net.state_dim() != corpus.dim {
                return Err(Failure::Input(format!(
                    "checkpoint has state dimension {} but the corpus has {}",
                    ck.score_net.state_dim(),
                    corpus.dim
                )));
            }
            intensity_sweep(&ck.score_net, &schedule, corpus, &labels, &sweep, speaker, clf)?
        }
        None => {
            let field = corpus.score_field(schedule)?;
            intensity_sweep(&field, &schedule, corpus, &labels, &sweep, speaker, clf)?
        }
    };
    let dir = out_dir(cfg)?;
    write_text(&dir.join("sweep.csv"), &report.to_csv())?;
    if let Some((clf, held_out)) = &classifier {
        let test = corpus.labeled_samples(cfg.sweep.classifier_config.test_per_label, cfg.sampler.seed ^ 0xACC)?;
        let acc = accuracy_report(clf, &test)?;
        write_text(&dir.join("accuracy.csv"), &acc.to_csv())?;
        println!("classifier held-out accuracy {held_out:.4}");
    }
    emit(&report.to_csv())
}
