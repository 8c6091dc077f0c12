//! `coralplus`: train, adapt, score and evaluate a PLDA backend from the shell.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad or missing input data,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coralplus::adapt::DEFAULT_ADAPTATION_WEIGHT;
use coralplus::linalg::DEFAULT_EIG_FLOOR;
use coralplus::{AdaptConfig, DcfParams, SynthConfig};

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(
    name = "coralplus",
    version,
    about = "PLDA backend with CORAL and CORAL+ domain adaptation",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit LDA and PLDA on labeled embeddings.
    Train(TrainArgs),
    /// Adapt a PLDA model to unlabeled in-domain embeddings (CORAL+), or
    /// CORAL-transform a training set for the feature-space baseline.
    Adapt(AdaptArgs),
    /// Score a trial list.
    Score(ScoreArgs),
    /// Report EER and minimum detection cost for a score file.
    Eval(EvalArgs),
    /// Write a synthetic domain-mismatch dataset.
    Synth(SynthArgs),
    /// Compare the unadapted, CORAL, CORAL+ and unregularized CORAL+ systems.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Labeled training embeddings.
    #[arg(long)]
    train: PathBuf,
    /// LDA output dimension.
    #[arg(long, required_unless_present = "lda", value_parser = clap::value_parser!(u32).range(1..))]
    lda_dim: Option<u32>,
    /// Reuse an existing LDA transform instead of fitting one.
    #[arg(long, conflicts_with = "lda_dim")]
    lda: Option<PathBuf>,
    /// Directory receiving `lda.txt` and `plda.txt`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct AdaptationFlags {
    /// Between-class adaptation weight in [0, 1].
    #[arg(long, default_value_t = DEFAULT_ADAPTATION_WEIGHT, value_parser = unit_interval)]
    beta: f64,
    /// Within-class adaptation weight in [0, 1].
    #[arg(long, default_value_t = DEFAULT_ADAPTATION_WEIGHT, value_parser = unit_interval)]
    gamma: f64,
    /// Keep the out-of-domain mean instead of moving to the in-domain mean.
    #[arg(long)]
    no_recenter: bool,
    /// Relative eigenvalue floor for inverse square roots.
    #[arg(long, default_value_t = DEFAULT_EIG_FLOOR, value_parser = eig_floor)]
    eig_floor: f64,
}

impl AdaptationFlags {
    fn config(&self, regularize: bool) -> AdaptConfig {
        AdaptConfig {
            beta: self.beta,
            gamma: self.gamma,
            regularize,
            eig_floor: self.eig_floor,
            recenter: !self.no_recenter,
        }
    }
}

#[derive(Debug, Args)]
struct AdaptArgs {
    /// PLDA model to adapt.
    #[arg(long, required_unless_present = "feature_coral")]
    model: Option<PathBuf>,
    /// LDA transform the model was trained behind.
    #[arg(long, conflicts_with = "feature_coral")]
    lda: Option<PathBuf>,
    /// Unlabeled in-domain embeddings.
    #[arg(long)]
    adapt: PathBuf,
    /// Output file: the adapted model, or the transformed training set with
    /// `--feature-coral`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: AdaptationFlags,
    /// Let adaptation also shrink variances (no regularization).
    #[arg(long)]
    no_reg: bool,
    /// Write per-dimension adaptation diagnostics to this file.
    #[arg(long, conflicts_with = "feature_coral")]
    diagnostics: Option<PathBuf>,
    /// Emit a CORAL-transformed copy of `--train` instead of adapting a model.
    #[arg(long, requires = "train", conflicts_with = "model")]
    feature_coral: bool,
    /// Labeled out-of-domain embeddings (with `--feature-coral`).
    #[arg(long, requires = "feature_coral")]
    train: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// LDA transform applied to enrollment and test embeddings first.
    #[arg(long)]
    lda: Option<PathBuf>,
    #[arg(long)]
    enroll: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    trials: PathBuf,
    /// Score file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CostFlags {
    /// Target prior of the detection cost.
    #[arg(long, default_value_t = 0.01, value_parser = probability)]
    p_target: f64,
    /// Cost of a miss.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    c_miss: f64,
    /// Cost of a false alarm.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    c_fa: f64,
}

impl CostFlags {
    fn params(&self) -> coralplus::Result<DcfParams> {
        DcfParams::new(self.p_target, self.c_miss, self.c_fa)
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Score file, optionally with a fourth label column.
    #[arg(long)]
    scores: PathBuf,
    /// Labeled trial list supplying the labels.
    #[arg(long)]
    trials: Option<PathBuf>,
    #[command(flatten)]
    cost: CostFlags,
    /// Also report the cost averaged over target priors 0.01 and 0.005.
    #[arg(long)]
    two_prior: bool,
}

#[derive(Debug, Args)]
struct SynthFlags {
    #[arg(long, default_value_t = SynthConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_speakers_ood)]
    n_speakers_ood: usize,
    #[arg(long, default_value_t = SynthConfig::default().utts_per_speaker_ood)]
    utts_per_speaker_ood: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_unlabeled_in)]
    n_unlabeled_in: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_trial_speakers)]
    n_trial_speakers: usize,
    #[arg(long, default_value_t = SynthConfig::default().utts_per_trial_speaker)]
    utts_per_trial_speaker: usize,
    /// Spectral norm of `M − I` for the in-domain linear map `M`.
    #[arg(long, default_value_t = SynthConfig::default().domain_shift_scale)]
    domain_shift_scale: f64,
    /// Length of the in-domain mean offset.
    #[arg(long, default_value_t = SynthConfig::default().mean_shift_scale)]
    mean_shift_scale: f64,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    seed: u64,
}

impl SynthFlags {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            dim: self.dim,
            n_speakers_ood: self.n_speakers_ood,
            utts_per_speaker_ood: self.utts_per_speaker_ood,
            n_unlabeled_in: self.n_unlabeled_in,
            n_trial_speakers: self.n_trial_speakers,
            utts_per_trial_speaker: self.utts_per_trial_speaker,
            domain_shift_scale: self.domain_shift_scale,
            mean_shift_scale: self.mean_shift_scale,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory receiving the dataset files.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    synth: SynthFlags,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// TOML file naming the train/adapt/enroll/test/trials files to use
    /// instead of generating synthetic data.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthFlags,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    lda_dim: u32,
    #[command(flatten)]
    flags: AdaptationFlags,
    #[command(flatten)]
    cost: CostFlags,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn real_in(s: &str, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if ok(v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in {range}"))
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    real_in(s, |v| (0.0..=1.0).contains(&v), "[0, 1]")
}

fn probability(s: &str) -> Result<f64, String> {
    real_in(s, |v| v > 0.0 && v < 1.0, "(0, 1)")
}

fn positive(s: &str) -> Result<f64, String> {
    real_in(s, |v| v > 0.0 && v.is_finite(), "(0, ∞)")
}

fn eig_floor(s: &str) -> Result<f64, String> {
    real_in(s, |v| (0.0..1.0).contains(&v), "[0, 1)")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful runs.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
