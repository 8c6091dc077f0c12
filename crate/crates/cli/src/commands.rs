//! Subcommand implementations.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use coralplus::adapt::{coral_apply, coral_plus_with_report, fit_coral};
use coralplus::data::{
    compute_stats, load_embeddings, load_lda, load_model, load_scores, load_trials, save_embeddings, save_lda,
    save_model, save_scores, save_trials, write_scores,
};
use coralplus::lda::{apply_lda, fit_lda};
use coralplus::metrics::{compute_eer, compute_min_dcf, compute_min_dcf_averaged, format_sig6, SRE16_PRIORS};
use coralplus::pipeline::{run_experiment, ExperimentConfig, ExperimentData};
use coralplus::plda::{score_trials, train_plda};
use coralplus::synth::generate;
use coralplus::{EmbeddingSet, LdaTransform};

use crate::config::PathBundle;
use crate::{AdaptArgs, Command, EvalArgs, ExperimentArgs, ScoreArgs, SynthArgs, TrainArgs};

pub const LDA_FILE: &str = "lda.txt";
pub const MODEL_FILE: &str = "plda.txt";

#[derive(Debug)]
pub enum CliError {
    Core(coralplus::Error),
    Io { path: PathBuf, source: io::Error },
    Config { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Config { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl From<coralplus::Error> for CliError {
    fn from(e: coralplus::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => train(a),
        Command::Adapt(a) => adapt(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Experiment(a) => experiment(a),
    }
}

/// Fails on the first input that does not exist, before any work is done.
fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::io(p, io::Error::new(io::ErrorKind::NotFound, "no such file")));
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn project(lda: Option<&LdaTransform>, set: EmbeddingSet) -> Result<EmbeddingSet> {
    Ok(match lda {
        Some(t) => apply_lda(t, &set)?,
        None => set,
    })
}

fn train(a: TrainArgs) -> Result<()> {
    require_inputs([a.train.as_path()].into_iter().chain(a.lda.as_deref()))?;
    let set = load_embeddings(&a.train)?;
    let lda = match (&a.lda, a.lda_dim) {
        (Some(path), _) => load_lda(path)?,
        (None, Some(dim)) => fit_lda(&set, dim as usize)?,
        (None, None) => unreachable!("clap requires --lda-dim or --lda"),
    };
    let model = train_plda(&apply_lda(&lda, &set)?)?;
    create_dir(&a.out_dir)?;
    save_lda(&lda, a.out_dir.join(LDA_FILE))?;
    save_model(&model, a.out_dir.join(MODEL_FILE))?;
    println!(
        "speakers {} utterances {} in_dim {} lda_dim {}",
        set.n_speakers(),
        set.len(),
        lda.in_dim(),
        lda.out_dim()
    );
    Ok(())
}

fn adapt(a: AdaptArgs) -> Result<()> {
    if a.feature_coral {
        let train = a.train.as_deref().expect("clap requires --train with --feature-coral");
        require_inputs([train, a.adapt.as_path()])?;
        let ood = load_embeddings(train)?;
        let ind = load_embeddings(&a.adapt)?;
        let coral = fit_coral(
            &compute_stats(&ood)?.total_cov,
            &compute_stats(&ind)?.total_cov,
            a.flags.eig_floor,
        )?;
        save_embeddings(&coral_apply(&coral, &ood)?, &a.out)?;
        println!("transformed {} embeddings", ood.len());
        return Ok(());
    }

    let model_path = a.model.as_deref().expect("clap requires --model without --feature-coral");
    require_inputs([model_path, a.adapt.as_path()].into_iter().chain(a.lda.as_deref()))?;
    let model = load_model(model_path)?;
    let lda = a.lda.as_deref().map(load_lda).transpose()?;
    let ind = project(lda.as_ref(), load_embeddings(&a.adapt)?)?;
    let stats = compute_stats(&ind)?;
    let cfg = a.flags.config(!a.no_reg);
    let (adapted, report) = coral_plus_with_report(&model, &stats.total_cov, &stats.mean, &cfg)?;
    save_model(&adapted, &a.out)?;
    if let Some(path) = &a.diagnostics {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        report.write(BufWriter::new(file)).map_err(|e| CliError::io(path, e))?;
    }
    println!(
        "clipped phi_b {} phi_w {}",
        report.between.clipped_count(),
        report.within.clipped_count()
    );
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    require_inputs(
        [a.model.as_path(), &a.enroll, &a.test, &a.trials]
            .into_iter()
            .chain(a.lda.as_deref()),
    )?;
    let model = load_model(&a.model)?;
    let lda = a.lda.as_deref().map(load_lda).transpose()?;
    let enroll = project(lda.as_ref(), load_embeddings(&a.enroll)?)?;
    let test = project(lda.as_ref(), load_embeddings(&a.test)?)?;
    let trials = load_trials(&a.trials)?;
    let scores = score_trials(&model, &enroll, &test, &trials)?;
    match &a.out {
        Some(path) => save_scores(&scores, path)?,
        None => write_scores(&scores, io::stdout().lock()).map_err(|e| CliError::io(Path::new("<stdout>"), e))?,
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    require_inputs([a.scores.as_path()].into_iter().chain(a.trials.as_deref()))?;
    let params = a.cost.params()?;
    let mut scores = load_scores(&a.scores)?;
    if let Some(path) = &a.trials {
        scores = scores.label_from(&load_trials(path)?)?;
    }
    let mut out = io::stdout().lock();
    let mut emit = |line: String| writeln!(out, "{line}").map_err(|e| CliError::io(Path::new("<stdout>"), e));
    emit(format!("eer {}", format_sig6(compute_eer(&scores)?)))?;
    emit(format!(
        "min_dcf {} {}",
        params.p_target,
        format_sig6(compute_min_dcf(&scores, &params)?)
    ))?;
    if a.two_prior {
        emit(format!(
            "min_dcf_avg {}",
            format_sig6(compute_min_dcf_averaged(&scores, &SRE16_PRIORS, params.c_miss, params.c_fa)?)
        ))?;
    }
    Ok(())
}

/// File names written by `synth`, in `PathBundle` field order.
pub const SYNTH_FILES: [&str; 5] = ["ood_train.txt", "in_unlabeled.txt", "enroll.txt", "test.txt", "trials.txt"];
pub const BUNDLE_FILE: &str = "paths.toml";

fn synth(a: SynthArgs) -> Result<()> {
    let ds = generate(&a.synth.config())?;
    create_dir(&a.out_dir)?;
    let [train, adapt, enroll, test, trials] = SYNTH_FILES;
    save_embeddings(&ds.ood_labeled, a.out_dir.join(train))?;
    save_embeddings(&ds.in_unlabeled, a.out_dir.join(adapt))?;
    save_embeddings(&ds.in_enroll, a.out_dir.join(enroll))?;
    save_embeddings(&ds.in_test, a.out_dir.join(test))?;
    save_trials(&ds.trials, a.out_dir.join(trials))?;
    let bundle = PathBundle {
        train: train.into(),
        adapt: adapt.into(),
        enroll: enroll.into(),
        test: test.into(),
        trials: trials.into(),
    };
    let path = a.out_dir.join(BUNDLE_FILE);
    std::fs::write(&path, bundle.to_toml()).map_err(|e| CliError::io(&path, e))?;
    println!(
        "ood {} unlabeled {} enroll {} test {} trials {}",
        ds.ood_labeled.len(),
        ds.in_unlabeled.len(),
        ds.in_enroll.len(),
        ds.in_test.len(),
        ds.trials.len()
    );
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let data = match &a.config {
        Some(path) => {
            require_inputs([path.as_path()])?;
            let bundle = PathBundle::load(path)?;
            require_inputs(bundle.paths())?;
            ExperimentData {
                ood_labeled: load_embeddings(&bundle.train)?,
                in_unlabeled: load_embeddings(&bundle.adapt)?,
                in_enroll: load_embeddings(&bundle.enroll)?,
                in_test: load_embeddings(&bundle.test)?,
                trials: load_trials(&bundle.trials)?,
            }
        }
        None => generate(&a.synth.config())?.into(),
    };
    let cfg = ExperimentConfig {
        lda_dim: a.lda_dim as usize,
        adapt: a.flags.config(true),
        dcf: a.cost.params()?,
    };
    let report = run_experiment(&data, &cfg)?;
    print!("{report}");
    if let Some(path) = &a.out {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        report.write_table(BufWriter::new(file)).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}
