//! End-to-end backend pipeline and the four-system comparison.
//!
//! LDA is fitted once on the raw labeled out-of-domain set and shared by all
//! systems. Feature-space CORAL is derived from raw-space covariances and
//! applied before that LDA; CORAL+ works on the projected PLDA model with the
//! in-domain covariance measured after projection.

use std::fmt;
use std::io::Write;

use crate::adapt::{coral_apply, coral_plus, fit_coral, AdaptConfig};
use crate::data::{compute_stats, EmbeddingSet, GaussianStats, TrialList};
use crate::error::Result;
use crate::lda::{apply_lda, fit_lda, LdaTransform};
use crate::metrics::{compute_eer, compute_min_dcf, format_sig6, DcfParams};
use crate::plda::{score_trials, train_plda, PldaModel};
use crate::synth::SynthDataset;

#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub ood_labeled: EmbeddingSet,
    pub in_unlabeled: EmbeddingSet,
    pub in_enroll: EmbeddingSet,
    pub in_test: EmbeddingSet,
    pub trials: TrialList,
}

impl From<SynthDataset> for ExperimentData {
    fn from(ds: SynthDataset) -> Self {
        Self {
            ood_labeled: ds.ood_labeled,
            in_unlabeled: ds.in_unlabeled,
            in_enroll: ds.in_enroll,
            in_test: ds.in_test,
            trials: ds.trials,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub lda_dim: usize,
    /// `regularize` is ignored: the two CORAL+ systems fix it on and off.
    /// `recenter` applies to the adapted systems; the out-of-domain baseline
    /// always keeps the mean it was trained with.
    pub adapt: AdaptConfig,
    pub dcf: DcfParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            lda_dim: 20,
            adapt: AdaptConfig::default(),
            dcf: DcfParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Ood,
    FeatureCoral,
    CoralPlus,
    CoralPlusNoReg,
}

impl System {
    pub const ALL: [System; 4] = [System::Ood, System::FeatureCoral, System::CoralPlus, System::CoralPlusNoReg];

    pub fn label(self) -> &'static str {
        match self {
            System::Ood => "OOD PLDA",
            System::FeatureCoral => "CORAL PLDA",
            System::CoralPlus => "CORAL+ PLDA",
            System::CoralPlusNoReg => "w/o reg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemResult {
    pub system: System,
    /// Fraction in [0, 1].
    pub eer: f64,
    pub min_dcf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub results: Vec<SystemResult>,
}

impl ExperimentReport {
    pub fn get(&self, system: System) -> &SystemResult {
        self.results
            .iter()
            .find(|r| r.system == system)
            .expect("every system is evaluated")
    }

    pub fn write_table<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "{self}")?;
        w.flush()
    }
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} | {:>9} | {:>9}", "system", "EER (%)", "MinCost")?;
        writeln!(f, "{:-<12}-+-{:-<9}-+-{:-<9}", "", "", "")?;
        for r in &self.results {
            writeln!(
                f,
                "{:<12} | {:>9} | {:>9}",
                r.system.label(),
                format!("{:.2}", 100.0 * r.eer),
                format_sig6(r.min_dcf)
            )?;
        }
        Ok(())
    }
}

/// Fits LDA on the labeled set, projects it, and trains PLDA in the projected space.
pub fn train_backend(train: &EmbeddingSet, lda_dim: usize) -> Result<(LdaTransform, PldaModel)> {
    let lda = fit_lda(train, lda_dim)?;
    let model = train_plda(&apply_lda(&lda, train)?)?;
    Ok((lda, model))
}

/// In-domain statistics in the projected space.
pub fn projected_stats(lda: &LdaTransform, set: &EmbeddingSet) -> Result<GaussianStats> {
    compute_stats(&apply_lda(lda, set)?)
}

/// `(EER, minDCF)` of a projected-space model on the in-domain trials.
pub fn evaluate(
    model: &PldaModel,
    lda: &LdaTransform,
    data: &ExperimentData,
    dcf: &DcfParams,
) -> Result<(f64, f64)> {
    let enroll = apply_lda(lda, &data.in_enroll)?;
    let test = apply_lda(lda, &data.in_test)?;
    let scores = score_trials(model, &enroll, &test, &data.trials)?;
    Ok((compute_eer(&scores)?, compute_min_dcf(&scores, dcf)?))
}

/// Runs the four systems on one dataset.
pub fn run_experiment(data: &ExperimentData, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.adapt.validate()?;
    let (lda, ood_model) = train_backend(&data.ood_labeled, cfg.lda_dim)?;
    let in_stats = projected_stats(&lda, &data.in_unlabeled)?;
    let recentre = |m: PldaModel| -> Result<PldaModel> {
        if cfg.adapt.recenter {
            m.with_mean(in_stats.mean.clone())
        } else {
            Ok(m)
        }
    };

    let raw_out = compute_stats(&data.ood_labeled)?;
    let raw_in = compute_stats(&data.in_unlabeled)?;
    let coral = fit_coral(&raw_out.total_cov, &raw_in.total_cov, cfg.adapt.eig_floor)?;
    let pseudo_in = coral_apply(&coral, &data.ood_labeled)?;
    let coral_model = train_plda(&apply_lda(&lda, &pseudo_in)?)?;

    let reg = AdaptConfig {
        regularize: true,
        ..cfg.adapt
    };
    let no_reg = AdaptConfig {
        regularize: false,
        ..cfg.adapt
    };
    let models = [
        (System::Ood, ood_model.clone()),
        (System::FeatureCoral, recentre(coral_model)?),
        (
            System::CoralPlus,
            coral_plus(&ood_model, &in_stats.total_cov, &in_stats.mean, &reg)?,
        ),
        (
            System::CoralPlusNoReg,
            coral_plus(&ood_model, &in_stats.total_cov, &in_stats.mean, &no_reg)?,
        ),
    ];

    let mut results = Vec::with_capacity(models.len());
    for (system, model) in &models {
        let (eer, min_dcf) = evaluate(model, &lda, data, &cfg.dcf)?;
        results.push(SystemResult {
            system: *system,
            eer,
            min_dcf,
        });
    }
    Ok(ExperimentReport { results })
}
