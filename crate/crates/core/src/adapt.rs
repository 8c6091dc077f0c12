//! Unsupervised domain adaptation.
//!
//! Feature-space CORAL whitens out-of-domain embeddings with `C_o^{-1/2}` and
//! re-colors them with `C_I^{1/2}`. CORAL+ applies the same alignment to the
//! covariances of a trained PLDA model instead, interpolating each of `Φ_b`,
//! `Φ_w` toward its transported version. With regularization on, the
//! interpolation only ever adds variance: the update is built in the basis
//! that simultaneously diagonalizes `Φ` and `A·Φ·Aᵀ`, and negative
//! directions are dropped.
//!
//! Orientation: embeddings map as `φ' = A·φ` with `A = C_I^{1/2}·C_o^{-1/2}`,
//! so covariances transport as `A·Φ·Aᵀ` and `A·C_o·Aᵀ = C_I` holds exactly.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{
    floor_spectrum, inv_sqrt_psd_named, simdiag_with_floor, sqrt_psd_named, SymMatrix, DEFAULT_EIG_FLOOR,
};
use crate::plda::{PldaModel, WITHIN_FLOOR};

/// `e − 1` values closer to zero than this are not reported as clipped.
pub const CLIP_TOLERANCE: f64 = 1e-10;

/// Default adaptation weight for both covariances.
pub const DEFAULT_ADAPTATION_WEIGHT: f64 = 0.80;

#[derive(Debug, Clone, PartialEq)]
pub struct CoralTransform {
    a: DMatrix<f64>,
    c_out_sqrt_inv: SymMatrix,
    c_in_sqrt: SymMatrix,
}

impl CoralTransform {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// The alignment matrix `A`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c_out_sqrt_inv(&self) -> &SymMatrix {
        &self.c_out_sqrt_inv
    }

    pub fn c_in_sqrt(&self) -> &SymMatrix {
        &self.c_in_sqrt
    }
}

pub fn fit_coral(c_out: &SymMatrix, c_in: &SymMatrix, floor: f64) -> Result<CoralTransform> {
    if c_out.dim() != c_in.dim() {
        return Err(Error::DimMismatch {
            expected: c_out.dim(),
            found: c_in.dim(),
        });
    }
    let c_out_sqrt_inv = inv_sqrt_psd_named(c_out, floor, "C_o")?;
    let c_in_sqrt = sqrt_psd_named(c_in, 0.0, "C_I")?;
    Ok(CoralTransform {
        a: c_in_sqrt.as_matrix() * c_out_sqrt_inv.as_matrix(),
        c_out_sqrt_inv,
        c_in_sqrt,
    })
}

/// Maps every embedding through `φ' = A·φ`. Labels and ids are kept.
pub fn coral_apply(t: &CoralTransform, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    if set.dim() != t.dim() {
        return Err(Error::DimMismatch {
            expected: t.dim(),
            found: set.dim(),
        });
    }
    set.map_vectors(t.dim(), |x| &t.a * x)
}

/// Pseudo-in-domain covariance `A·Φ·Aᵀ`.
pub fn transport_cov(t: &CoralTransform, phi: &SymMatrix) -> Result<SymMatrix> {
    phi.congruence(&t.a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptConfig {
    /// Weight on the between-class update, in [0, 1].
    pub beta: f64,
    /// Weight on the within-class update, in [0, 1].
    pub gamma: f64,
    /// Keep only variance-increasing directions of the update.
    pub regularize: bool,
    /// Relative eigenvalue floor for inverse square roots and whitening.
    pub eig_floor: f64,
    /// Replace the model mean by the in-domain mean.
    pub recenter: bool,
}

impl AdaptConfig {
    pub fn new(beta: f64, gamma: f64, regularize: bool) -> Result<Self> {
        let cfg = Self {
            beta,
            gamma,
            regularize,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Precondition(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        if !(self.eig_floor >= 0.0 && self.eig_floor < 1.0) {
            return Err(Error::Precondition(format!("eig_floor {} must lie in [0, 1)", self.eig_floor)));
        }
        Ok(())
    }
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_ADAPTATION_WEIGHT,
            gamma: DEFAULT_ADAPTATION_WEIGHT,
            regularize: true,
            eig_floor: DEFAULT_EIG_FLOOR,
            recenter: true,
        }
    }
}

/// Per-dimension view of one covariance update in the simultaneously
/// diagonalized basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixReport {
    /// `eᵢ − 1`, descending.
    pub e_minus_one: Vec<f64>,
    /// Entries removed by the regularizer. All false when regularization is off.
    pub clipped: Vec<bool>,
}

impl MatrixReport {
    pub fn clipped_count(&self) -> usize {
        self.clipped.iter().filter(|&&c| c).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationReport {
    pub between: MatrixReport,
    pub within: MatrixReport,
}

impl AdaptationReport {
    /// One line per dimension: `<matrix> <index> <e_minus_one> <clipped:0|1>`.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (name, rep) in [("phi_b", &self.between), ("phi_w", &self.within)] {
            for (i, (v, c)) in rep.e_minus_one.iter().zip(&rep.clipped).enumerate() {
                writeln!(w, "{name} {i} {v:.16e} {}", u8::from(*c))?;
            }
        }
        w.flush()
    }
}

/// Returns `(Φ⁺, report)` for one covariance.
fn adapt_covariance(
    phi: &SymMatrix,
    a: &DMatrix<f64>,
    weight: f64,
    cfg: &AdaptConfig,
) -> Result<(SymMatrix, MatrixReport)> {
    let transported = phi.congruence(a)?;
    let sd = simdiag_with_floor(phi, &transported, cfg.eig_floor)?;
    let e_minus_one: Vec<f64> = sd.e.iter().map(|e| e - 1.0).collect();
    let clipped: Vec<bool> = e_minus_one
        .iter()
        .map(|&v| cfg.regularize && v < -CLIP_TOLERANCE)
        .collect();
    let diag: Vec<f64> = e_minus_one
        .iter()
        .map(|&v| if cfg.regularize { v.max(0.0) } else { v })
        .collect();
    // B^{-T}·D·B^{-1}
    let update = SymMatrix::from_diagonal(&diag).congruence(&sd.b_inv.transpose())?;
    let adapted = if weight == 0.0 {
        phi.clone()
    } else {
        phi.add(&update.scale(weight))
    };
    Ok((adapted, MatrixReport { e_minus_one, clipped }))
}

fn check_inputs(model: &PldaModel, c_in: &SymMatrix, cfg: &AdaptConfig) -> Result<()> {
    cfg.validate()?;
    if c_in.dim() != model.dim() {
        return Err(Error::DimMismatch {
            expected: model.dim(),
            found: c_in.dim(),
        });
    }
    Ok(())
}

/// CORAL+ adaptation with its per-dimension diagnostics.
pub fn coral_plus_with_report(
    model: &PldaModel,
    c_in: &SymMatrix,
    mu_in: &DVector<f64>,
    cfg: &AdaptConfig,
) -> Result<(PldaModel, AdaptationReport)> {
    check_inputs(model, c_in, cfg)?;
    if mu_in.len() != model.dim() {
        return Err(Error::DimMismatch {
            expected: model.dim(),
            found: mu_in.len(),
        });
    }
    let coral = fit_coral(&model.total(), c_in, cfg.eig_floor)?;
    let (phi_b, between) = adapt_covariance(model.phi_b(), &coral.a, cfg.beta, cfg)?;
    let (phi_w, within) = adapt_covariance(model.phi_w(), &coral.a, cfg.gamma, cfg)?;
    let (phi_w, _) = floor_spectrum(&phi_w, WITHIN_FLOOR, "adapted phi_w")?;
    let mu = if cfg.recenter { mu_in.clone() } else { model.mu().clone() };
    Ok((PldaModel::new(mu, phi_b, phi_w)?, AdaptationReport { between, within }))
}

/// CORAL+: model-space adaptation of a PLDA model toward in-domain covariance `c_in`.
pub fn coral_plus(model: &PldaModel, c_in: &SymMatrix, mu_in: &DVector<f64>, cfg: &AdaptConfig) -> Result<PldaModel> {
    coral_plus_with_report(model, c_in, mu_in, cfg).map(|(m, _)| m)
}

pub fn adaptation_diagnostics(model: &PldaModel, c_in: &SymMatrix, cfg: &AdaptConfig) -> Result<AdaptationReport> {
    check_inputs(model, c_in, cfg)?;
    let coral = fit_coral(&model.total(), c_in, cfg.eig_floor)?;
    let (_, between) = adapt_covariance(model.phi_b(), &coral.a, cfg.beta, cfg)?;
    let (_, within) = adapt_covariance(model.phi_w(), &coral.a, cfg.gamma, cfg)?;
    Ok(AdaptationReport { between, within })
}
