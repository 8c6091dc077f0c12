//! Two-covariance PLDA.
//!
//! The model is a Gaussian in embedding space with total covariance
//! `Φ_b + Φ_w`; two embeddings of the same speaker share the between-speaker
//! component, so their joint covariance is `[[C, Φ_b], [Φ_b, C]]`. Loading
//! matrices are never materialized; everything runs on the two covariances.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{compute_scatter, compute_stats, EmbeddingSet, TrialList};
use crate::error::{Error, Result};
use crate::linalg::{eigh_named, floor_spectrum, inverse_spd, SymMatrix, PSD_TOLERANCE};
use crate::metrics::{ScoreSet, ScoredTrial};

/// Relative eigenvalue floor applied to trained (and adapted) within-class covariances.
pub const WITHIN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    mu: DVector<f64>,
    phi_b: SymMatrix,
    phi_w: SymMatrix,
}

impl PldaModel {
    /// Validates that `phi_w` and the total are positive definite and `phi_b`
    /// is positive semi-definite.
    pub fn new(mu: DVector<f64>, phi_b: SymMatrix, phi_w: SymMatrix) -> Result<Self> {
        let d = mu.len();
        if phi_b.dim() != d || phi_w.dim() != d {
            return Err(Error::ModelInvalid(format!(
                "dimension mismatch: mu {d}, phi_b {}, phi_w {}",
                phi_b.dim(),
                phi_w.dim()
            )));
        }
        if mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::ModelInvalid("mu has non-finite entries".into()));
        }
        let w = eigh_named(&phi_w, "phi_w")?;
        if !(w.min_value() > 0.0) {
            return Err(Error::ModelInvalid(format!(
                "phi_w is not positive definite (min eigenvalue {:e})",
                w.min_value()
            )));
        }
        let b = eigh_named(&phi_b, "phi_b")?;
        let scale = b.max_value().max(w.max_value());
        if b.min_value() < -PSD_TOLERANCE * scale {
            return Err(Error::ModelInvalid(format!(
                "phi_b is not positive semi-definite (min eigenvalue {:e})",
                b.min_value()
            )));
        }
        let t = eigh_named(&phi_b.add(&phi_w), "total")?;
        if !(t.min_value() > 0.0) {
            return Err(Error::ModelInvalid("total covariance is not positive definite".into()));
        }
        Ok(Self { mu, phi_b, phi_w })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn phi_b(&self) -> &SymMatrix {
        &self.phi_b
    }

    pub fn phi_w(&self) -> &SymMatrix {
        &self.phi_w
    }

    /// `Φ_b + Φ_w`.
    pub fn total(&self) -> SymMatrix {
        self.phi_b.add(&self.phi_w)
    }

    pub fn with_mean(mut self, mu: DVector<f64>) -> Result<Self> {
        if mu.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: mu.len(),
            });
        }
        self.mu = mu;
        Ok(self)
    }

    pub fn scorer(&self) -> Result<Scorer> {
        Scorer::new(self)
    }
}

/// Moment estimate of the two covariances from a labeled set.
pub fn train_plda(set: &EmbeddingSet) -> Result<PldaModel> {
    set.require_labeled("PLDA training")
        .map_err(|e| Error::InsufficientData(e.to_string()))?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in set.records() {
        *counts.entry(r.speaker_id.as_deref().unwrap_or_default()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "PLDA training needs at least 2 speakers, got {}",
            counts.len()
        )));
    }
    if counts.values().all(|&c| c < 2) {
        return Err(Error::InsufficientData(
            "PLDA training needs a speaker with at least 2 utterances".into(),
        ));
    }
    let mu = compute_stats(set)?.mean;
    let scatter = compute_scatter(set)?;
    let (phi_w, _) = floor_spectrum(&scatter.within, WITHIN_FLOOR, "within scatter")
        .map_err(|e| Error::InsufficientData(e.to_string()))?;
    PldaModel::new(mu, scatter.between, phi_w)
}

/// Precomputed quadratic forms for scoring in O(d²) per trial.
///
/// With `U = C + Φ_b` and `V = C − Φ_b`, the joint precision is
/// `½[[U⁻¹+V⁻¹, U⁻¹−V⁻¹], [U⁻¹−V⁻¹, U⁻¹+V⁻¹]]` and `log|joint| = log|U| + log|V|`.
#[derive(Debug, Clone)]
pub struct Scorer {
    mu: DVector<f64>,
    /// `½(U⁻¹ + V⁻¹) − C⁻¹`
    quad: DMatrix<f64>,
    /// `½(U⁻¹ − V⁻¹)`
    cross: DMatrix<f64>,
    /// `log|U| + log|V| − 2·log|C|`
    log_det_term: f64,
}

impl Scorer {
    fn new(model: &PldaModel) -> Result<Self> {
        let total = model.total();
        let plus = model.phi_b.scale(2.0).add(&model.phi_w);
        let invalid = |e: Error| Error::ModelInvalid(e.to_string());
        let (c_inv, ld_c) = inverse_spd(&total, "total").map_err(invalid)?;
        let (u_inv, ld_u) = inverse_spd(&plus, "C + phi_b").map_err(invalid)?;
        let (v_inv, ld_v) = inverse_spd(&model.phi_w, "phi_w").map_err(invalid)?;
        let (u, v, c) = (u_inv.as_matrix(), v_inv.as_matrix(), c_inv.as_matrix());
        Ok(Self {
            mu: model.mu.clone(),
            quad: (u + v) * 0.5 - c,
            cross: (u - v) * 0.5,
            log_det_term: ld_u + ld_v - 2.0 * ld_c,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn score(&self, phi1: &DVector<f64>, phi2: &DVector<f64>) -> Result<f64> {
        self.check(phi1)?;
        self.check(phi2)?;
        let a = self.side(phi1);
        let b = self.side(phi2);
        Ok(self.combine(&a, &b))
    }

    fn side(&self, x: &DVector<f64>) -> Side {
        let centred = x - &self.mu;
        let self_term = centred.dot(&(&self.quad * &centred));
        let projected = &self.cross * &centred;
        Side {
            centred,
            self_term,
            projected,
        }
    }

    fn combine(&self, a: &Side, b: &Side) -> f64 {
        let cross = a.centred.dot(&b.projected);
        -0.5 * (a.self_term + b.self_term + 2.0 * cross) - 0.5 * self.log_det_term
    }
}

struct Side {
    centred: DVector<f64>,
    self_term: f64,
    projected: DVector<f64>,
}

/// Natural-log likelihood ratio of the same-speaker versus different-speaker hypotheses.
pub fn score_pair(model: &PldaModel, phi1: &DVector<f64>, phi2: &DVector<f64>) -> Result<f64> {
    model.scorer()?.score(phi1, phi2)
}

/// Scores a trial list. Output order follows the trial list.
pub fn score_trials(
    model: &PldaModel,
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    trials: &TrialList,
) -> Result<ScoreSet> {
    for set in [enroll, test] {
        if set.dim() != model.dim() {
            return Err(Error::DimMismatch {
                expected: model.dim(),
                found: set.dim(),
            });
        }
    }
    // Resolve every id up front so errors name the first bad line.
    let mut enroll_ids: HashMap<&str, usize> = HashMap::new();
    let mut test_ids: HashMap<&str, usize> = HashMap::new();
    let mut resolved = Vec::with_capacity(trials.len());
    let mut enroll_vecs = Vec::new();
    let mut test_vecs = Vec::new();
    for (i, t) in trials.iter().enumerate() {
        let line = i + 1;
        let e = enroll.get(&t.enroll).ok_or_else(|| Error::Resolution {
            line,
            id: t.enroll.clone(),
        })?;
        let s = test.get(&t.test).ok_or_else(|| Error::Resolution {
            line,
            id: t.test.clone(),
        })?;
        let ei = *enroll_ids.entry(t.enroll.as_str()).or_insert_with(|| {
            enroll_vecs.push(&e.vector);
            enroll_vecs.len() - 1
        });
        let ti = *test_ids.entry(t.test.as_str()).or_insert_with(|| {
            test_vecs.push(&s.vector);
            test_vecs.len() - 1
        });
        resolved.push((ei, ti));
    }

    let scorer = model.scorer()?;
    let enroll_sides: Vec<Side> = enroll_vecs.par_iter().map(|x| scorer.side(x)).collect();
    let test_sides: Vec<Side> = test_vecs.par_iter().map(|x| scorer.side(x)).collect();

    let scored = trials
        .iter()
        .zip(resolved)
        .map(|(t, (ei, ti))| ScoredTrial {
            enroll: t.enroll.clone(),
            test: t.test.clone(),
            score: scorer.combine(&enroll_sides[ei], &test_sides[ti]),
            label: t.label,
        })
        .collect();
    Ok(ScoreSet { trials: scored })
}
