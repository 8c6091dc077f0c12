//! Supervised dimensionality reduction ahead of PLDA.

use nalgebra::{DMatrix, DVector};

use crate::data::{compute_scatter, compute_stats, EmbeddingSet};
use crate::error::{Error, Result};
use crate::linalg::{eigh, simdiag, SymMatrix};

/// Diagonal loading of the within-class scatter, relative to its mean eigenvalue.
pub const WITHIN_SHRINKAGE: f64 = 1e-6;

/// Affine projection `y = P·(x − mean)` with `P` of shape out_dim × in_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaTransform {
    mean: DVector<f64>,
    projection: DMatrix<f64>,
}

impl LdaTransform {
    pub fn new(mean: DVector<f64>, projection: DMatrix<f64>) -> Result<Self> {
        let (out_dim, in_dim) = projection.shape();
        if in_dim != mean.len() {
            return Err(Error::DimMismatch {
                expected: in_dim,
                found: mean.len(),
            });
        }
        if out_dim == 0 || out_dim > in_dim {
            return Err(Error::Precondition(format!(
                "LDA output dim {out_dim} must lie in 1..={in_dim}"
            )));
        }
        let gram = SymMatrix::new(&projection * projection.transpose())?;
        let evd = eigh(&gram)?;
        if !(evd.min_value() > 1e-12 * evd.max_value()) {
            return Err(Error::Precondition("LDA projection rows are linearly dependent".into()));
        }
        Ok(Self { mean, projection })
    }

    pub fn in_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::DimMismatch {
                expected: self.in_dim(),
                found: x.len(),
            });
        }
        Ok(&self.projection * (x - &self.mean))
    }
}

/// Fits LDA on a labeled set: the leading `out_dim` generalized eigenvectors
/// of the between/within scatter pair.
pub fn fit_lda(set: &EmbeddingSet, out_dim: usize) -> Result<LdaTransform> {
    set.require_labeled("LDA")?;
    let n_speakers = set.n_speakers();
    let limit = set.dim().min(n_speakers.saturating_sub(1));
    if out_dim == 0 || out_dim > limit {
        return Err(Error::Precondition(format!(
            "LDA output dim {out_dim} must lie in 1..={limit} (input dim {}, {n_speakers} speakers)",
            set.dim()
        )));
    }
    let scatter = compute_scatter(set)?;
    let mean = compute_stats(set)?.mean;
    lda_from_scatter(&scatter.between, &scatter.within, mean, out_dim)
}

/// LDA from precomputed scatter matrices. The within scatter is loaded with
/// `WITHIN_SHRINKAGE · tr(S_w)/d` on the diagonal before the generalized
/// eigenproblem is solved.
pub fn lda_from_scatter(
    between: &SymMatrix,
    within: &SymMatrix,
    mean: DVector<f64>,
    out_dim: usize,
) -> Result<LdaTransform> {
    let d = within.dim();
    if between.dim() != d || mean.len() != d {
        return Err(Error::DimMismatch {
            expected: d,
            found: if between.dim() != d { between.dim() } else { mean.len() },
        });
    }
    let loaded = within.add_diagonal(WITHIN_SHRINKAGE * within.trace() / d as f64);
    let sd = simdiag(&loaded, between)?;
    let projection = sd.b.columns(0, out_dim).transpose();
    LdaTransform::new(mean, projection)
}

pub fn apply_lda(t: &LdaTransform, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    if set.dim() != t.in_dim() {
        return Err(Error::DimMismatch {
            expected: t.in_dim(),
            found: set.dim(),
        });
    }
    set.map_vectors(t.out_dim(), |x| &t.projection * (x - &t.mean))
}
