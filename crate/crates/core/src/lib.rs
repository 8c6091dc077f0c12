//! Speaker-verification backend: two-covariance PLDA scoring, feature-space
//! CORAL, and model-space CORAL+ unsupervised adaptation.
//!
//! Typical flow:
//!
//! 1. [`lda::fit_lda`] on labeled out-of-domain embeddings, then
//!    [`plda::train_plda`] in the projected space.
//! 2. [`data::compute_stats`] on projected unlabeled in-domain embeddings.
//! 3. [`adapt::coral_plus`] to move the model's covariances toward the
//!    in-domain statistics.
//! 4. [`plda::score_trials`] and [`metrics::compute_eer`] /
//!    [`metrics::compute_min_dcf`].

// Validation is written as `!(x > 0.0)` and similar so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod data;
pub mod error;
pub mod lda;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod plda;
pub mod synth;

pub use adapt::{coral_plus, fit_coral, AdaptConfig, AdaptationReport, CoralTransform};
pub use data::{EmbeddingSet, GaussianStats, Record, ScatterPair, Trial, TrialLabel, TrialList};
pub use error::{Error, Result};
pub use lda::LdaTransform;
pub use linalg::{EigenDecomposition, SimDiagResult, SymMatrix};
pub use metrics::{DcfParams, ScoreSet, ScoredTrial};
pub use plda::PldaModel;
pub use synth::{SynthConfig, SynthDataset};

pub use nalgebra::{DMatrix, DVector};
