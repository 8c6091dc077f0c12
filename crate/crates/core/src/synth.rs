//! Synthetic domain-mismatch data with known ground truth.
//!
//! Out-of-domain embeddings follow the two-covariance model
//! `φ = μ + h_s + x` with `h_s ~ N(0, Φ_b)` shared by all utterances of speaker
//! `s` and `x ~ N(0, Φ_w)` per utterance. In-domain embeddings are drawn from
//! the same model and then mapped through `φ ↦ M·φ + shift`, where
//! `M = I + domain_shift_scale·R`, `R` has unit spectral norm, and `shift` is
//! `mean_shift_scale` times a random unit vector.
//!
//! # Reproducibility
//!
//! The random stream is ChaCha20 keyed with the seed as 8 little-endian bytes
//! followed by 24 zero bytes (stream 0). A uniform variate is
//! `(next_u64 >> 11) · 2⁻⁵³`. Normals come in pairs from Box–Muller on two
//! consecutive 64-bit draws `a`, `b`: with `u₁ = ((a >> 11) + 1)·2⁻⁵³` and
//! `u₂ = (b >> 11)·2⁻⁵³`, the pair is `r·cos(2πu₂)`, `r·sin(2πu₂)`,
//! `r = √(−2 ln u₁)`, consumed cosine first. Draw order:
//!
//! 1. `μ` (dim normals)
//! 2. between-class rotation, then within-class rotation (dim² normals each)
//! 3. `R` (dim² normals), then the shift direction (dim normals)
//! 4. out-of-domain speakers: `h` then each utterance's `x`
//! 5. unlabeled in-domain utterances: `h` then `x`, one fresh speaker each
//! 6. trial speakers: `h`, enrollment utterances, test utterances
//! 7. nontarget pairs: two uniform indices per candidate, `next_u64 % n`

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::data::{EmbeddingSet, Record, Trial, TrialLabel, TrialList};
use crate::error::{Error, Result};
use crate::linalg::{eigh_named, SymMatrix};

/// Portable seeded Gaussian source.
pub struct GaussianRng {
    inner: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self {
            inner: ChaCha20Rng::from_seed(key),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * angle.sin());
        r * angle.cos()
    }

    pub fn normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| self.normal()))
    }

    /// Row-major fill.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let data: Vec<f64> = (0..rows * cols).map(|_| self.normal()).collect();
        DMatrix::from_row_slice(rows, cols, &data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub n_speakers_ood: usize,
    pub utts_per_speaker_ood: usize,
    pub n_unlabeled_in: usize,
    pub n_trial_speakers: usize,
    /// Split into enrollment (first half, rounded up) and test utterances.
    pub utts_per_trial_speaker: usize,
    pub domain_shift_scale: f64,
    pub mean_shift_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            n_speakers_ood: 300,
            utts_per_speaker_ood: 10,
            n_unlabeled_in: 2000,
            n_trial_speakers: 100,
            utts_per_trial_speaker: 8,
            domain_shift_scale: 0.5,
            mean_shift_scale: 1.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        for (name, n) in [
            ("n_speakers_ood", self.n_speakers_ood),
            ("utts_per_speaker_ood", self.utts_per_speaker_ood),
            ("n_unlabeled_in", self.n_unlabeled_in),
            ("n_trial_speakers", self.n_trial_speakers),
        ] {
            if n == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.n_trial_speakers < 2 {
            return bad("n_trial_speakers must be >= 2 to form nontarget trials".into());
        }
        if self.utts_per_trial_speaker < 2 {
            return bad("utts_per_trial_speaker must be >= 2 (enrollment and test)".into());
        }
        for (name, v) in [
            ("domain_shift_scale", self.domain_shift_scale),
            ("mean_shift_scale", self.mean_shift_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Parameters the data were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorTruth {
    pub mu: DVector<f64>,
    pub phi_b: SymMatrix,
    pub phi_w: SymMatrix,
    /// In-domain linear map `M`.
    pub shift_matrix: DMatrix<f64>,
    /// In-domain additive offset.
    pub mean_offset: DVector<f64>,
}

impl GeneratorTruth {
    pub fn in_domain_phi_b(&self) -> SymMatrix {
        self.phi_b.congruence(&self.shift_matrix).expect("square")
    }

    pub fn in_domain_phi_w(&self) -> SymMatrix {
        self.phi_w.congruence(&self.shift_matrix).expect("square")
    }

    /// `M·(Φ_b + Φ_w)·Mᵀ`.
    pub fn in_domain_total(&self) -> SymMatrix {
        self.phi_b.add(&self.phi_w).congruence(&self.shift_matrix).expect("square")
    }

    pub fn in_domain_mean(&self) -> DVector<f64> {
        &self.shift_matrix * &self.mu + &self.mean_offset
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub ood_labeled: EmbeddingSet,
    pub in_unlabeled: EmbeddingSet,
    pub in_enroll: EmbeddingSet,
    pub in_test: EmbeddingSet,
    pub trials: TrialList,
    pub truth: GeneratorTruth,
}

/// Between-speaker spectrum: `3·exp(−4i/d)`, strongest directions first.
fn between_spectrum(dim: usize) -> Vec<f64> {
    (0..dim).map(|i| 3.0 * (-4.0 * i as f64 / dim as f64).exp()).collect()
}

/// Within-speaker spectrum: evenly spaced on [0.5, 1.5].
fn within_spectrum(dim: usize) -> Vec<f64> {
    (0..dim).map(|i| 0.5 + i as f64 / (dim - 1) as f64).collect()
}

fn random_rotation(rng: &mut GaussianRng, dim: usize) -> Result<DMatrix<f64>> {
    let g = rng.normal_matrix(dim, dim);
    let sym = SymMatrix::new(&g + g.transpose())?;
    Ok(eigh_named(&sym, "random rotation")?.vectors)
}

/// Returns `Q·diag(√λ)` so that `L·z` with standard normal `z` has covariance `Q·diag(λ)·Qᵀ`.
fn factor(rotation: &DMatrix<f64>, spectrum: &[f64]) -> DMatrix<f64> {
    let mut l = rotation.clone();
    for (j, mut col) in l.column_iter_mut().enumerate() {
        col *= spectrum[j].sqrt();
    }
    l
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let d = cfg.dim;
    let mut rng = GaussianRng::new(cfg.seed);

    let mu = rng.normal_vector(d);
    let rot_b = random_rotation(&mut rng, d)?;
    let rot_w = random_rotation(&mut rng, d)?;
    let load_b = factor(&rot_b, &between_spectrum(d));
    let load_w = factor(&rot_w, &within_spectrum(d));

    let r = rng.normal_matrix(d, d);
    let r_norm = eigh_named(&SymMatrix::new(r.tr_mul(&r))?, "R^T R")?.max_value().sqrt();
    let shift_matrix = DMatrix::identity(d, d) + r * (cfg.domain_shift_scale / r_norm);
    let direction = rng.normal_vector(d);
    let mean_offset = &direction * (cfg.mean_shift_scale / direction.norm());

    let truth = GeneratorTruth {
        mu: mu.clone(),
        phi_b: SymMatrix::new(&load_b * load_b.transpose())?,
        phi_w: SymMatrix::new(&load_w * load_w.transpose())?,
        shift_matrix: shift_matrix.clone(),
        mean_offset: mean_offset.clone(),
    };

    let speaker = |rng: &mut GaussianRng| &mu + &load_b * rng.normal_vector(d);
    let utterance = |rng: &mut GaussianRng, centre: &DVector<f64>| centre + &load_w * rng.normal_vector(d);
    let to_in_domain = |x: DVector<f64>| &shift_matrix * x + &mean_offset;

    let mut ood = EmbeddingSet::new(d)?;
    for s in 0..cfg.n_speakers_ood {
        let spk = format!("ood-s{s:05}");
        let centre = speaker(&mut rng);
        for u in 0..cfg.utts_per_speaker_ood {
            let x = utterance(&mut rng, &centre);
            ood.push(Record::new(format!("{spk}-u{u:03}"), Some(&spk), x))?;
        }
    }

    let mut unlabeled = EmbeddingSet::new(d)?;
    for i in 0..cfg.n_unlabeled_in {
        let centre = speaker(&mut rng);
        let x = utterance(&mut rng, &centre);
        unlabeled.push(Record::new(format!("ind-unl-{i:06}"), None, to_in_domain(x)))?;
    }

    let n_enroll = cfg.utts_per_trial_speaker.div_ceil(2);
    let n_test = cfg.utts_per_trial_speaker - n_enroll;
    let mut enroll = EmbeddingSet::new(d)?;
    let mut test = EmbeddingSet::new(d)?;
    let mut enroll_spk = Vec::new();
    let mut test_spk = Vec::new();
    for s in 0..cfg.n_trial_speakers {
        let spk = format!("ind-s{s:05}");
        let centre = speaker(&mut rng);
        for u in 0..n_enroll {
            let x = utterance(&mut rng, &centre);
            enroll.push(Record::new(format!("{spk}-e{u:03}"), Some(&spk), to_in_domain(x)))?;
            enroll_spk.push(s);
        }
        for u in 0..n_test {
            let x = utterance(&mut rng, &centre);
            test.push(Record::new(format!("{spk}-t{u:03}"), Some(&spk), to_in_domain(x)))?;
            test_spk.push(s);
        }
    }

    let mut trials = TrialList::new();
    for (ei, e) in enroll.records().iter().enumerate() {
        for (ti, t) in test.records().iter().enumerate() {
            if enroll_spk[ei] == test_spk[ti] {
                trials.push(Trial::new(&e.utterance_id, &t.utterance_id, Some(TrialLabel::Target)));
            }
        }
    }
    let n_targets = trials.len();
    let mut seen = HashSet::new();
    let mut n_nontargets = 0;
    while n_nontargets < n_targets {
        let ei = rng.index(enroll.len());
        let ti = rng.index(test.len());
        if enroll_spk[ei] == test_spk[ti] || !seen.insert((ei, ti)) {
            continue;
        }
        trials.push(Trial::new(
            &enroll.records()[ei].utterance_id,
            &test.records()[ti].utterance_id,
            Some(TrialLabel::Nontarget),
        ));
        n_nontargets += 1;
    }

    Ok(SynthDataset {
        ood_labeled: ood,
        in_unlabeled: unlabeled,
        in_enroll: enroll,
        in_test: test,
        trials,
        truth,
    })
}
