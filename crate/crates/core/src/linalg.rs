//! Dense symmetric linear algebra.
//!
//! Everything in the backend is expressed through symmetric positive
//! (semi-)definite matrices: covariances, their ZCA square roots, and the
//! simultaneous diagonalization of two of them. The spectral work is done by a
//! cyclic Jacobi eigensolver so results are reproducible bit-for-bit for a
//! given input.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative eigenvalue floor (fraction of the largest eigenvalue)
/// applied before inverting a spectrum.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-10;

/// Relative tolerance below zero that is still accepted as positive semi-definite.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Magnitude below which an eigenvector component is ignored by the sign convention.
const SIGN_EPS: f64 = 1e-12;

/// A real symmetric matrix. Symmetry is exact: construction replaces the
/// input by `(M + Mᵀ) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Precondition(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Precondition("symmetric matrix must have dim >= 1".into()));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("matrix contains non-finite entries".into()));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without validation. Callers guarantee a square finite input.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { m }
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dim must be >= 1");
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dim must be >= 1");
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "dim must be >= 1");
        Self {
            m: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        Self::symmetrized(&self.m + &other.m)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        Self::symmetrized(&self.m - &other.m)
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        Self::symmetrized(&self.m * factor)
    }

    /// Adds `value` to every diagonal entry.
    pub fn add_diagonal(&self, value: f64) -> SymMatrix {
        let mut m = self.m.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += value;
        }
        Self { m }
    }

    /// `a · self · aᵀ`. `a` may be rectangular (k×dim), giving a k×k result.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<SymMatrix> {
        if a.ncols() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: a.ncols(),
            });
        }
        Ok(Self::symmetrized(a * &self.m * a.transpose()))
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.m * v
    }

    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.m * v))
    }

    /// Relative Frobenius distance `‖self − other‖ / ‖other‖` (absolute when `other` is zero).
    pub fn rel_frobenius_error(&self, reference: &SymMatrix) -> f64 {
        let diff = (&self.m - &reference.m).norm();
        let base = reference.m.norm();
        if base > 0.0 {
            diff / base
        } else {
            diff
        }
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        (&self.m - &other.m).amax()
    }
}

/// Spectral factorization `M = V · diag(values) · Vᵀ`, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    pub fn min_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        SymMatrix::symmetrized(scaled * self.vectors.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map_spectrum(|l| l)
    }
}

/// Settings for the cyclic Jacobi eigensolver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiConfig {
    pub max_sweeps: usize,
    /// Convergence when the off-diagonal Frobenius norm drops below
    /// `tolerance · ‖M‖_F`.
    pub tolerance: f64,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            tolerance: 1e-12,
        }
    }
}

pub fn eigh(m: &SymMatrix) -> Result<EigenDecomposition> {
    eigh_with(m, &JacobiConfig::default(), "matrix")
}

pub fn eigh_named(m: &SymMatrix, name: &str) -> Result<EigenDecomposition> {
    eigh_with(m, &JacobiConfig::default(), name)
}

/// Cyclic Jacobi eigendecomposition.
///
/// Rotations are applied in row-cyclic order `(0,1), (0,2), …, (n−2,n−1)`.
/// The returned eigenvalues are sorted descending (ties keep their diagonal
/// order) and each eigenvector has its first component of magnitude > 1e-12
/// positive.
pub fn eigh_with(m: &SymMatrix, cfg: &JacobiConfig, name: &str) -> Result<EigenDecomposition> {
    let n = m.dim();
    // Column-major working copies: a[i + j*n] is entry (i, j).
    let mut a: Vec<f64> = m.as_matrix().as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i + i * n] = 1.0;
    }

    let threshold = cfg.tolerance * m.frobenius_norm();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    s += a[i + j * n] * a[i + j * n];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..cfg.max_sweeps {
        let off = off_norm(&a);
        if off == 0.0 || off < threshold {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p + q * n];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p + p * n];
                let aqq = a[q + q * n];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // A ← A·J (columns p, q).
                for k in 0..n {
                    let akp = a[k + p * n];
                    let akq = a[k + q * n];
                    a[k + p * n] = c * akp - s * akq;
                    a[k + q * n] = s * akp + c * akq;
                }
                // A ← Jᵀ·A (rows p, q).
                for k in 0..n {
                    let apk = a[p + k * n];
                    let aqk = a[q + k * n];
                    a[p + k * n] = c * apk - s * aqk;
                    a[q + k * n] = s * apk + c * aqk;
                }
                a[p + p * n] = app - t * apq;
                a[q + q * n] = aqq + t * apq;
                a[p + q * n] = 0.0;
                a[q + p * n] = 0.0;

                for k in 0..n {
                    let vkp = v[k + p * n];
                    let vkq = v[k + q * n];
                    v[k + p * n] = c * vkp - s * vkq;
                    v[k + q * n] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off = off_norm(&a);
        if !(off == 0.0 || off < threshold) {
            return Err(Error::NoConvergence {
                name: name.to_string(),
                sweeps: cfg.max_sweeps,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j + j * n].total_cmp(&a[i + i * n]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| a[i + i * n]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = &v[src * n..(src + 1) * n];
        let sign = match col.iter().find(|x| x.abs() > SIGN_EPS) {
            Some(x) if *x < 0.0 => -1.0,
            _ => 1.0,
        };
        for k in 0..n {
            vectors[(k, dst)] = sign * col[k];
        }
    }
    Ok(EigenDecomposition { vectors, values })
}

fn floored_spectrum(m: &SymMatrix, name: &str, floor: f64) -> Result<(EigenDecomposition, f64)> {
    let evd = eigh_named(m, name)?;
    let lmax = evd.max_value();
    if !(lmax > 0.0) {
        return Err(Error::degenerate(name, format!("largest eigenvalue {lmax:e} is not positive")));
    }
    if evd.min_value() < -PSD_TOLERANCE * lmax {
        return Err(Error::degenerate(
            name,
            format!("not positive semi-definite (eigenvalue {:e})", evd.min_value()),
        ));
    }
    Ok((evd, floor * lmax))
}

/// Symmetric (ZCA) square root with eigenvalues floored at `floor · λ_max`.
pub fn sqrt_psd(m: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    sqrt_psd_named(m, floor, "sqrt_psd input")
}

pub(crate) fn sqrt_psd_named(m: &SymMatrix, floor: f64, name: &str) -> Result<SymMatrix> {
    let (evd, min_val) = floored_spectrum(m, name, floor)?;
    Ok(evd.map_spectrum(|l| l.max(min_val).sqrt()))
}

/// Symmetric (ZCA) inverse square root with eigenvalues floored at
/// `floor · λ_max` before inversion.
pub fn inv_sqrt_psd(m: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    inv_sqrt_psd_named(m, floor, "inv_sqrt_psd input")
}

pub(crate) fn inv_sqrt_psd_named(m: &SymMatrix, floor: f64, name: &str) -> Result<SymMatrix> {
    let (evd, min_val) = floored_spectrum(m, name, floor)?;
    if !(min_val > 0.0) && !(evd.min_value() > 0.0) {
        return Err(Error::degenerate(name, "singular matrix with zero floor"));
    }
    Ok(evd.map_spectrum(|l| 1.0 / l.max(min_val).sqrt()))
}

/// Raises every eigenvalue below `floor · λ_max` to that value. Returns the
/// input unchanged (bit-exact) when nothing is clipped, with the clip count.
pub fn floor_spectrum(m: &SymMatrix, floor: f64, name: &str) -> Result<(SymMatrix, usize)> {
    let evd = eigh_named(m, name)?;
    let lmax = evd.max_value();
    if !(lmax > 0.0) {
        return Err(Error::degenerate(name, format!("largest eigenvalue {lmax:e} is not positive")));
    }
    let min_val = floor * lmax;
    let clipped = evd.values.iter().filter(|&&l| l < min_val).count();
    if clipped == 0 {
        return Ok((m.clone(), 0));
    }
    Ok((evd.map_spectrum(|l| l.max(min_val)), clipped))
}

fn spd_spectrum(m: &SymMatrix, name: &str) -> Result<EigenDecomposition> {
    let evd = eigh_named(m, name)?;
    let lmax = evd.max_value();
    let lmin = evd.min_value();
    if !(lmax > 0.0) || !(lmin > lmax * f64::EPSILON) {
        return Err(Error::degenerate(
            name,
            format!("not positive definite (eigenvalues in [{lmin:e}, {lmax:e}])"),
        ));
    }
    Ok(evd)
}

pub fn log_det_psd(m: &SymMatrix) -> Result<f64> {
    let evd = spd_spectrum(m, "log_det_psd input")?;
    Ok(evd.values.iter().map(|l| l.ln()).sum())
}

pub fn solve_psd(m: &SymMatrix, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != m.dim() {
        return Err(Error::DimMismatch {
            expected: m.dim(),
            found: v.len(),
        });
    }
    let evd = spd_spectrum(m, "solve_psd input")?;
    let mut coeffs = evd.vectors.tr_mul(v);
    for (c, l) in coeffs.iter_mut().zip(evd.values.iter()) {
        *c /= l;
    }
    Ok(&evd.vectors * coeffs)
}

/// Inverse and log-determinant of an SPD matrix from one decomposition.
pub fn inverse_spd(m: &SymMatrix, name: &str) -> Result<(SymMatrix, f64)> {
    let evd = spd_spectrum(m, name)?;
    let log_det = evd.values.iter().map(|l| l.ln()).sum();
    Ok((evd.map_spectrum(|l| 1.0 / l), log_det))
}

/// Basis that turns `phi` into the identity and `psi` into a diagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDiagResult {
    /// `bᵀ·phi·b = I`, `bᵀ·psi·b = diag(e)`.
    pub b: DMatrix<f64>,
    pub b_inv: DMatrix<f64>,
    /// Generalized eigenvalues, descending.
    pub e: DVector<f64>,
}

/// Simultaneous diagonalization by two eigendecompositions: whiten `phi`,
/// then diagonalize `psi` in the whitened coordinates. Eigenvalues of `phi`
/// are floored at `DEFAULT_EIG_FLOOR · λ_max` before whitening.
pub fn simdiag(phi: &SymMatrix, psi: &SymMatrix) -> Result<SimDiagResult> {
    simdiag_with_floor(phi, psi, DEFAULT_EIG_FLOOR)
}

pub fn simdiag_with_floor(phi: &SymMatrix, psi: &SymMatrix, floor: f64) -> Result<SimDiagResult> {
    if phi.dim() != psi.dim() {
        return Err(Error::DimMismatch {
            expected: phi.dim(),
            found: psi.dim(),
        });
    }
    let (first, min_val) = floored_spectrum(phi, "simdiag phi", floor)?;
    if !(min_val > 0.0) && !(first.min_value() > 0.0) {
        return Err(Error::degenerate("simdiag phi", "singular matrix with zero floor"));
    }

    let mut whiten = first.vectors.clone();
    let mut unwhiten_t = first.vectors.clone();
    for j in 0..whiten.ncols() {
        let l = first.values[j].max(min_val);
        whiten.column_mut(j).scale_mut(1.0 / l.sqrt());
        unwhiten_t.column_mut(j).scale_mut(l.sqrt());
    }
    let inner = psi.congruence(&whiten.transpose())?;
    let second = eigh_named(&inner, "simdiag whitened psi")?;

    let b = &whiten * &second.vectors;
    let b_inv = second.vectors.tr_mul(&unwhiten_t.transpose());
    Ok(SimDiagResult {
        b,
        b_inv,
        e: second.values,
    })
}
