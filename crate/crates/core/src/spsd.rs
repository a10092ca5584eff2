//! Symmetric positive semidefinite matrices and the von Neumann / LogDet
//! Bregman divergences between them.
//!
//! Both divergences are evaluated from eigendecompositions. With
//! `sigma = V diag(lambda) V^T` and `rho = U diag(theta) U^T`:
//!
//! ```text
//! D_vN(sigma || rho) = sum_i lambda_i ln lambda_i
//!                    - sum_ij (v_i^T u_j)^2 lambda_i ln theta_j
//!                    - sum_i lambda_i + sum_j theta_j
//! D_lD(sigma || rho) = sum_ij (v_i^T u_j)^2 lambda_i / theta_j
//!                    + sum_j ln theta_j - sum_i ln lambda_i - n
//! ```
//!
//! so no matrix logarithm or inverse of a near-singular matrix is formed.
//! All logarithms are natural; results are in nats.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative symmetry tolerance, scaled by `max(1, max|A|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative PSD tolerance on the smallest eigenvalue, scaled by `max(1, trace)`.
pub const PSD_TOL: f64 = 1e-10;
/// Spectrum floor for the von Neumann logs, scaled by `max(1, trace)`.
pub const VN_FLOOR: f64 = 1e-12;
/// LogDet spectrum floor, scaled by `trace(rho) / n`.
pub const LOGDET_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceKind {
    VonNeumann,
    LogDet,
}

/// Eigenvalues sorted descending with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, lambda) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*lambda);
        }
        &scaled * self.vectors.transpose()
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct SpsdMatrix {
    entries: DMatrix<f64>,
    eig: OnceLock<Spectrum>,
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    let scale = a.amax().max(1.0);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (a[(i, j)] - a[(j, i)]).abs();
            if gap > SYMMETRY_TOL * scale {
                return Err(Error::NonSymmetric {
                    row: i,
                    col: j,
                    gap,
                });
            }
        }
    }
    Ok(())
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let t = a.transpose();
    (a + t) * 0.5
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
pub fn eig_decompose(a: &DMatrix<f64>) -> Result<Spectrum> {
    check_square(a)?;
    check_symmetric(a)?;
    decompose_symmetric(&symmetrize(a))
}

fn decompose_symmetric(a: &DMatrix<f64>) -> Result<Spectrum> {
    let n = a.nrows();
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 200 * n.max(10))
        .ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Spectrum { values, vectors })
}

impl SpsdMatrix {
    /// Validates symmetry and positive semidefiniteness.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_square(&entries)?;
        check_symmetric(&entries)?;
        let m = Self::from_symmetric_unchecked(symmetrize(&entries));
        let min = m.spectrum()?.min();
        if min < -PSD_TOL * m.trace().max(1.0) {
            return Err(Error::NotPsd {
                min_eigenvalue: min,
            });
        }
        Ok(m)
    }

    /// Symmetrizes `(A + A^T) / 2` and zeroes any negative eigenvalues.
    /// Used for estimators that are PSD in exact arithmetic only.
    pub fn repaired(entries: DMatrix<f64>) -> Result<Self> {
        check_square(&entries)?;
        let sym = symmetrize(&entries);
        let spectrum = decompose_symmetric(&sym)?;
        if spectrum.min() >= 0.0 {
            let m = Self::from_symmetric_unchecked(sym);
            let _ = m.eig.set(spectrum);
            return Ok(m);
        }
        let clamped = Spectrum {
            values: spectrum.values.iter().map(|v| v.max(0.0)).collect(),
            vectors: spectrum.vectors,
        };
        let m = Self::from_symmetric_unchecked(symmetrize(&clamped.reconstruct()));
        let _ = m.eig.set(clamped);
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_symmetric_unchecked(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub(crate) fn from_symmetric_unchecked(entries: DMatrix<f64>) -> Self {
        Self {
            entries,
            eig: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Cached eigendecomposition.
    pub fn spectrum(&self) -> Result<&Spectrum> {
        if let Some(s) = self.eig.get() {
            return Ok(s);
        }
        let s = decompose_symmetric(&self.entries)?;
        Ok(self.eig.get_or_init(|| s))
    }

    /// Leading `k x k` principal block.
    pub fn leading_block(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: k,
            });
        }
        Ok(Self::from_symmetric_unchecked(
            self.entries.view((0, 0), (k, k)).into_owned(),
        ))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_symmetric_unchecked(&self.entries * c)
    }

    /// Raises every eigenvalue below `floor` to `floor`; eigenvectors are kept.
    pub fn clamp_spectrum(&self, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::InvalidConfig(format!("spectrum floor must be positive, got {floor}")));
        }
        let s = self.spectrum()?;
        if s.min() >= floor {
            return Ok(self.clone());
        }
        let clamped = Spectrum {
            values: s.values.iter().map(|v| v.max(floor)).collect(),
            vectors: s.vectors.clone(),
        };
        let m = Self::from_symmetric_unchecked(symmetrize(&clamped.reconstruct()));
        let _ = m.eig.set(clamped);
        Ok(m)
    }

    fn floored_values(&self) -> Result<(Vec<f64>, &DMatrix<f64>)> {
        let floor = VN_FLOOR * self.trace().max(1.0);
        let s = self.spectrum()?;
        Ok((s.values.iter().map(|v| v.max(floor)).collect(), &s.vectors))
    }
}

impl PartialEq for SpsdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

fn check_dims(sigma: &SpsdMatrix, rho: &SpsdMatrix) -> Result<()> {
    if sigma.dim() != rho.dim() {
        return Err(Error::DimMismatch {
            expected: sigma.dim(),
            found: rho.dim(),
        });
    }
    Ok(())
}

/// Squared overlaps `(v_i^T u_j)^2`.
fn overlaps(v: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    (v.transpose() * u).map(|x| x * x)
}

/// `Tr(sigma ln sigma - sigma ln rho - sigma + rho)`.
pub fn vn_divergence(sigma: &SpsdMatrix, rho: &SpsdMatrix) -> Result<f64> {
    check_dims(sigma, rho)?;
    let (lambda, v) = sigma.floored_values()?;
    let (theta, u) = rho.floored_values()?;
    let log_theta: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
    let o = overlaps(v, u);

    let mut self_term = 0.0;
    let mut cross = 0.0;
    for (i, l) in lambda.iter().enumerate() {
        self_term += l * l.ln();
        let row: f64 = (0..theta.len()).map(|j| o[(i, j)] * log_theta[j]).sum();
        cross += l * row;
    }
    let tr_sigma: f64 = lambda.iter().sum();
    let tr_rho: f64 = theta.iter().sum();
    Ok(self_term - cross - tr_sigma + tr_rho)
}

/// `Tr(rho^-1 sigma) + ln(|rho| / |sigma|) - n`.
///
/// Eigenvalues of both arguments are floored at `1e-10 * trace(rho) / n`, so
/// well-conditioned inputs are evaluated exactly and a shared null space
/// contributes nothing.
pub fn logdet_divergence(sigma: &SpsdMatrix, rho: &SpsdMatrix) -> Result<f64> {
    check_dims(sigma, rho)?;
    let n = sigma.dim();
    let floor = LOGDET_FLOOR * rho.trace() / n as f64;
    if !(floor > 0.0) || !floor.is_finite() {
        return Err(Error::SingularReference);
    }
    let s = sigma.spectrum()?;
    let r = rho.spectrum()?;
    let lambda: Vec<f64> = s.values.iter().map(|v| v.max(floor)).collect();
    let theta: Vec<f64> = r.values.iter().map(|v| v.max(floor)).collect();
    let o = overlaps(&s.vectors, &r.vectors);

    let mut trace_term = 0.0;
    for (i, l) in lambda.iter().enumerate() {
        let row: f64 = theta.iter().enumerate().map(|(j, t)| o[(i, j)] / t).sum();
        trace_term += l * row;
    }
    let log_ratio: f64 = theta.iter().map(|t| t.ln()).sum::<f64>()
        - lambda.iter().map(|l| l.ln()).sum::<f64>();
    Ok(trace_term + log_ratio - n as f64)
}

/// Exactly zero when both arguments hold identical entries.
pub fn bregman_divergence(kind: DivergenceKind, sigma: &SpsdMatrix, rho: &SpsdMatrix) -> Result<f64> {
    if sigma == rho {
        check_dims(sigma, rho)?;
        if kind == DivergenceKind::LogDet && !(rho.trace() > 0.0) {
            return Err(Error::SingularReference);
        }
        return Ok(0.0);
    }
    match kind {
        DivergenceKind::VonNeumann => vn_divergence(sigma, rho),
        DivergenceKind::LogDet => logdet_divergence(sigma, rho),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(d: &[f64]) -> SpsdMatrix {
        SpsdMatrix::from_diagonal(d).unwrap()
    }

    #[test]
    fn eig_of_small_matrices() {
        let s = eig_decompose(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(s.values, vec![1.0, 1.0]);

        let s = eig_decompose(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0])).unwrap();
        assert_abs_diff_eq!(s.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.values[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.vectors[(1, 0)].abs(), 1.0, epsilon = 1e-14);

        let s = eig_decompose(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(s.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.values[1], 1.0, epsilon = 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // sign of each eigenvector is arbitrary
        assert_abs_diff_eq!((s.vectors[(0, 0)] * s.vectors[(1, 0)]), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.vectors[(0, 1)].abs(), h, epsilon = 1e-14);
        assert_abs_diff_eq!((s.vectors[(0, 1)] * s.vectors[(1, 1)]), -0.5, epsilon = 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(eig_decompose(&a), Err(Error::NonSymmetric { .. })));
        assert!(matches!(SpsdMatrix::new(a), Err(Error::NonSymmetric { .. })));
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SpsdMatrix::new(b.clone()), Err(Error::NotPsd { .. })));
        let fixed = SpsdMatrix::repaired(b).unwrap();
        assert!(fixed.spectrum().unwrap().min() >= 0.0);
    }

    #[test]
    fn clamp_spectrum_cases() {
        let c = diag(&[2.0, 0.0]).clamp_spectrum(1e-12).unwrap();
        assert_abs_diff_eq!(c.get(0, 0), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.get(1, 1), 1e-12, epsilon = 1e-20);

        let pd = diag(&[0.5, 3.0]);
        assert_eq!(pd.clamp_spectrum(1e-12).unwrap(), pd);

        let v = [0.6, 0.8];
        let rank1 = SpsdMatrix::new(DMatrix::from_fn(2, 2, |i, j| v[i] * v[j])).unwrap();
        let c = rank1.clamp_spectrum(1e-6).unwrap();
        let vals = &c.spectrum().unwrap().values;
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 1e-6, epsilon = 1e-12);

        assert!(pd.clamp_spectrum(0.0).is_err());
    }

    #[test]
    fn diagonal_closed_forms() {
        let ln2 = 2f64.ln();
        let i2 = SpsdMatrix::identity(2);
        let d = diag(&[2.0, 1.0]);
        assert_abs_diff_eq!(vn_divergence(&i2, &i2).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vn_divergence(&d, &i2).unwrap(), 2.0 * ln2 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vn_divergence(&i2, &d).unwrap(), 1.0 - ln2, epsilon = 1e-12);

        assert_abs_diff_eq!(logdet_divergence(&i2, &i2).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(logdet_divergence(&d, &i2).unwrap(), 1.0 - ln2, epsilon = 1e-12);
        assert_abs_diff_eq!(
            logdet_divergence(&d.scaled(2.0), &i2.scaled(2.0)).unwrap(),
            1.0 - ln2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(logdet_divergence(&i2, &d).unwrap(), ln2 - 0.5, epsilon = 1e-12);

        assert_abs_diff_eq!(
            bregman_divergence(DivergenceKind::VonNeumann, &d, &d).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bregman_divergence(DivergenceKind::LogDet, &d, &i2).unwrap(),
            1.0 - ln2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dimension_and_singularity_errors() {
        let a = SpsdMatrix::identity(2);
        let b = SpsdMatrix::identity(3);
        assert!(matches!(vn_divergence(&a, &b), Err(Error::DimMismatch { .. })));
        assert!(matches!(logdet_divergence(&a, &b), Err(Error::DimMismatch { .. })));
        let zero = SpsdMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(logdet_divergence(&a, &zero), Err(Error::SingularReference)));
    }

    #[test]
    fn zero_eigenvalues_use_zero_log_zero() {
        let a = diag(&[1.0, 0.0]);
        let v = vn_divergence(&a, &a).unwrap();
        assert!(v.abs() < 1e-10, "{v}");
    }
}
