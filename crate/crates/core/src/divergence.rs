//! Conditional and marginal Bregman divergences between datasets.
//!
//! The conditional statistic compares the joint matrices of `[x | y]` and
//! subtracts the comparison of the `x` blocks:
//!
//! ```text
//! D(p1(y|x) || p2(y|x)) = D(M_xy^1 || M_xy^2) - D(M_x^1 || M_x^2)
//! ```
//!
//! where `M` is a centered correntropy or covariance matrix and `M_x` is the
//! leading `p x p` block of `M_xy`, so both terms share kernel widths.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, PairedDataset};
use crate::error::{Error, Result};
use crate::kernel::{self, correntropy_matrix_with_widths, KernelConfig, MatrixKind, WidthTable};
use crate::spsd::{bregman_divergence, DivergenceKind, SpsdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    pub matrix: MatrixKind,
    pub symmetric: bool,
    /// Ignored for covariance matrices.
    pub kernel: KernelConfig,
    /// Select kernel widths once on the pooled samples and use them for both
    /// datasets, instead of per dataset.
    pub shared_widths: bool,
}

impl Default for DivergenceSpec {
    fn default() -> Self {
        Self {
            kind: DivergenceKind::VonNeumann,
            matrix: MatrixKind::Correntropy,
            symmetric: true,
            kernel: KernelConfig::default(),
            shared_widths: false,
        }
    }
}

impl DivergenceSpec {
    pub fn new(kind: DivergenceKind, matrix: MatrixKind) -> Self {
        Self {
            kind,
            matrix,
            ..Self::default()
        }
    }

    pub fn symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    pub fn with_width_ratio(mut self, ratio: f64) -> Self {
        self.kernel.width_ratio = ratio;
        self
    }
}

fn matrix_pair(a: &DataMatrix, b: &DataMatrix, spec: &DivergenceSpec) -> Result<(SpsdMatrix, SpsdMatrix)> {
    if a.n_vars() != b.n_vars() {
        return Err(Error::DimMismatch {
            expected: a.n_vars(),
            found: b.n_vars(),
        });
    }
    match spec.matrix {
        MatrixKind::Covariance => Ok((kernel::covariance_matrix(a), kernel::covariance_matrix(b))),
        MatrixKind::Correntropy if spec.shared_widths => {
            let widths = WidthTable::select(&a.vstack(b)?, &spec.kernel)?;
            Ok((
                correntropy_matrix_with_widths(a, &widths)?,
                correntropy_matrix_with_widths(b, &widths)?,
            ))
        }
        MatrixKind::Correntropy => Ok((
            kernel::correntropy_matrix(a, &spec.kernel)?,
            kernel::correntropy_matrix(b, &spec.kernel)?,
        )),
    }
}

/// Matrix of one dataset on its own; only meaningful without shared widths.
pub fn joint_matrix(ds: &PairedDataset, spec: &DivergenceSpec) -> Result<SpsdMatrix> {
    kernel::data_matrix(&ds.joint(), spec.matrix, &spec.kernel)
}

/// Conditional divergence from precomputed joint matrices whose leading
/// `marginal_dim` block belongs to `x`.
pub fn conditional_divergence_from_matrices(
    joint1: &SpsdMatrix,
    joint2: &SpsdMatrix,
    marginal_dim: usize,
    kind: DivergenceKind,
) -> Result<f64> {
    if joint1.dim() != joint2.dim() {
        return Err(Error::DimMismatch {
            expected: joint1.dim(),
            found: joint2.dim(),
        });
    }
    let joint = bregman_divergence(kind, joint1, joint2)?;
    let marginal = bregman_divergence(
        kind,
        &joint1.leading_block(marginal_dim)?,
        &joint2.leading_block(marginal_dim)?,
    )?;
    Ok(joint - marginal)
}

/// Half the sum of both directions.
pub fn symmetric_conditional_divergence_from_matrices(
    joint1: &SpsdMatrix,
    joint2: &SpsdMatrix,
    marginal_dim: usize,
    kind: DivergenceKind,
) -> Result<f64> {
    let forward = conditional_divergence_from_matrices(joint1, joint2, marginal_dim, kind)?;
    let backward = conditional_divergence_from_matrices(joint2, joint1, marginal_dim, kind)?;
    Ok(0.5 * (forward + backward))
}

fn check_pair(s1: &PairedDataset, s2: &PairedDataset) -> Result<usize> {
    if s1.n_features() != s2.n_features() {
        return Err(Error::DimMismatch {
            expected: s1.n_features(),
            found: s2.n_features(),
        });
    }
    Ok(s1.n_features())
}

/// `D(M_xy^1 || M_xy^2) - D(M_x^1 || M_x^2)`; `spec.symmetric` is ignored.
pub fn conditional_divergence(s1: &PairedDataset, s2: &PairedDataset, spec: &DivergenceSpec) -> Result<f64> {
    let p = check_pair(s1, s2)?;
    let (m1, m2) = matrix_pair(&s1.joint(), &s2.joint(), spec)?;
    conditional_divergence_from_matrices(&m1, &m2, p, spec.kind)
}

pub fn symmetric_conditional_divergence(
    s1: &PairedDataset,
    s2: &PairedDataset,
    spec: &DivergenceSpec,
) -> Result<f64> {
    let p = check_pair(s1, s2)?;
    let (m1, m2) = matrix_pair(&s1.joint(), &s2.joint(), spec)?;
    symmetric_conditional_divergence_from_matrices(&m1, &m2, p, spec.kind)
}

/// Conditional divergence in the direction(s) selected by `spec.symmetric`.
pub fn conditional_statistic(s1: &PairedDataset, s2: &PairedDataset, spec: &DivergenceSpec) -> Result<f64> {
    if spec.symmetric {
        symmetric_conditional_divergence(s1, s2, spec)
    } else {
        conditional_divergence(s1, s2, spec)
    }
}

/// `D(M_x^1 || M_x^2)`, or half the sum of both directions when symmetric.
pub fn marginal_divergence(x1: &DataMatrix, x2: &DataMatrix, spec: &DivergenceSpec) -> Result<f64> {
    let (m1, m2) = matrix_pair(x1, x2, spec)?;
    let forward = bregman_divergence(spec.kind, &m1, &m2)?;
    if !spec.symmetric {
        return Ok(forward);
    }
    let backward = bregman_divergence(spec.kind, &m2, &m1)?;
    Ok(0.5 * (forward + backward))
}

/// Pairwise symmetric conditional divergences; zero diagonal.
pub fn relatedness_matrix(tasks: &[PairedDataset], spec: &DivergenceSpec) -> Result<DMatrix<f64>> {
    if tasks.len() < 2 {
        return Err(Error::InvalidData(format!(
            "need at least two tasks, got {}",
            tasks.len()
        )));
    }
    let p = tasks[0].n_features();
    for t in tasks {
        check_pair(&tasks[0], t)?;
    }
    let pairs: Vec<(usize, usize)> = (0..tasks.len())
        .flat_map(|i| ((i + 1)..tasks.len()).map(move |j| (i, j)))
        .collect();

    // without shared widths every task's matrix can be built once
    let matrices: Option<Vec<SpsdMatrix>> = if spec.shared_widths {
        None
    } else {
        Some(map_maybe_par(tasks, |t| joint_matrix(t, spec))?)
    };
    let values = map_maybe_par(&pairs, |&(i, j)| match &matrices {
        Some(m) => symmetric_conditional_divergence_from_matrices(&m[i], &m[j], p, spec.kind),
        None => symmetric_conditional_divergence(&tasks[i], &tasks[j], spec),
    })?;

    let n = tasks.len();
    let mut out = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(out)
}

/// Ordered map that runs on the rayon pool when the `parallel` feature is on.
pub(crate) fn map_maybe_par<T, U, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn spd(rows: &[f64], n: usize) -> SpsdMatrix {
        SpsdMatrix::new(DMatrix::from_row_slice(n, n, rows)).unwrap()
    }

    fn linear_task(seed: u64, n: usize, w: &[f64]) -> PairedDataset {
        let mut rng = stream_rng(seed, 0);
        let cols: Vec<Vec<f64>> = (0..w.len())
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let y = (0..n)
            .map(|i| {
                let noise: f64 = rng.sample(StandardNormal);
                cols.iter().zip(w).map(|(c, wk)| c[i] * wk).sum::<f64>() + 0.3 * noise
            })
            .collect();
        PairedDataset::new(DataMatrix::from_columns(&cols).unwrap(), y).unwrap()
    }

    #[test]
    fn self_divergence_is_zero() {
        let ds = linear_task(1, 200, &[1.0, -0.5]);
        for kind in [DivergenceKind::VonNeumann, DivergenceKind::LogDet] {
            for matrix in [MatrixKind::Correntropy, MatrixKind::Covariance] {
                let spec = DivergenceSpec::new(kind, matrix);
                assert!(conditional_divergence(&ds, &ds, &spec).unwrap().abs() <= 1e-10);
                assert!(symmetric_conditional_divergence(&ds, &ds, &spec).unwrap().abs() <= 1e-10);
                assert!(marginal_divergence(ds.x(), ds.x(), &spec).unwrap().abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_form_is_swap_invariant() {
        let a = linear_task(2, 150, &[1.0, 0.2]);
        let b = linear_task(3, 150, &[0.1, 1.0]);
        for kind in [DivergenceKind::VonNeumann, DivergenceKind::LogDet] {
            let spec = DivergenceSpec::new(kind, MatrixKind::Correntropy);
            let ab = symmetric_conditional_divergence(&a, &b, &spec).unwrap();
            let ba = symmetric_conditional_divergence(&b, &a, &spec).unwrap();
            assert_eq!(ab.to_bits(), ba.to_bits());
            assert!(ab > 0.0);
        }
    }

    #[test]
    fn gaussian_fixture_from_matrices() {
        let j1 = spd(&[1.0, 0.5, 0.5, 1.0], 2);
        let j2 = SpsdMatrix::identity(2);
        let v = conditional_divergence_from_matrices(&j1, &j2, 1, DivergenceKind::LogDet).unwrap();
        // twice the closed-form conditional KL, 0.5 * ln(4/3)
        assert_abs_diff_eq!(v, (4.0f64 / 3.0).ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(v, 0.287_682, epsilon = 1e-6);
    }

    #[test]
    fn marginal_logdet_closed_form() {
        let spec = DivergenceSpec::new(DivergenceKind::LogDet, MatrixKind::Covariance).symmetric(false);
        let i2 = SpsdMatrix::identity(2);
        let d = SpsdMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        let v = bregman_divergence(spec.kind, &i2, &d).unwrap();
        assert_abs_diff_eq!(v, 2f64.ln() - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = linear_task(4, 50, &[1.0, 0.2]);
        let b = linear_task(5, 50, &[1.0]);
        let spec = DivergenceSpec::default();
        assert!(matches!(conditional_divergence(&a, &b, &spec), Err(Error::DimMismatch { .. })));
        assert!(matches!(marginal_divergence(a.x(), b.x(), &spec), Err(Error::DimMismatch { .. })));
        assert!(relatedness_matrix(&[a.clone()], &spec).is_err());
        assert!(relatedness_matrix(&[a, b], &spec).is_err());
    }

    #[test]
    fn relatedness_shape_and_outlier() {
        let base = linear_task(6, 300, &[1.0, 1.0]);
        let other = linear_task(7, 300, &[1.0, 1.0]);
        let odd = linear_task(8, 300, &[-1.0, 2.0]);
        let spec = DivergenceSpec::default();
        let m = relatedness_matrix(&[base.clone(), base.clone()], &spec).unwrap();
        assert!(m.iter().all(|v| v.abs() <= 1e-10));

        let m = relatedness_matrix(&[base, other, odd], &spec).unwrap();
        assert_eq!(m.shape(), (3, 3));
        for i in 0..3 {
            assert_eq!(m[(i, i)], 0.0);
            for j in 0..3 {
                assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
        assert!(m[(0, 2)] > m[(0, 1)] && m[(1, 2)] > m[(0, 1)], "{m}");

        let shared = DivergenceSpec {
            shared_widths: true,
            ..spec
        };
        let tasks = [linear_task(9, 100, &[1.0, 0.0]), linear_task(10, 100, &[0.0, 1.0])];
        let m = relatedness_matrix(&tasks, &shared).unwrap();
        assert!(m[(0, 1)].is_finite());
    }
}
