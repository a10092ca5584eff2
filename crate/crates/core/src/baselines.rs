//! Reference statistics: the closed-form conditional KL divergence between
//! Gaussians, and fixed-k nearest-neighbour KL estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, PairedDataset};
use crate::divergence::map_maybe_par;
use crate::error::{Error, Result};
use crate::spsd::SpsdMatrix;

#[derive(Debug, Clone)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub cov: SpsdMatrix,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, cov: SpsdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn zero_mean(cov: SpsdMatrix) -> Self {
        Self {
            mean: vec![0.0; cov.dim()],
            cov,
        }
    }
}

fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::SingularCovariance)
}

fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `KL(N(mu1, S1) || N(mu2, S2))` over the leading `k` coordinates, in nats.
fn gaussian_kl(mu1: &[f64], s1: &DMatrix<f64>, mu2: &[f64], s2: &DMatrix<f64>, k: usize) -> Result<f64> {
    let s1 = s1.view((0, 0), (k, k)).into_owned();
    let s2 = s2.view((0, 0), (k, k)).into_owned();
    let c1 = cholesky(s1.clone())?;
    let c2 = cholesky(s2)?;
    let trace = c2.solve(&s1).trace();
    let diff = DVector::from_iterator(k, (0..k).map(|i| mu2[i] - mu1[i]));
    let maha = diff.dot(&c2.solve(&diff));
    Ok(0.5 * (trace + maha - k as f64 + log_det(&c2) - log_det(&c1)))
}

/// Closed-form `KL(p1(y|x) || p2(y|x))` for jointly Gaussian `[x | y]`,
/// computed as the joint KL minus the KL of the leading `p`-dimensional
/// marginals.
pub fn gaussian_conditional_kl(joint1: &GaussianParams, joint2: &GaussianParams, p: usize) -> Result<f64> {
    let dim = joint1.cov.dim();
    if joint2.cov.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            found: joint2.cov.dim(),
        });
    }
    if p == 0 || p >= dim {
        return Err(Error::DimMismatch {
            expected: dim - 1,
            found: p,
        });
    }
    let (a, b) = (joint1.cov.entries(), joint2.cov.entries());
    let joint = gaussian_kl(&joint1.mean, a, &joint2.mean, b, dim)?;
    let marginal = gaussian_kl(&joint1.mean, a, &joint2.mean, b, p)?;
    Ok(joint - marginal)
}

fn kth_smallest(buf: &mut [f64], k: usize) -> f64 {
    *buf.select_nth_unstable_by(k - 1, f64::total_cmp).1
}

/// Core of the fixed-k estimator over an abstract squared-distance oracle:
/// `(d/N1) sum_i ln(nu_k(i) / rho_k(i)) + ln(N2 / (N1 - 1))`.
fn knn_kl_core<D>(first: &[usize], second: &[usize], k: usize, dim: usize, sq_dist: D) -> Result<f64>
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    let (n1, n2) = (first.len(), second.len());
    if k == 0 || n1 <= k || n2 < k {
        return Err(Error::InsufficientSamples {
            needed: k + 1,
            found: n1.min(n2),
        });
    }
    let terms = map_maybe_par(first, |&i| {
        let mut own: Vec<f64> = first.iter().filter(|&&j| j != i).map(|&j| sq_dist(i, j)).collect();
        let mut other: Vec<f64> = second.iter().map(|&j| sq_dist(i, j)).collect();
        let rho = kth_smallest(&mut own, k);
        let nu = kth_smallest(&mut other, k);
        if rho <= 0.0 || nu <= 0.0 {
            return Err(Error::DegenerateDistances);
        }
        // squared distances: halve the log
        Ok(0.5 * (nu / rho).ln())
    })?;
    let sum: f64 = terms.iter().sum();
    Ok(dim as f64 / n1 as f64 * sum + (n2 as f64 / (n1 - 1) as f64).ln())
}

fn row_major(x: &DataMatrix) -> Vec<f64> {
    let d = x.n_vars();
    let mut out = vec![0.0; x.n_samples() * d];
    for (j, col) in x.columns().enumerate() {
        for (i, v) in col.iter().enumerate() {
            out[i * d + j] = *v;
        }
    }
    out
}

fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fixed-k nearest-neighbour estimate of `KL(P1 || P2)` from samples.
pub fn knn_kl_estimate(x1: &DataMatrix, x2: &DataMatrix, k: usize) -> Result<f64> {
    let d = x1.n_vars();
    if x2.n_vars() != d {
        return Err(Error::DimMismatch {
            expected: d,
            found: x2.n_vars(),
        });
    }
    let rows = row_major(&x1.vstack(x2)?);
    let n1 = x1.n_samples();
    let first: Vec<usize> = (0..n1).collect();
    let second: Vec<usize> = (n1..n1 + x2.n_samples()).collect();
    knn_kl_core(&first, &second, k, d, |i, j| {
        sq_euclid(&rows[i * d..(i + 1) * d], &rows[j * d..(j + 1) * d])
    })
}

/// Chain-rule estimate: joint KL on `[x | y]` minus KL on `x`.
pub fn knn_conditional_kl(s1: &PairedDataset, s2: &PairedDataset, k: usize) -> Result<f64> {
    Ok(knn_kl_estimate(&s1.joint(), &s2.joint(), k)? - knn_kl_estimate(s1.x(), s2.x(), k)?)
}

/// Squared distances among a pooled paired sample, for evaluating the
/// conditional kNN statistic on many index splits.
pub struct KnnPool {
    n: usize,
    p: usize,
    x_dist: Vec<f64>,
    joint_dist: Vec<f64>,
}

impl KnnPool {
    pub fn new(pooled: &PairedDataset) -> Self {
        let n = pooled.n_samples();
        let p = pooled.n_features();
        let rows = row_major(pooled.x());
        let y = pooled.y();
        let mut x_dist = vec![0.0; n * n];
        let mut joint_dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = sq_euclid(&rows[i * p..(i + 1) * p], &rows[j * p..(j + 1) * p]);
                let dj = dx + (y[i] - y[j]) * (y[i] - y[j]);
                x_dist[i * n + j] = dx;
                x_dist[j * n + i] = dx;
                joint_dist[i * n + j] = dj;
                joint_dist[j * n + i] = dj;
            }
        }
        Self {
            n,
            p,
            x_dist,
            joint_dist,
        }
    }

    pub fn conditional_kl(&self, first: &[usize], second: &[usize], k: usize) -> Result<f64> {
        let n = self.n;
        let joint = knn_kl_core(first, second, k, self.p + 1, |i, j| self.joint_dist[i * n + j])?;
        let marginal = knn_kl_core(first, second, k, self.p, |i, j| self.x_dist[i * n + j])?;
        Ok(joint - marginal)
    }

    /// Half the sum of both directions.
    pub fn symmetric_conditional_kl(&self, first: &[usize], second: &[usize], k: usize) -> Result<f64> {
        Ok(0.5 * (self.conditional_kl(first, second, k)? + self.conditional_kl(second, first, k)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
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

    fn gaussian(seed: u64, n: usize, d: usize, mean: f64, sd: f64) -> DataMatrix {
        let mut rng = stream_rng(seed, 0);
        let v = (0..n * d)
            .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        DataMatrix::from_column_major(n, d, v).unwrap()
    }

    #[test]
    fn closed_form_cases() {
        let a = GaussianParams::zero_mean(spd(&[1.0, 0.5, 0.5, 1.0], 2));
        let b = GaussianParams::zero_mean(SpsdMatrix::identity(2));
        assert_abs_diff_eq!(gaussian_conditional_kl(&a, &a, 1).unwrap(), 0.0, epsilon = 1e-14);
        let v = gaussian_conditional_kl(&a, &b, 1).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (4.0f64 / 3.0).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(v, 0.143_841, epsilon = 1e-6);

        let m1 = GaussianParams::new(vec![0.0, 0.0], SpsdMatrix::identity(2)).unwrap();
        let m2 = GaussianParams::new(vec![0.0, 1.0], SpsdMatrix::identity(2)).unwrap();
        assert_abs_diff_eq!(gaussian_conditional_kl(&m1, &m2, 1).unwrap(), 0.5, epsilon = 1e-14);

        // scale cancellation
        let a2 = GaussianParams::zero_mean(a.cov.scaled(2.0));
        let b2 = GaussianParams::zero_mean(b.cov.scaled(2.0));
        assert_abs_diff_eq!(gaussian_conditional_kl(&a2, &b2, 1).unwrap(), v, epsilon = 1e-10);
    }

    #[test]
    fn closed_form_errors() {
        let a = GaussianParams::zero_mean(SpsdMatrix::identity(2));
        let b = GaussianParams::zero_mean(SpsdMatrix::identity(3));
        assert!(gaussian_conditional_kl(&a, &b, 1).is_err());
        assert!(gaussian_conditional_kl(&a, &a, 2).is_err());
        let singular = GaussianParams::zero_mean(spd(&[1.0, 1.0, 1.0, 1.0], 2));
        assert!(matches!(
            gaussian_conditional_kl(&a, &singular, 1),
            Err(Error::SingularCovariance)
        ));
        assert!(GaussianParams::new(vec![0.0], SpsdMatrix::identity(2)).is_err());
    }

    #[test]
    fn knn_detects_duplicates_and_small_samples() {
        let x = DataMatrix::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = DataMatrix::from_rows(&[vec![0.5], vec![1.5], vec![2.5], vec![3.5]]).unwrap();
        assert!(matches!(knn_kl_estimate(&x, &y, 1), Err(Error::DegenerateDistances)));
        assert!(knn_kl_estimate(&x, &y, 4).is_err());
    }

    #[test]
    fn knn_is_rotation_invariant() {
        let a = gaussian(1, 200, 2, 0.0, 1.0);
        let b = gaussian(2, 200, 2, 0.3, 1.5);
        let (s, c) = (0.6f64, 0.8f64);
        let rot = |m: &DataMatrix| {
            let x = m.column(0);
            let y = m.column(1);
            DataMatrix::from_columns(&[
                x.iter().zip(y).map(|(a, b)| c * a - s * b).collect(),
                x.iter().zip(y).map(|(a, b)| s * a + c * b).collect(),
            ])
            .unwrap()
        };
        let v = knn_kl_estimate(&a, &b, 5).unwrap();
        let w = knn_kl_estimate(&rot(&a), &rot(&b), 5).unwrap();
        assert!((v - w).abs() < 1e-9, "{v} {w}");
    }

    #[test]
    fn pool_matches_materialized_estimator() {
        let mut rng = stream_rng(3, 0);
        let mut make = |n: usize| {
            let x = gaussian(rng.random(), n, 2, 0.0, 1.0);
            let y = x.column(0).iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
            PairedDataset::new(x, y).unwrap()
        };
        let s1 = make(60);
        let s2 = make(50);
        let pool = KnnPool::new(&s1.concat(&s2).unwrap());
        let first: Vec<usize> = (0..60).collect();
        let second: Vec<usize> = (60..110).collect();
        let direct = knn_conditional_kl(&s1, &s2, 3).unwrap();
        let pooled = pool.conditional_kl(&first, &second, 3).unwrap();
        assert!((direct - pooled).abs() < 1e-10);
    }
}
