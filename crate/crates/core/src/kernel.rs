//! Gaussian kernel, Silverman bandwidths, the centered correntropy
//! estimator and the correntropy / covariance matrices built from data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::spsd::SpsdMatrix;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SILVERMAN_FACTOR: f64 = 1.06;
/// Width used when the difference series has zero spread.
pub const FALLBACK_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthRule {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub rule: BandwidthRule,
    /// Multiplier applied to every rule-selected width.
    pub width_ratio: f64,
    /// One width for every entry instead of one per variable pair.
    pub global_width: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            rule: BandwidthRule::Silverman,
            width_ratio: 1.0,
            global_width: true,
        }
    }
}

impl KernelConfig {
    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.width_ratio = ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_ratio > 0.0) || !self.width_ratio.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "width ratio must be positive, got {}",
                self.width_ratio
            )));
        }
        if let BandwidthRule::Fixed(w) = self.rule {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWidth(w));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Correntropy,
    Covariance,
}

fn check_width(width: f64) -> Result<()> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::NonPositiveWidth(width));
    }
    Ok(())
}

/// `exp(-(a-b)^2 / (2 w^2)) / (sqrt(2 pi) w)`.
pub fn gaussian_kernel(a: f64, b: f64, width: f64) -> Result<f64> {
    check_width(width)?;
    let d = a - b;
    Ok(INV_SQRT_2PI / width * (-d * d / (2.0 * width * width)).exp())
}

fn check_lengths(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    if u.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            found: u.len(),
        });
    }
    Ok(())
}

fn sample_std(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|x| (x - mean) * (x - mean)).sum();
    ((ss / (n - 1) as f64).sqrt(), mean)
}

fn rule_width(std: f64, mean: f64, n: usize) -> f64 {
    if std <= 1e-12 * mean.abs().max(1.0) {
        FALLBACK_WIDTH
    } else {
        SILVERMAN_FACTOR * std * (n as f64).powf(-0.2)
    }
}

/// `ratio * 1.06 * std(u - v) * N^(-1/5)`, or `ratio * 1.0` when `u - v`
/// is constant.
pub fn silverman_width(u: &[f64], v: &[f64], ratio: f64) -> Result<f64> {
    check_lengths(u, v)?;
    check_width(ratio)?;
    let (std, mean) = sample_std(u.iter().zip(v).map(|(a, b)| a - b), u.len());
    Ok(ratio * rule_width(std, mean, u.len()))
}

/// `exp(x)` for `x <= 0`, written so the summation loops vectorize.
/// Relative error is a few ulp; inputs below -708 return ~1e-308.
#[inline(always)]
fn exp_nonpos(x: f64) -> f64 {
    const MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = x.max(-708.0);
    let shifted = x * std::f64::consts::LOG2_E + MAGIC;
    let k = shifted - MAGIC;
    let r = x - k * LN2_HI - k * LN2_LO;
    // Taylor polynomial of degree 12 on |r| <= ln2 / 2
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // the low mantissa bits of `shifted` hold k; move k + 1023 into the exponent
    let scale = f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52);
    p * scale
}

const BLOCK: usize = 64;

/// `sum_j exp(-c (a - v_j)^2)`. Exponentials are produced a block at a time
/// into a scratch buffer so the map loop vectorizes. Plain index loops keep
/// everything inlined into the caller's target-feature context.
#[inline(always)]
fn row_sum_generic(a: f64, v: &[f64], c: f64) -> f64 {
    let mut buf = [0.0f64; BLOCK];
    let mut acc = [0.0f64; 4];
    let mut start = 0;
    while start < v.len() {
        let len = BLOCK.min(v.len() - start);
        let ch = &v[start..start + len];
        for k in 0..len {
            let d = a - ch[k];
            buf[k] = exp_nonpos(-c * d * d);
        }
        let quads = len / 4 * 4;
        let mut k = 0;
        while k < quads {
            acc[0] += buf[k];
            acc[1] += buf[k + 1];
            acc[2] += buf[k + 2];
            acc[3] += buf[k + 3];
            k += 4;
        }
        while k < len {
            acc[0] += buf[k];
            k += 1;
        }
        start += len;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Sum of `row_sum(u_i, v[from(i)..])` over all rows. Wider SIMD variants are
/// selected at runtime; no fused multiply-adds are emitted, so every variant
/// returns bitwise-identical results.
fn table_sum(u: &[f64], v: &[f64], c: f64, upper: bool) -> f64 {
    #[inline(always)]
    fn body(u: &[f64], v: &[f64], c: f64, upper: bool) -> f64 {
        let mut total = 0.0;
        for i in 0..u.len() {
            let row = if upper { &v[i + 1..] } else { v };
            total += row_sum_generic(u[i], row, c);
        }
        total
    }

    #[cfg(target_arch = "x86_64")]
    {
        #[target_feature(enable = "avx512f")]
        unsafe fn avx512(u: &[f64], v: &[f64], c: f64, upper: bool) -> f64 {
            body(u, v, c, upper)
        }
        #[target_feature(enable = "avx2")]
        unsafe fn avx2(u: &[f64], v: &[f64], c: f64, upper: bool) -> f64 {
            body(u, v, c, upper)
        }
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the required CPU feature was detected above.
            return unsafe { avx512(u, v, c, upper) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as above.
            return unsafe { avx2(u, v, c, upper) };
        }
    }
    body(u, v, c, upper)
}

/// Unnormalized kernel sums: `(sum_i k(u_i - v_i), sum_ij k(u_i - v_j))`
/// with `k(d) = exp(-d^2 / (2 w^2))`.
fn kernel_sums(u: &[f64], v: &[f64], width: f64) -> (f64, f64) {
    let c = 1.0 / (2.0 * width * width);
    let paired: f64 = u
        .iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - b;
            exp_nonpos(-c * d * d)
        })
        .sum();
    let cross = if u == v {
        // symmetric table: diagonal ones plus twice the strict upper triangle
        u.len() as f64 + 2.0 * table_sum(u, u, c, true)
    } else {
        table_sum(u, v, c, false)
    };
    (paired, cross)
}

/// `(1/N) sum_i k(u_i, v_i) - (1/N^2) sum_ij k(u_i, v_j)`.
pub fn centered_correntropy(u: &[f64], v: &[f64], width: f64) -> Result<f64> {
    check_lengths(u, v)?;
    check_width(width)?;
    let n = u.len() as f64;
    let (paired, cross) = kernel_sums(u, v, width);
    Ok(INV_SQRT_2PI / width * (paired / n - cross / (n * n)))
}

/// Symmetric `d x d` table of kernel widths, one per variable pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthTable {
    dim: usize,
    widths: Vec<f64>,
}

impl WidthTable {
    pub fn uniform(dim: usize, width: f64) -> Result<Self> {
        check_width(width)?;
        Ok(Self {
            dim,
            widths: vec![width; dim * dim],
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.widths[i * self.dim + j]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Widths selected by `cfg` on `data`.
    pub fn select(data: &DataMatrix, cfg: &KernelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = data.n_vars();
        let n = data.n_samples();
        match cfg.rule {
            BandwidthRule::Fixed(w) => Self::uniform(d, w * cfg.width_ratio),
            BandwidthRule::Silverman if cfg.global_width => {
                // spread of the difference of two independent variables with
                // the average column variance
                let mean_var = data
                    .columns()
                    .map(|c| sample_std(c.iter().copied(), n).0.powi(2))
                    .sum::<f64>()
                    / d as f64;
                let std = (2.0 * mean_var).sqrt();
                Self::uniform(d, cfg.width_ratio * rule_width(std, 0.0, n))
            }
            BandwidthRule::Silverman => {
                let mut widths = vec![0.0; d * d];
                for i in 0..d {
                    for j in i..d {
                        let w = silverman_width(data.column(i), data.column(j), cfg.width_ratio)?;
                        widths[i * d + j] = w;
                        widths[j * d + i] = w;
                    }
                }
                Ok(Self { dim: d, widths })
            }
        }
    }

    /// Leading `k x k` block.
    pub fn leading(&self, k: usize) -> Self {
        let widths = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        Self { dim: k, widths }
    }
}

/// `C(i, j) = U(x_i, x_j)` with widths chosen by `cfg`.
pub fn correntropy_matrix(data: &DataMatrix, cfg: &KernelConfig) -> Result<SpsdMatrix> {
    let widths = WidthTable::select(data, cfg)?;
    correntropy_matrix_with_widths(data, &widths)
}

pub fn correntropy_matrix_with_widths(data: &DataMatrix, widths: &WidthTable) -> Result<SpsdMatrix> {
    SpsdMatrix::repaired(correntropy_entries(data, widths)?)
}

/// Raw symmetric matrix of centered correntropies, before spectral repair.
pub fn correntropy_entries(data: &DataMatrix, widths: &WidthTable) -> Result<DMatrix<f64>> {
    let d = data.n_vars();
    if widths.dim() != d {
        return Err(Error::DimMismatch {
            expected: d,
            found: widths.dim(),
        });
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let entry = |&(i, j): &(usize, usize)| {
        centered_correntropy(data.column(i), data.column(j), widths.get(i, j))
    };
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        pairs.par_iter().map(entry).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = pairs.iter().map(entry).collect::<Result<_>>()?;

    let mut m = DMatrix::zeros(d, d);
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(m)
}

/// Sample covariance with `1/(N-1)` normalization. A Gram matrix is PSD up
/// to round-off, so no spectral repair (and no eigendecomposition) is done.
pub fn covariance_matrix(data: &DataMatrix) -> SpsdMatrix {
    let d = data.n_vars();
    let n = data.n_samples();
    let centered: Vec<Vec<f64>> = data
        .columns()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|x| x - mean).collect()
        })
        .collect();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let s: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let v = s / (n - 1) as f64;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SpsdMatrix::from_symmetric_unchecked(m)
}

pub fn data_matrix(data: &DataMatrix, kind: MatrixKind, cfg: &KernelConfig) -> Result<SpsdMatrix> {
    match kind {
        MatrixKind::Correntropy => correntropy_matrix(data, cfg),
        MatrixKind::Covariance => Ok(covariance_matrix(data)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Direct double loop with `f64::exp`.
    fn brute_force_correntropy(u: &[f64], v: &[f64], w: f64) -> f64 {
        let n = u.len() as f64;
        let k = |a: f64, b: f64| gaussian_kernel(a, b, w).unwrap();
        let paired: f64 = u.iter().zip(v).map(|(a, b)| k(*a, *b)).sum();
        let cross: f64 = u.iter().flat_map(|a| v.iter().map(move |b| k(*a, *b))).sum();
        paired / n - cross / (n * n)
    }

    #[test]
    fn kernel_values() {
        assert_abs_diff_eq!(gaussian_kernel(0.0, 0.0, 1.0).unwrap(), 0.398_942_280_4, epsilon = 1e-9);
        assert_abs_diff_eq!(gaussian_kernel(0.0, 1.0, 1.0).unwrap(), 0.241_970_724_5, epsilon = 1e-9);
        assert!(matches!(gaussian_kernel(0.0, 1.0, 0.0), Err(Error::NonPositiveWidth(_))));
        assert!(gaussian_kernel(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn fast_exp_matches_std() {
        let mut x: f64 = 0.0;
        while x > -750.0 {
            let want = x.exp();
            let got = exp_nonpos(x);
            if x > -700.0 {
                assert!((got - want).abs() <= 4.0 * f64::EPSILON * want, "{x}: {got} vs {want}");
            } else {
                assert!(got < 1e-300);
            }
            x -= 0.0137;
        }
        assert_eq!(exp_nonpos(0.0), 1.0);
    }

    #[test]
    fn silverman_cases() {
        let u = vec![3.0; 10];
        let v = vec![1.0; 10];
        assert_eq!(silverman_width(&u, &v, 1.0).unwrap(), 1.0);
        assert_eq!(silverman_width(&u, &v, 2.5).unwrap(), 2.5);

        // 100 points whose differences have sample std exactly 1
        let base: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let scale = (99.0f64 / 100.0).sqrt();
        let u: Vec<f64> = base.iter().map(|b| b * scale).collect();
        let v = vec![0.0; 100];
        let w = silverman_width(&u, &v, 1.0).unwrap();
        assert_abs_diff_eq!(w, 1.06 * 100f64.powf(-0.2), epsilon = 1e-12);
        assert_abs_diff_eq!(w, 0.421_994, epsilon = 1e-6);
        assert_abs_diff_eq!(silverman_width(&u, &v, 2.0).unwrap(), 2.0 * w, epsilon = 1e-15);
    }

    #[test]
    fn correntropy_cases() {
        let c = vec![0.7; 5];
        assert_abs_diff_eq!(centered_correntropy(&c, &c, 1.0).unwrap(), 0.0, epsilon = 1e-16);

        let u = [0.0, 1.0];
        let want = INV_SQRT_2PI - INV_SQRT_2PI * (1.0 + (-0.5f64).exp()) / 2.0;
        assert_abs_diff_eq!(centered_correntropy(&u, &u, 1.0).unwrap(), want, epsilon = 1e-15);
        assert_abs_diff_eq!(want, 0.0785, epsilon = 1e-4);

        assert!(matches!(
            centered_correntropy(&[1.0, 2.0], &[1.0], 1.0),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn matrix_entries_are_the_pairwise_estimator() {
        let data = DataMatrix::from_columns(&[
            vec![0.1, -1.2, 0.4, 2.0, -0.3, 0.9, 1.1],
            vec![1.0, 0.2, -0.7, 0.3, 0.8, -1.5, 0.05],
        ])
        .unwrap();
        for global_width in [true, false] {
            let cfg = KernelConfig {
                global_width,
                ..KernelConfig::default()
            };
            let m = correntropy_matrix(&data, &cfg).unwrap();
            let w = WidthTable::select(&data, &cfg).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let direct = centered_correntropy(data.column(i), data.column(j), w.get(i, j)).unwrap();
                    assert_abs_diff_eq!(m.get(i, j), direct, epsilon = 1e-15);
                }
            }
            assert_eq!(w.get(0, 0) == FALLBACK_WIDTH, !global_width);
        }
    }

    #[test]
    fn constant_data_gives_zero_matrices() {
        let data = DataMatrix::from_rows(&vec![vec![1.5, -2.0, 0.0]; 6]).unwrap();
        let c = correntropy_matrix(&data, &KernelConfig::default()).unwrap();
        assert!(c.entries().amax() < 1e-15);
        let s = covariance_matrix(&data);
        assert_eq!(s.entries().amax(), 0.0);
    }

    #[test]
    fn two_point_covariance() {
        let data = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let s = covariance_matrix(&data);
        for v in s.entries().iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_variable_matrix_is_nonnegative() {
        let data = DataMatrix::from_columns(&[vec![0.3, 1.7, -0.4, 2.2, 0.0]]).unwrap();
        let c = correntropy_matrix(&data, &KernelConfig::default()).unwrap();
        assert_eq!(c.dim(), 1);
        assert!(c.get(0, 0) >= 0.0);
    }

    #[test]
    fn global_and_fixed_widths() {
        let data = DataMatrix::from_columns(&[vec![0.0, 1.0, 2.0, 4.0], vec![1.0, 0.0, 3.0, 1.0]]).unwrap();
        let cfg = KernelConfig {
            rule: BandwidthRule::Fixed(0.5),
            width_ratio: 2.0,
            global_width: false,
        };
        let w = WidthTable::select(&data, &cfg).unwrap();
        assert!((0..2).all(|i| (0..2).all(|j| w.get(i, j) == 1.0)));
        let g = WidthTable::select(
            &data,
            &KernelConfig {
                global_width: true,
                ..KernelConfig::default()
            },
        )
        .unwrap();
        assert_eq!(g.get(0, 1), g.get(1, 1));
        let bad = KernelConfig {
            rule: BandwidthRule::Fixed(-1.0),
            ..KernelConfig::default()
        };
        assert!(correntropy_matrix(&data, &bad).is_err());
    }

    proptest! {
        #[test]
        fn estimator_matches_brute_force(
            u in prop::collection::vec(-5.0f64..5.0, 2..40),
            shift in -2.0f64..2.0,
            w in 0.05f64..5.0,
        ) {
            let v: Vec<f64> = u.iter().rev().map(|x| x * 0.5 + shift).collect();
            let fast = centered_correntropy(&u, &v, w).unwrap();
            let slow = brute_force_correntropy(&u, &v, w);
            prop_assert!((fast - slow).abs() <= 1e-13, "{fast} vs {slow}");
            let auto = centered_correntropy(&u, &u, w).unwrap();
            prop_assert!(auto >= -1e-15);
            prop_assert!((auto - brute_force_correntropy(&u, &u, w)).abs() <= 1e-13);
        }

        #[test]
        fn kernel_is_symmetric(a in -10.0f64..10.0, b in -10.0f64..10.0, w in 0.01f64..10.0) {
            prop_assert_eq!(gaussian_kernel(a, b, w).unwrap(), gaussian_kernel(b, a, w).unwrap());
            prop_assert!(gaussian_kernel(a, a, w).unwrap() >= gaussian_kernel(a, b, w).unwrap());
        }
    }
}
