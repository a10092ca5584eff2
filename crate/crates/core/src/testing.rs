//! Permutation tests: conditional equality of `p(y|x)`, marginal two-sample
//! tests, and the unbiased MMD statistic used as a marginal baseline.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, PairedDataset};
use crate::divergence::{map_maybe_par, marginal_divergence, symmetric_conditional_divergence, DivergenceSpec};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub permutations: usize,
    pub significance: f64,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            permutations: 500,
            significance: 0.1,
            seed: 0,
        }
    }
}

impl PermutationConfig {
    /// 100 permutations at the default significance.
    pub fn desk(seed: u64) -> Self {
        Self {
            permutations: 100,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(Error::InvalidConfig("at least one permutation is required".into()));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "significance must lie in (0, 1), got {}",
                self.significance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub d0: f64,
    pub perm_stats: Vec<f64>,
    pub p_value: f64,
    /// `true` when there is no evidence of a difference (`p_value > significance`).
    pub h0_retained: bool,
}

impl TestResult {
    /// `(1 + #{t : d0 <= d_t}) / (1 + P)`.
    pub fn from_stats(d0: f64, perm_stats: Vec<f64>, significance: f64) -> Self {
        let exceed = perm_stats.iter().filter(|&&d| d0 <= d).count();
        let p_value = (1 + exceed) as f64 / (1 + perm_stats.len()) as f64;
        Self {
            d0,
            perm_stats,
            p_value,
            h0_retained: p_value > significance,
        }
    }
}

/// Generic size-preserving permutation test over index splits of the pooled
/// sample `0..n1+n2`. `statistic` receives the two index sets; the observed
/// split is `(0..n1, n1..n1+n2)`. Permutation `t` draws its shuffle from
/// substream `t + 1` of `cfg.seed`, so any evaluation order gives the same
/// result.
pub fn permutation_test<F>(n1: usize, n2: usize, cfg: &PermutationConfig, statistic: F) -> Result<TestResult>
where
    F: Fn(&[usize], &[usize]) -> Result<f64> + Sync + Send,
{
    cfg.validate()?;
    for n in [n1, n2] {
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, found: n });
        }
    }
    let pooled: Vec<usize> = (0..n1 + n2).collect();
    let d0 = statistic(&pooled[..n1], &pooled[n1..])?;
    let rounds: Vec<u64> = (1..=cfg.permutations as u64).collect();
    let perm_stats = map_maybe_par(&rounds, |&t| {
        let mut idx = pooled.clone();
        idx.shuffle(&mut stream_rng(cfg.seed, t));
        statistic(&idx[..n1], &idx[n1..])
    })?;
    Ok(TestResult::from_stats(d0, perm_stats, cfg.significance))
}

/// Permutation test of `p1(y|x) = p2(y|x)` on the symmetric conditional
/// divergence (the `symmetric` flag of `spec` is forced on).
pub fn conditional_permutation_test(
    s1: &PairedDataset,
    s2: &PairedDataset,
    spec: &DivergenceSpec,
    cfg: &PermutationConfig,
) -> Result<TestResult> {
    let pooled = s1.concat(s2)?;
    let spec = spec.symmetric(true);
    permutation_test(s1.n_samples(), s2.n_samples(), cfg, |a, b| {
        symmetric_conditional_divergence(&pooled.select_rows(a)?, &pooled.select_rows(b)?, &spec)
    })
}

fn sq_dist(x: &DataMatrix, i: usize, y: &DataMatrix, j: usize) -> f64 {
    x.columns()
        .zip(y.columns())
        .map(|(a, b)| (a[i] - b[j]) * (a[i] - b[j]))
        .sum()
}

/// Unbiased MMD^2 with the kernel `exp(-|a - b|^2 / (2 w^2))`.
pub fn mmd2_unbiased(x1: &DataMatrix, x2: &DataMatrix, width: f64) -> Result<f64> {
    if x1.n_vars() != x2.n_vars() {
        return Err(Error::DimMismatch {
            expected: x1.n_vars(),
            found: x2.n_vars(),
        });
    }
    if !(width > 0.0) {
        return Err(Error::NonPositiveWidth(width));
    }
    let c = 1.0 / (2.0 * width * width);
    let k = |a: &DataMatrix, i: usize, b: &DataMatrix, j: usize| (-c * sq_dist(a, i, b, j)).exp();
    let (n1, n2) = (x1.n_samples(), x2.n_samples());
    let within = |x: &DataMatrix, n: usize| {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += k(x, i, x, j);
            }
        }
        2.0 * s / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            cross += k(x1, i, x2, j);
        }
    }
    Ok(within(x1, n1) + within(x2, n2) - 2.0 * cross / (n1 * n2) as f64)
}

/// Median of the pairwise Euclidean distances between rows.
pub fn median_heuristic_width(x: &DataMatrix) -> f64 {
    let n = x.n_samples();
    let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(sq_dist(x, i, x, j));
        }
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let w = m.sqrt();
    if w > 0.0 {
        w
    } else {
        1.0
    }
}

/// Pooled Gram matrix for permutation MMD; splits only re-sum its entries.
struct PooledGram {
    n: usize,
    k: Vec<f64>,
}

impl PooledGram {
    fn new(x: &DataMatrix, width: f64) -> Self {
        let n = x.n_samples();
        let c = 1.0 / (2.0 * width * width);
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = (-c * sq_dist(x, i, x, j)).exp();
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Self { n, k }
    }

    fn mmd2(&self, a: &[usize], b: &[usize]) -> f64 {
        let row = |i: usize| &self.k[i * self.n..(i + 1) * self.n];
        let within = |s: &[usize]| {
            let mut t = 0.0;
            for &i in s {
                let r = row(i);
                t += s.iter().map(|&j| r[j]).sum::<f64>() - r[i];
            }
            t / (s.len() * (s.len() - 1)) as f64
        };
        let mut cross = 0.0;
        for &i in a {
            let r = row(i);
            cross += b.iter().map(|&j| r[j]).sum::<f64>();
        }
        within(a) + within(b) - 2.0 * cross / (a.len() * b.len()) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MarginalStatistic {
    BregmanCorrentropy(DivergenceSpec),
    /// Unbiased MMD^2, width from the median heuristic on the pooled sample.
    Mmd,
}

/// Two-sample permutation test of `p1(x) = p2(x)`.
pub fn marginal_permutation_test(
    x1: &DataMatrix,
    x2: &DataMatrix,
    statistic: &MarginalStatistic,
    cfg: &PermutationConfig,
) -> Result<TestResult> {
    let pooled = x1.vstack(x2)?;
    let (n1, n2) = (x1.n_samples(), x2.n_samples());
    match statistic {
        MarginalStatistic::BregmanCorrentropy(spec) => {
            let spec = spec.symmetric(true);
            permutation_test(n1, n2, cfg, |a, b| {
                marginal_divergence(&pooled.select_rows(a)?, &pooled.select_rows(b)?, &spec)
            })
        }
        MarginalStatistic::Mmd => {
            let gram = PooledGram::new(&pooled, median_heuristic_width(&pooled));
            permutation_test(n1, n2, cfg, |a, b| Ok(gram.mmd2(a, b)))
        }
    }
}
