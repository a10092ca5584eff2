//! Synthetic regression models, the power-test harness, kernel-width sweeps,
//! the exact-covariance linear-system fixture, and labeled drift streams.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::KnnPool;
use crate::data::{DataMatrix, PairedDataset};
use crate::divergence::{map_maybe_par, DivergenceSpec};
use crate::error::{Error, Result};
use crate::kernel::MatrixKind;
use crate::rng::{derive_seed, stream_rng};
use crate::spsd::SpsdMatrix;
use crate::testing::{conditional_permutation_test, permutation_test, PermutationConfig, TestResult};

const LOG_FLOOR: f64 = 1e-6;

/// `A`: `1 + sum x + N(0,1)`; `B`: `1 + sum x + Logistic(0,1)`;
/// `C`: `1 + sum ln|x| + N(0,1)`; `D`: `1 + sum ln|x| + Logistic(0,1)`.
/// `|x|` is floored at `1e-6` before the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    A,
    B,
    C,
    D,
}

impl Model {
    fn is_log(self) -> bool {
        matches!(self, Model::C | Model::D)
    }

    fn is_logistic(self) -> bool {
        matches!(self, Model::B | Model::D)
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Model::A),
            "B" => Ok(Model::B),
            "C" => Ok(Model::C),
            "D" => Ok(Model::D),
            _ => Err(Error::InvalidConfig(format!("unknown model {s:?} (expected A, B, C or D)"))),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(model: Model, p: usize, n: usize, seed: u64) -> Self {
        Self { model, p, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidConfig("model dimension p must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, found: self.n });
        }
        Ok(())
    }

    fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

fn model_response(model: Model, row: &[f64], noise: f64) -> f64 {
    let signal: f64 = if model.is_log() {
        row.iter().map(|v| v.abs().max(LOG_FLOOR).ln()).sum()
    } else {
        row.iter().sum()
    };
    1.0 + signal + noise
}

fn draw_noise<R: Rng>(model: Model, rng: &mut R) -> f64 {
    if model.is_logistic() {
        let u: f64 = rng.sample(Open01);
        (u / (1.0 - u)).ln()
    } else {
        rng.sample(StandardNormal)
    }
}

/// Inputs come from substream 0 of `spec.seed` and noise from substream 1,
/// so models sharing a seed share their `x`.
pub fn generate_model(spec: &ModelSpec) -> Result<PairedDataset> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut xr = stream_rng(spec.seed, 0);
    let mut nr = stream_rng(spec.seed, 1);
    let mut cols = vec![vec![0.0; n]; p];
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for i in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = xr.sample(StandardNormal);
            cols[j][i] = *v;
        }
        y.push(model_response(spec.model, &row, draw_noise(spec.model, &mut nr)));
    }
    PairedDataset::new(DataMatrix::from_columns(&cols)?, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub rejection_fraction: f64,
    pub runs: usize,
    pub per_run_pvalues: Vec<f64>,
}

impl PowerReport {
    pub fn from_results(results: &[TestResult]) -> Self {
        let rejections = results.iter().filter(|r| !r.h0_retained).count();
        Self {
            rejection_fraction: rejections as f64 / results.len() as f64,
            runs: results.len(),
            per_run_pvalues: results.iter().map(|r| r.p_value).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PowerStatistic {
    Divergence(DivergenceSpec),
    /// Symmetrized fixed-k nearest-neighbour conditional KL.
    KnnConditionalKl { k: usize },
}

impl PowerStatistic {
    pub fn label(&self) -> String {
        match self {
            PowerStatistic::Divergence(spec) => {
                let kind = match spec.kind {
                    crate::DivergenceKind::VonNeumann => "vn",
                    crate::DivergenceKind::LogDet => "logdet",
                };
                let matrix = match spec.matrix {
                    MatrixKind::Correntropy => "correntropy",
                    MatrixKind::Covariance => "covariance",
                };
                format!("{kind}/{matrix}")
            }
            PowerStatistic::KnnConditionalKl { k } => format!("knn-kl/k={k}"),
        }
    }
}

/// Permutation test on one pair of samples with the given statistic.
pub fn two_sample_test(
    s1: &PairedDataset,
    s2: &PairedDataset,
    statistic: &PowerStatistic,
    cfg: &PermutationConfig,
) -> Result<TestResult> {
    match statistic {
        PowerStatistic::Divergence(spec) => conditional_permutation_test(s1, s2, spec, cfg),
        PowerStatistic::KnnConditionalKl { k } => {
            let pool = KnnPool::new(&s1.concat(s2)?);
            permutation_test(s1.n_samples(), s2.n_samples(), cfg, |a, b| {
                pool.symmetric_conditional_kl(a, b, *k)
            })
        }
    }
}

/// Data for run `r`: model 1 from `derive_seed(seed1, 2r)`, model 2 from
/// `derive_seed(seed2, 2r + 1)`.
pub fn run_datasets(model1: &ModelSpec, model2: &ModelSpec, run: usize) -> Result<(PairedDataset, PairedDataset)> {
    let r = run as u64;
    let s1 = generate_model(&model1.with_seed(derive_seed(model1.seed, 2 * r)))?;
    let s2 = generate_model(&model2.with_seed(derive_seed(model2.seed, 2 * r + 1)))?;
    Ok((s1, s2))
}

pub fn power_test_with(
    model1: &ModelSpec,
    model2: &ModelSpec,
    runs: usize,
    cfg: &PermutationConfig,
    statistic: &PowerStatistic,
) -> Result<PowerReport> {
    if model1.p != model2.p {
        return Err(Error::DimMismatch {
            expected: model1.p,
            found: model2.p,
        });
    }
    if runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    model1.validate()?;
    model2.validate()?;
    let ids: Vec<usize> = (0..runs).collect();
    let results = map_maybe_par(&ids, |&r| {
        let (s1, s2) = run_datasets(model1, model2, r)?;
        let run_cfg = PermutationConfig {
            seed: derive_seed(cfg.seed, r as u64),
            ..*cfg
        };
        two_sample_test(&s1, &s2, statistic, &run_cfg)
    })?;
    Ok(PowerReport::from_results(&results))
}

pub fn power_test(
    model1: &ModelSpec,
    model2: &ModelSpec,
    runs: usize,
    cfg: &PermutationConfig,
    spec: &DivergenceSpec,
) -> Result<PowerReport> {
    power_test_with(model1, model2, runs, cfg, &PowerStatistic::Divergence(*spec))
}

pub fn width_sweep(
    model1: &ModelSpec,
    model2: &ModelSpec,
    ratios: &[f64],
    runs: usize,
    cfg: &PermutationConfig,
    spec: &DivergenceSpec,
) -> Result<Vec<(f64, PowerReport)>> {
    if spec.matrix != MatrixKind::Correntropy {
        return Err(Error::InvalidConfig("a width sweep needs the correntropy matrix".into()));
    }
    ratios
        .iter()
        .map(|&ratio| {
            let spec = spec.with_width_ratio(ratio);
            spec.kernel.validate()?;
            Ok((ratio, power_test(model1, model2, runs, cfg, &spec)?))
        })
        .collect()
}

/// One row of the power CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub pair: String,
    pub statistic: String,
    pub p: usize,
    pub n: usize,
    pub runs: usize,
    pub rejection_fraction: f64,
}

impl PowerRow {
    pub fn new(model1: &ModelSpec, model2: &ModelSpec, statistic: &PowerStatistic, report: &PowerReport) -> Self {
        Self {
            pair: format!("{}:{}", model1.model, model2.model),
            statistic: statistic.label(),
            p: model1.p,
            n: model1.n,
            runs: report.runs,
            rejection_fraction: report.rejection_fraction,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearSystemFixture {
    pub joint: (SpsdMatrix, SpsdMatrix),
    pub marginal: (SpsdMatrix, SpsdMatrix),
    pub w: DMatrix<f64>,
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_pd<R: Rng>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let b = random_matrix(p, p, rng);
    &b * b.transpose() / p as f64 + DMatrix::identity(p, p) * 0.5
}

/// Exact covariances of `[x | W x]` for two random input covariances sharing
/// one linear map.
pub fn common_system_fixture(p: usize, r: usize, seed: u64) -> Result<LinearSystemFixture> {
    let mut rng = stream_rng(seed, 0);
    let w = random_matrix(r, p, &mut rng);
    linear_system_fixture(p, &w, &w, &mut rng)
}

/// As [`common_system_fixture`] with `W2 = W + scale * E` for random `E`.
pub fn perturbed_fixture(p: usize, r: usize, scale: f64, seed: u64) -> Result<LinearSystemFixture> {
    let mut rng = stream_rng(seed, 0);
    let w = random_matrix(r, p, &mut rng);
    let w2 = &w + random_matrix(r, p, &mut rng) * scale;
    linear_system_fixture(p, &w, &w2, &mut rng)
}

/// Joint covariances `M_i Sigma_i M_i^T` with `M_i = [I_p; W_i]`.
pub fn linear_system_fixture<R: Rng>(p: usize, w1: &DMatrix<f64>, w2: &DMatrix<f64>, rng: &mut R) -> Result<LinearSystemFixture> {
    if p == 0 || w1.ncols() != p || w1.shape() != w2.shape() || w1.nrows() == 0 {
        return Err(Error::InvalidConfig("fixture needs p >= 1 and r x p maps".into()));
    }
    let r = w1.nrows();
    let s1 = random_pd(p, rng);
    let s2 = random_pd(p, rng);
    let joint = |w: &DMatrix<f64>, s: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(p + r, p);
        m.view_mut((0, 0), (p, p)).fill_with_identity();
        m.view_mut((p, 0), (r, p)).copy_from(w);
        SpsdMatrix::repaired(&m * s * m.transpose())
    };
    Ok(LinearSystemFixture {
        joint: (joint(w1, &s1)?, joint(w2, &s2)?),
        marginal: (SpsdMatrix::repaired(s1)?, SpsdMatrix::repaired(s2)?),
        w: w1.clone(),
    })
}

/// A labeled stream of consecutive model segments. Segment `i` is generated
/// from `derive_seed(seed, i)`; indices start at 0.
pub fn model_stream(segments: &[(Model, usize)], p: usize, seed: u64) -> Result<Vec<crate::drift::StreamSample>> {
    let mut out = Vec::with_capacity(segments.iter().map(|s| s.1).sum());
    for (i, &(model, len)) in segments.iter().enumerate() {
        let ds = generate_model(&ModelSpec::new(model, p, len, derive_seed(seed, i as u64)))?;
        for r in 0..len {
            out.push(crate::drift::StreamSample {
                index: out.len(),
                x: ds.x().row(r),
                y: ds.y()[r],
            });
        }
    }
    Ok(out)
}
