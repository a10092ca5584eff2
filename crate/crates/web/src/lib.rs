//! Browser bindings. Each operation is a plain function returning a
//! serializable result; the `#[wasm_bindgen]` wrappers hand JSON to the page.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use condiv::baselines::{gaussian_conditional_kl, GaussianParams};
use condiv::data::{DataMatrix, PairedDataset};
use condiv::divergence::{conditional_divergence, conditional_divergence_from_matrices};
use condiv::drift::{detect_stream, DetectorConfig};
use condiv::rng::stream_rng;
use condiv::synth::{generate_model, model_stream, Model, ModelSpec};
use condiv::testing::conditional_permutation_test;
use condiv::{DivergenceKind, DivergenceSpec, MatrixKind, PermutationConfig, Result, TestResult};

#[derive(Debug, Serialize)]
pub struct PermutationDemo {
    pub result: TestResult,
    pub width_ratio: f64,
}

/// One permutation test between samples of two synthetic models.
pub fn permutation_demo(
    model1: &str,
    model2: &str,
    p: usize,
    n: usize,
    width_ratio: f64,
    permutations: usize,
    seed: u64,
) -> Result<PermutationDemo> {
    let s1 = generate_model(&ModelSpec::new(model1.parse()?, p, n, 2 * seed))?;
    let s2 = generate_model(&ModelSpec::new(model2.parse()?, p, n, 2 * seed + 1))?;
    let spec = DivergenceSpec::default().with_width_ratio(width_ratio);
    spec.kernel.validate()?;
    let cfg = PermutationConfig {
        permutations,
        significance: 0.1,
        seed,
    };
    Ok(PermutationDemo {
        result: conditional_permutation_test(&s1, &s2, &spec, &cfg)?,
        width_ratio,
    })
}

#[derive(Debug, Serialize)]
pub struct GaussianDemo {
    pub closed_form_kl: f64,
    pub exact_logdet: f64,
    pub sampled_logdet: f64,
    pub sampled_vn_correntropy: f64,
}

fn bivariate(r: f64, n: usize, seed: u64) -> Result<PairedDataset> {
    let mut rng = stream_rng(seed, 0);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        x.push(a);
        y.push(r * a + (1.0 - r * r).sqrt() * e);
    }
    PairedDataset::new(DataMatrix::from_columns(&[x])?, y)
}

/// Unit-variance bivariate Gaussians with correlations `r1` and `r2`: the
/// closed-form conditional KL against LogDet divergences of exact and
/// sampled covariance matrices, plus the correntropy statistic.
pub fn gaussian_demo(r1: f64, r2: f64, n: usize, seed: u64) -> Result<GaussianDemo> {
    for r in [r1, r2] {
        if !(r.abs() < 1.0) {
            return Err(condiv::Error::InvalidConfig(format!("correlation must lie in (-1, 1), got {r}")));
        }
    }
    let cov = |r: f64| condiv::SpsdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]));
    let (c1, c2) = (cov(r1)?, cov(r2)?);
    let closed_form_kl = gaussian_conditional_kl(&GaussianParams::zero_mean(c1.clone()), &GaussianParams::zero_mean(c2.clone()), 1)?;
    let exact_logdet = conditional_divergence_from_matrices(&c1, &c2, 1, DivergenceKind::LogDet)?;
    let (s1, s2) = (bivariate(r1, n, 2 * seed)?, bivariate(r2, n, 2 * seed + 1)?);
    let logdet = DivergenceSpec::new(DivergenceKind::LogDet, MatrixKind::Covariance);
    Ok(GaussianDemo {
        closed_form_kl,
        exact_logdet,
        sampled_logdet: conditional_divergence(&s1, &s2, &logdet)?,
        sampled_vn_correntropy: conditional_divergence(&s1, &s2, &DivergenceSpec::default())?,
    })
}

#[derive(Debug, Serialize)]
pub struct DriftDemo {
    pub y: Vec<f64>,
    pub change_at: usize,
    pub events: Vec<condiv::drift::DriftEvent>,
}

/// Detection on a two-segment stream that switches model at `change_at`.
pub fn drift_demo(before: &str, after: &str, change_at: usize, len: usize, window: usize, stride: usize, seed: u64) -> Result<DriftDemo> {
    if change_at >= len {
        return Err(condiv::Error::InvalidConfig("the change must happen inside the stream".into()));
    }
    let stream = model_stream(&[(before.parse::<Model>()?, change_at), (after.parse::<Model>()?, len - change_at)], 3, seed)?;
    let mut cfg = DetectorConfig::new(window, PermutationConfig { permutations: 100, significance: 0.05, seed });
    cfg.stride = stride;
    let events = detect_stream(&stream, &cfg)?;
    Ok(DriftDemo {
        y: stream.iter().map(|s| s.y).collect(),
        change_at,
        events,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = permutationTest)]
pub fn permutation_test_js(
    model1: &str,
    model2: &str,
    p: usize,
    n: usize,
    width_ratio: f64,
    permutations: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(permutation_demo(model1, model2, p, n, width_ratio, permutations, seed.into()))
}

#[wasm_bindgen(js_name = gaussianCompare)]
pub fn gaussian_compare_js(r1: f64, r2: f64, n: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(gaussian_demo(r1, r2, n, seed.into()))
}

#[wasm_bindgen(js_name = driftStream)]
pub fn drift_stream_js(
    before: &str,
    after: &str,
    change_at: usize,
    len: usize,
    window: usize,
    stride: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(drift_demo(before, after, change_at, len, window, stride, seed.into()))
}
