//! Wall-time scaling of matrix construction.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::kernel::{data_matrix, KernelConfig, MatrixKind};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub matrix: String,
    pub n: usize,
    pub d: usize,
    pub seconds: f64,
}

fn matrix_label(kind: MatrixKind) -> &'static str {
    match kind {
        MatrixKind::Correntropy => "correntropy",
        MatrixKind::Covariance => "covariance",
    }
}

/// Minimum over three trials of the mean time per construction, repeating
/// each trial until it spans at least `min_trial`.
pub fn time_construction(data: &DataMatrix, kind: MatrixKind, min_trial: Duration) -> Result<f64> {
    let cfg = KernelConfig::default();
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let start = Instant::now();
        let mut reps = 0u32;
        while reps == 0 || start.elapsed() < min_trial {
            std::hint::black_box(data_matrix(std::hint::black_box(data), kind, &cfg)?);
            reps += 1;
        }
        best = best.min(start.elapsed().as_secs_f64() / reps as f64);
    }
    Ok(best)
}

pub fn run_bench(ns: &[usize], d: usize, kinds: &[MatrixKind], seed: u64, min_trial: Duration) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in ns {
        let mut rng = stream_rng(seed, n as u64);
        let values = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        let data = DataMatrix::from_column_major(n, d, values)?;
        for &kind in kinds {
            rows.push(BenchRow {
                matrix: matrix_label(kind).to_string(),
                n,
                d,
                seconds: time_construction(&data, kind, min_trial)?,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln seconds` against `ln n` for one matrix kind.
pub fn loglog_slope(rows: &[BenchRow], matrix: &str) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.matrix == matrix)
        .map(|r| ((r.n as f64).ln(), r.seconds.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, found: pts.len() });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidData("bench sizes must differ".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let rows: Vec<BenchRow> = [100usize, 200, 400]
            .iter()
            .map(|&n| BenchRow {
                matrix: "m".into(),
                n,
                d: 1,
                seconds: 3e-9 * (n as f64).powi(2),
            })
            .collect();
        assert!((loglog_slope(&rows, "m").unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&rows, "other").is_err());
    }

    #[test]
    fn bench_rows_cover_grid() {
        let rows = run_bench(&[20, 40], 2, &[MatrixKind::Correntropy, MatrixKind::Covariance], 1, Duration::ZERO).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.seconds > 0.0));
    }
}
