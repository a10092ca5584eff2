//! Greedy forward feature selection: each round adds the feature whose
//! candidate set differs most, in conditional divergence to the target, from
//! copies with every column independently permuted.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, PairedDataset};
use crate::divergence::{
    joint_matrix, map_maybe_par, symmetric_conditional_divergence, symmetric_conditional_divergence_from_matrices,
    DivergenceSpec,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k: usize,
    pub useless_reps: usize,
    pub spec: DivergenceSpec,
    pub seed: u64,
}

impl SelectionConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            useless_reps: 10,
            spec: DivergenceSpec::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    /// Winning score of each round.
    pub scores: Vec<f64>,
}

/// Permutes the rows of each column independently; column `j` uses substream
/// `j` of `seed`.
pub fn make_useless(data: &DataMatrix, seed: u64) -> DataMatrix {
    let n = data.n_samples();
    let mut values = data.as_column_major().to_vec();
    for (j, col) in values.chunks_mut(n).enumerate() {
        col.shuffle(&mut stream_rng(seed, j as u64));
    }
    DataMatrix::from_column_major(n, data.n_vars(), values).expect("shape and values are unchanged")
}

fn candidate_score(data: &PairedDataset, cfg: &SelectionConfig, seed: u64) -> Result<f64> {
    let spec = cfg.spec.symmetric(true);
    let p = data.n_features();
    let original = if spec.shared_widths {
        None
    } else {
        Some(joint_matrix(data, &spec)?)
    };
    let mut total = 0.0;
    for b in 0..cfg.useless_reps {
        let useless = PairedDataset::new(make_useless(data.x(), derive_seed(seed, b as u64)), data.y().to_vec())?;
        total += match &original {
            Some(m) => symmetric_conditional_divergence_from_matrices(m, &joint_matrix(&useless, &spec)?, p, spec.kind)?,
            None => symmetric_conditional_divergence(data, &useless, &spec)?,
        };
    }
    Ok(total / cfg.useless_reps as f64)
}

/// Round `r` scores candidate `f` with useless draws seeded from
/// `derive_seed(derive_seed(seed, r), f)`. Ties go to the lowest index.
pub fn greedy_select(s: &DataMatrix, y: &[f64], cfg: &SelectionConfig) -> Result<SelectionResult> {
    let n_vars = s.n_vars();
    if cfg.k == 0 || cfg.k > n_vars {
        return Err(Error::InvalidConfig(format!(
            "k must lie in 1..={n_vars}, got {}",
            cfg.k
        )));
    }
    if cfg.useless_reps == 0 {
        return Err(Error::InvalidConfig("useless_reps must be at least 1".into()));
    }
    PairedDataset::new(s.select_columns(&[0])?, y.to_vec())?;

    let mut selected: Vec<usize> = Vec::with_capacity(cfg.k);
    let mut scores = Vec::with_capacity(cfg.k);
    for round in 0..cfg.k {
        let round_seed = derive_seed(cfg.seed, round as u64);
        let candidates: Vec<usize> = (0..n_vars).filter(|f| !selected.contains(f)).collect();
        let candidate_scores = map_maybe_par(&candidates, |&f| {
            let mut cols = selected.clone();
            cols.push(f);
            let data = PairedDataset::new(s.select_columns(&cols)?, y.to_vec())?;
            let score = candidate_score(&data, cfg, derive_seed(round_seed, f as u64))?;
            if !score.is_finite() {
                return Err(Error::InvalidData(format!("non-finite score for feature {f}")));
            }
            Ok(score)
        })?;
        let mut best = 0;
        for (i, &v) in candidate_scores.iter().enumerate() {
            if v > candidate_scores[best] {
                best = i;
            }
        }
        selected.push(candidates[best]);
        scores.push(candidate_scores[best]);
    }
    Ok(SelectionResult { selected, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn sorted(v: &[f64]) -> Vec<f64> {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn useless_copy_preserves_columns() {
        let mut rng = stream_rng(1, 0);
        let n = 2000;
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = y
            .iter()
            .map(|v| 0.9 * v + 0.19f64.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let data = DataMatrix::from_columns(&[x.clone(), vec![3.0; n]]).unwrap();
        let u = make_useless(&data, 5);
        assert_eq!(sorted(u.column(0)), sorted(&x));
        assert_eq!(u.column(1), data.column(1));
        assert!(pearson(&x, &y) > 0.85);
        assert!(pearson(u.column(0), &y).abs() <= 0.1);
        assert_eq!(u, make_useless(&data, 5));
    }

    #[test]
    fn exhaustive_selection_and_errors() {
        let mut rng = stream_rng(2, 0);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..60).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let y: Vec<f64> = cols[1].iter().map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let s = DataMatrix::from_columns(&cols).unwrap();
        let mut cfg = SelectionConfig::new(3, 7);
        cfg.useless_reps = 2;
        let r = greedy_select(&s, &y, &cfg).unwrap();
        assert_eq!(r.selected[0], 1);
        let mut all = r.selected.clone();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert_eq!(r.scores.len(), 3);
        assert!(r.scores.iter().all(|v| v.is_finite()));
        assert_eq!(r, greedy_select(&s, &y, &cfg).unwrap());

        cfg.k = 4;
        assert!(greedy_select(&s, &y, &cfg).is_err());
        cfg.k = 1;
        assert!(greedy_select(&s, &y[..10], &cfg).is_err());
    }
}
