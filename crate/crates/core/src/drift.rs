//! Concept-drift detection on labeled streams by testing two adjacent
//! sliding windows, and precision/recall/delay scoring of the detections.

use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, PairedDataset};
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::testing::{conditional_permutation_test, PermutationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSample {
    pub index: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window: usize,
    pub stride: usize,
    /// Minimum gap between consecutive events.
    pub cooldown: usize,
    pub test: PermutationConfig,
    pub spec: DivergenceSpec,
}

impl DetectorConfig {
    /// Stride 1 and a cooldown of one window.
    pub fn new(window: usize, test: PermutationConfig) -> Self {
        Self {
            window,
            stride: 1,
            cooldown: window,
            test,
            spec: DivergenceSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 4 {
            return Err(Error::InvalidConfig(format!("window must be at least 4, got {}", self.window)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        self.test.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub detected_at: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub precision: f64,
    pub recall: f64,
    /// `NaN` (JSON `null`) when nothing matched.
    pub mean_delay: f64,
    pub events: Vec<DriftEvent>,
}

fn check_stream(samples: &[StreamSample]) -> Result<usize> {
    let p = samples.first().map_or(0, |s| s.x.len());
    if p == 0 {
        return Err(Error::InvalidData("stream samples need at least one feature".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.x.len() != p {
            return Err(Error::DimMismatch { expected: p, found: s.x.len() });
        }
        if i > 0 && s.index <= samples[i - 1].index {
            return Err(Error::InvalidData(format!(
                "stream indices must increase strictly (position {i}: {} after {})",
                s.index,
                samples[i - 1].index
            )));
        }
    }
    Ok(p)
}

fn window_dataset(samples: &[StreamSample]) -> Result<PairedDataset> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
    let y = samples.iter().map(|s| s.y).collect();
    PairedDataset::new(DataMatrix::from_rows(&rows)?, y)
}

/// Tests windows `[t-2W+1, t-W]` against `[t-W+1, t]` at positions
/// `t = 2W-1, 2W-1+stride, ...`; the test at `t` uses seed
/// `derive_seed(cfg.test.seed, t)`. After an event at `t`, positions before
/// `t + cooldown` are skipped.
pub fn detect_stream(samples: &[StreamSample], cfg: &DetectorConfig) -> Result<Vec<DriftEvent>> {
    cfg.validate()?;
    let w = cfg.window;
    if samples.len() < 2 * w {
        return Err(Error::StreamTooShort {
            len: samples.len(),
            needed: 2 * w,
        });
    }
    check_stream(samples)?;
    let mut events = Vec::new();
    let mut next_allowed = 0;
    let mut t = 2 * w - 1;
    while t < samples.len() {
        if t >= next_allowed {
            let s1 = window_dataset(&samples[t + 1 - 2 * w..t + 1 - w])?;
            let s2 = window_dataset(&samples[t + 1 - w..=t])?;
            let test = PermutationConfig {
                seed: derive_seed(cfg.test.seed, t as u64),
                ..cfg.test
            };
            let result = conditional_permutation_test(&s1, &s2, &cfg.spec, &test)?;
            if !result.h0_retained {
                events.push(DriftEvent {
                    detected_at: samples[t].index,
                    p_value: result.p_value,
                });
                next_allowed = t + cfg.cooldown.max(1);
            }
        }
        t += cfg.stride;
    }
    Ok(events)
}

/// Greedy one-to-one matching: in order of detection, each event takes the
/// nearest unmatched truth `d` with `d <= detected_at <= d + tolerance`.
/// With no events precision is 1; with no truths recall is 1.
pub fn evaluate_detections(events: &[DriftEvent], truth: &[usize], tolerance: usize) -> StreamReport {
    let mut sorted = events.to_vec();
    sorted.sort_by_key(|e| e.detected_at);
    let mut used = vec![false; truth.len()];
    let mut delays = Vec::new();
    for e in &sorted {
        let best = truth
            .iter()
            .enumerate()
            .filter(|&(i, &d)| !used[i] && d <= e.detected_at && e.detected_at - d <= tolerance)
            .min_by_key(|&(_, &d)| e.detected_at - d);
        if let Some((i, &d)) = best {
            used[i] = true;
            delays.push((e.detected_at - d) as f64);
        }
    }
    let matched = delays.len() as f64;
    StreamReport {
        precision: if sorted.is_empty() { 1.0 } else { matched / sorted.len() as f64 },
        recall: if truth.is_empty() { 1.0 } else { matched / truth.len() as f64 },
        mean_delay: if delays.is_empty() {
            f64::NAN
        } else {
            delays.iter().sum::<f64>() / matched
        },
        events: sorted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{model_stream, Model};

    fn ev(t: usize) -> DriftEvent {
        DriftEvent { detected_at: t, p_value: 0.01 }
    }

    #[test]
    fn metrics_edge_cases() {
        let r = evaluate_detections(&[ev(1000), ev(3000)], &[1000, 3000], 10);
        assert_eq!((r.precision, r.recall, r.mean_delay), (1.0, 1.0, 0.0));

        let r = evaluate_detections(&[ev(1040)], &[1000], 500);
        assert_eq!((r.precision, r.recall, r.mean_delay), (1.0, 1.0, 40.0));

        let r = evaluate_detections(&[], &[1000], 500);
        assert_eq!((r.precision, r.recall), (1.0, 0.0));
        assert!(r.mean_delay.is_nan());
        assert_eq!(serde_json::to_value(&r).unwrap()["mean_delay"], serde_json::Value::Null);

        // early events earn no credit; one truth matches one event
        let r = evaluate_detections(&[ev(990), ev(1010), ev(1020)], &[1000], 500);
        assert_eq!(r.recall, 1.0);
        assert!((r.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.mean_delay, 10.0);

        // nearest preceding truth wins
        let r = evaluate_detections(&[ev(1100)], &[500, 1000], 1000);
        assert_eq!((r.recall, r.mean_delay), (0.5, 100.0));
    }

    #[test]
    fn short_stream_and_bad_config() {
        let s = model_stream(&[(Model::A, 15)], 2, 1).unwrap();
        let cfg = DetectorConfig::new(8, PermutationConfig::desk(0));
        assert!(matches!(detect_stream(&s, &cfg), Err(Error::StreamTooShort { len: 15, needed: 16 })));
        let bad = DetectorConfig::new(3, PermutationConfig::desk(0));
        assert!(detect_stream(&s, &bad).is_err());
        let mut unordered = model_stream(&[(Model::A, 20)], 2, 1).unwrap();
        unordered.swap(3, 4);
        assert!(detect_stream(&unordered, &cfg).is_err());
    }

    #[test]
    fn events_respect_start_and_cooldown() {
        let s = model_stream(&[(Model::A, 200), (Model::C, 200), (Model::A, 200)], 2, 4).unwrap();
        let mut cfg = DetectorConfig::new(50, PermutationConfig::desk(2));
        cfg.stride = 10;
        cfg.test.permutations = 50;
        let events = detect_stream(&s, &cfg).unwrap();
        assert!(!events.is_empty());
        assert!(events.iter().all(|e| e.detected_at >= 99));
        assert!(events.windows(2).all(|w| w[1].detected_at - w[0].detected_at >= 50));
        assert_eq!(events, detect_stream(&s, &cfg).unwrap());
    }
}
