pub mod baselines;
pub mod bench;
pub mod data;
pub mod divergence;
pub mod drift;
pub mod error;
pub mod io;
pub mod kernel;
pub mod rng;
pub mod selection;
pub mod spsd;
pub mod synth;
pub mod testing;

pub use data::{DataMatrix, PairedDataset};
pub use error::{Error, Result};
pub use kernel::{BandwidthRule, KernelConfig, MatrixKind};
pub use spsd::{DivergenceKind, SpsdMatrix};
pub use divergence::DivergenceSpec;
pub use testing::{PermutationConfig, TestResult};
