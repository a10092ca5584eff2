//! Writes the linear-system fixture files under `testdata/`: two samples of
//! `y = x1 - x2 + 0.5 x3` with different input covariances.

use std::path::Path;

use condiv::data::{DataMatrix, PairedDataset};
use condiv::io::write_paired;
use condiv::rng::stream_rng;
use rand::Rng;
use rand_distr::StandardNormal;

const N: usize = 5000;
const W: [f64; 3] = [1.0, -1.0, 0.5];

fn sample(mix: [[f64; 3]; 3], seed: u64) -> PairedDataset {
    let mut rng = stream_rng(seed, 0);
    let mut rows = Vec::with_capacity(N);
    for _ in 0..N {
        let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        rows.push((0..3).map(|i| (0..3).map(|j| mix[i][j] * z[j]).sum()).collect::<Vec<f64>>());
    }
    let y = rows.iter().map(|r| r.iter().zip(W).map(|(a, b)| a * b).sum()).collect();
    PairedDataset::new(DataMatrix::from_rows(&rows).unwrap(), y).unwrap()
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    let names: Vec<String> = (1..=3).map(|j| format!("x{j}")).collect();
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mixed = [[2.0, 0.0, 0.0], [0.8, 0.6, 0.0], [-0.5, 0.3, 1.5]];
    for (name, mix, seed) in [("linear1.csv", identity, 1), ("linear2.csv", mixed, 2)] {
        let file = std::fs::File::create(dir.join(name)).unwrap();
        write_paired(file, &names, "y", &sample(mix, seed)).unwrap();
    }
}
