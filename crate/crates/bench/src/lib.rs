//! Shared fixtures for the criterion benchmarks.

use vusa_core::workload::{generate_weights, Pattern};
use vusa_core::{Matrix, WeightMatrix};

pub fn sparse_weights(k: usize, c: usize, p0: f64) -> WeightMatrix {
    generate_weights(k, c, p0, Pattern::Iid, 0x5eed).expect("valid sparsity")
}

pub fn ramp_inputs(t: usize, k: usize) -> Matrix<i64> {
    Matrix::from_fn(t, k, |i, j| ((i * 31 + j * 7) % 255) as i64 - 127)
}
