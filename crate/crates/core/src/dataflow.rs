//! Cycle-stepped weight-stationary simulation of a VUSA tile.
//!
//! Every grid position is an SPE holding an input register (forwarded to
//! the right) and an accumulator register (forwarded down). A physical MAC
//! is attached only where the stationary weight is nonzero; elsewhere the
//! SPE passes the accumulator through unchanged.
//!
//! Row `r` sees its input stream delayed by `r` cycles and column `j` its
//! partial sums delayed by `j` cycles, so output `(t, j)` leaves the bottom
//! of column `j` on stream cycle `t + j + rows - 1`.

use serde::{Deserialize, Serialize};

use crate::config::ArrayConfig;
use crate::error::{Error, Result};
use crate::mapper::{self, WindowAssignment};
use crate::matrix::{Matrix, WeightMatrix};

/// A MAC unit attached to an SPE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachedMac {
    pub unit: usize,
    pub weight: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    rows: usize,
    width: usize,
    input_reg: Vec<i64>,
    acc_reg: Vec<i64>,
    mac_attach: Vec<Option<AttachedMac>>,
}

/// Values leaving the grid after one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutput {
    pub bottom: Vec<i64>,
    pub right: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileRun {
    pub outputs: Matrix<i64>,
    /// Weight load plus streaming until the last partial sum drains.
    pub cycles: u64,
}

impl GridState {
    /// Grid with no MACs attached and cleared registers.
    pub fn empty(rows: usize, width: usize) -> Self {
        Self {
            rows,
            width,
            input_reg: vec![0; rows * width],
            acc_reg: vec![0; rows * width],
            mac_attach: vec![None; rows * width],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mac_at(&self, row: usize, col: usize) -> Option<AttachedMac> {
        self.mac_attach[row * self.width + col]
    }

    pub fn attached_count(&self, row: usize) -> usize {
        (0..self.width).filter(|&c| self.mac_at(row, c).is_some()).count()
    }

    /// Cycles spent loading weights: one row per cycle.
    pub fn load_cycles(&self) -> u64 {
        self.rows as u64
    }

    /// Advances the grid by one clock cycle.
    pub fn step(&mut self, left_inputs: &[i64], top_accums: &[i64]) -> StepOutput {
        assert_eq!(left_inputs.len(), self.rows, "one input per row");
        assert_eq!(top_accums.len(), self.width, "one partial sum per column");
        let w = self.width;
        // Inputs shift right: walk columns from the right so each register
        // reads its left neighbour's previous value.
        for (r, &x) in left_inputs.iter().enumerate() {
            for c in (1..w).rev() {
                self.input_reg[r * w + c] = self.input_reg[r * w + c - 1];
            }
            self.input_reg[r * w] = x;
        }
        // Accumulators shift down, bottom row first.
        for r in (0..self.rows).rev() {
            for (c, &top) in top_accums.iter().enumerate() {
                let incoming = if r == 0 { top } else { self.acc_reg[(r - 1) * w + c] };
                let idx = r * w + c;
                self.acc_reg[idx] = match self.mac_attach[idx] {
                    Some(mac) => incoming + mac.weight * self.input_reg[idx],
                    None => incoming,
                };
            }
        }
        StepOutput {
            bottom: self.acc_reg[(self.rows - 1) * w..].to_vec(),
            right: (0..self.rows).map(|r| self.input_reg[r * w + w - 1]).collect(),
        }
    }
}

/// Attaches a MAC at every assigned position with its weight.
pub fn load_weights(assignment: &WindowAssignment, weights: &WeightMatrix) -> Result<GridState> {
    assignment
        .check(weights)
        .map_err(|v| Error::AssignmentMismatch(v.to_string()))?;
    let t = &assignment.tile;
    let mut state = GridState::empty(t.rows, t.width);
    for (r, row) in assignment.rows.iter().enumerate() {
        for p in &row.pairs {
            let weight = weights.get(t.row_start + r, t.col_start + p.spe_col);
            state.mac_attach[r * t.width + p.spe_col] = Some(AttachedMac {
                unit: p.mac,
                weight: i64::from(weight),
            });
        }
    }
    Ok(state)
}

/// Streams `inputs` (`T x rows`) through one loaded tile, seeding column
/// `j` with `partial_in[.., j]`. Returns `partial_in + inputs * window`.
pub fn simulate_tile(
    assignment: &WindowAssignment,
    weights: &WeightMatrix,
    inputs: &Matrix<i64>,
    partial_in: &Matrix<i64>,
) -> Result<TileRun> {
    let mut state = load_weights(assignment, weights)?;
    run_loaded(&mut state, inputs, partial_in)
}

/// Streams inputs through an already loaded grid.
pub fn run_loaded(state: &mut GridState, inputs: &Matrix<i64>, partial_in: &Matrix<i64>) -> Result<TileRun> {
    let (rows, width) = (state.rows, state.width);
    let stream = inputs.rows();
    if inputs.cols() != rows {
        return Err(Error::DimensionMismatch(format!(
            "input stream has {} lanes, tile has {rows} rows",
            inputs.cols()
        )));
    }
    if partial_in.rows() != stream || partial_in.cols() != width {
        return Err(Error::DimensionMismatch(format!(
            "partial sums are {}x{}, expected {stream}x{width}",
            partial_in.rows(),
            partial_in.cols()
        )));
    }
    if stream == 0 {
        return Err(Error::DimensionMismatch("empty input stream".into()));
    }

    let mut outputs = Matrix::zeros(stream, width);
    let mut remaining = stream * width;
    let mut cycles = state.load_cycles();
    let mut left = vec![0i64; rows];
    let mut top = vec![0i64; width];
    let mut cycle = 0usize;
    while remaining > 0 {
        for (r, lane) in left.iter_mut().enumerate() {
            *lane = cycle
                .checked_sub(r)
                .filter(|&t| t < stream)
                .map_or(0, |t| inputs.get(t, r));
        }
        for (j, acc) in top.iter_mut().enumerate() {
            *acc = cycle
                .checked_sub(j)
                .filter(|&t| t < stream)
                .map_or(0, |t| partial_in.get(t, j));
        }
        let out = state.step(&left, &top);
        cycles += 1;
        for (j, &v) in out.bottom.iter().enumerate() {
            if let Some(t) = cycle.checked_sub(j + rows - 1).filter(|&t| t < stream) {
                outputs.set(t, j, v);
                remaining -= 1;
            }
        }
        cycle += 1;
    }
    Ok(TileRun { outputs, cycles })
}

/// Whole-GEMM result on an array.
#[derive(Debug, Clone, PartialEq)]
pub struct GemmRun {
    pub outputs: Matrix<i64>,
    pub cycles: u64,
    pub tiles: usize,
}

/// Runs `inputs (T x K) * weights (K x C)` tile by tile, chaining partial
/// sums down each output column across row bands.
pub fn simulate_gemm(inputs: &Matrix<i64>, weights: &WeightMatrix, cfg: &ArrayConfig) -> Result<GemmRun> {
    let assignments = mapper::partition(weights, cfg)?;
    simulate_assignments(inputs, weights, &assignments)
}

/// Like [`simulate_gemm`] but with a caller-provided mapping.
pub fn simulate_assignments(
    inputs: &Matrix<i64>,
    weights: &WeightMatrix,
    assignments: &[WindowAssignment],
) -> Result<GemmRun> {
    if inputs.cols() != weights.rows() {
        return Err(Error::DimensionMismatch(format!(
            "inputs have {} columns, weights {} rows",
            inputs.cols(),
            weights.rows()
        )));
    }
    let stream = inputs.rows();
    let mut outputs = Matrix::<i64>::zeros(stream, weights.cols());
    let mut cycles = 0;
    for a in assignments {
        let t = &a.tile;
        let lanes = inputs.block(0, t.row_start, stream, t.rows);
        let partial = outputs.block(0, t.col_start, stream, t.width);
        let run = simulate_tile(a, weights, &lanes, &partial)?;
        outputs.write_block(0, t.col_start, &run.outputs);
        cycles += run.cycles;
    }
    Ok(GemmRun {
        outputs,
        cycles,
        tiles: assignments.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::dense_matmul;

    fn vusa() -> ArrayConfig {
        ArrayConfig::new(3, 6, 3).unwrap()
    }

    #[test]
    fn zero_tile_attaches_nothing() {
        let w = WeightMatrix::zeros(3, 6);
        let a = &mapper::partition(&w, &vusa()).unwrap()[0];
        let s = load_weights(a, &w).unwrap();
        assert!((0..3).all(|r| s.attached_count(r) == 0));
    }

    #[test]
    fn sparse_rows_get_macs_at_nonzero_columns() {
        let w = WeightMatrix::from_fn(3, 6, |_, c| if [0, 3, 5].contains(&c) { 7 } else { 0 });
        let a = &mapper::partition(&w, &vusa()).unwrap()[0];
        let s = load_weights(a, &w).unwrap();
        for r in 0..3 {
            let cols: Vec<_> = (0..6).filter(|&c| s.mac_at(r, c).is_some()).collect();
            assert_eq!(cols, vec![0, 3, 5]);
            assert_eq!(s.mac_at(r, 3).unwrap().unit, 1);
        }
    }

    #[test]
    fn dense_narrow_tile_attaches_in_order() {
        let w = WeightMatrix::from_fn(3, 3, |r, c| (r + c + 1) as i32);
        let a = &mapper::partition(&w, &vusa()).unwrap()[0];
        let s = load_weights(a, &w).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(s.mac_at(r, c).unwrap().unit, c);
            }
        }
    }

    #[test]
    fn mismatched_assignment_is_rejected() {
        let w = WeightMatrix::from_fn(3, 6, |_, c| i32::from(c == 2));
        let mut a = mapper::partition(&w, &vusa()).unwrap().remove(0);
        a.rows[1].pairs[0].spe_col = 1;
        assert!(matches!(load_weights(&a, &w), Err(Error::AssignmentMismatch(_))));
    }

    #[test]
    fn pass_through_grid_delays_partial_sums() {
        let mut s = GridState::empty(2, 3);
        let mut seen = Vec::new();
        for cycle in 0..4 {
            let top = vec![10 + cycle, 20 + cycle, 30 + cycle];
            seen.push(s.step(&[5, 6], &top).bottom);
        }
        // Two rows deep: cycle c reports what entered at c - 1.
        assert_eq!(seen[1], vec![10, 20, 30]);
        assert_eq!(seen[3], vec![12, 22, 32]);
    }

    #[test]
    fn single_mac_hand_trace() {
        let mut s = GridState::empty(1, 1);
        s.mac_attach[0] = Some(AttachedMac { unit: 0, weight: 2 });
        let out = s.step(&[3], &[5]);
        assert_eq!(out.bottom, vec![11]);
        assert_eq!(out.right, vec![3]);
    }

    #[test]
    fn dense_2x2_matches_matmul() {
        let cfg = ArrayConfig::standard(2, 2).unwrap();
        let w = WeightMatrix::from_rows(&[vec![3, -1], vec![2, 4]]).unwrap();
        let x = Matrix::from_rows(&[vec![1i64, 2], vec![-3, 5], vec![7, 0]]).unwrap();
        let run = simulate_gemm(&x, &w, &cfg).unwrap();
        assert_eq!(run.outputs, dense_matmul(&x, &w.to_wide()).unwrap());
    }

    #[test]
    fn zero_window_returns_partial_sums() {
        let w = WeightMatrix::zeros(3, 6);
        let a = &mapper::partition(&w, &vusa()).unwrap()[0];
        let x = Matrix::from_fn(5, 3, |t, r| (t * 3 + r) as i64);
        let partial = Matrix::from_fn(5, 6, |t, c| (t * 10 + c) as i64 - 20);
        let run = simulate_tile(a, &w, &x, &partial).unwrap();
        assert_eq!(run.outputs, partial);
        assert_eq!(run.cycles, 3 + 5 + 2 + 5);
    }

    #[test]
    fn permutation_window_routes_inputs() {
        // Row r holds a single 1 at column 2r.
        let w = WeightMatrix::from_fn(3, 6, |r, c| i32::from(c == 2 * r));
        let a = &mapper::partition(&w, &vusa()).unwrap()[0];
        let x = Matrix::from_fn(4, 3, |t, r| (t as i64 + 1) * 100 + r as i64);
        let partial = Matrix::from_fn(4, 6, |t, c| (t + c) as i64);
        let run = simulate_tile(a, &w, &x, &partial).unwrap();
        for t in 0..4 {
            for c in 0..6 {
                let routed = if c % 2 == 0 { x.get(t, c / 2) } else { 0 };
                assert_eq!(run.outputs.get(t, c), partial.get(t, c) + routed);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let w = WeightMatrix::zeros(3, 6);
        let a = &mapper::partition(&w, &vusa()).unwrap()[0];
        let x = Matrix::<i64>::zeros(4, 2);
        assert!(simulate_tile(a, &w, &x, &Matrix::zeros(4, 6)).is_err());
        let x = Matrix::<i64>::zeros(4, 3);
        assert!(simulate_tile(a, &w, &x, &Matrix::zeros(3, 6)).is_err());
    }
}
