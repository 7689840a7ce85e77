//! Analytical cycle model for standard arrays and VUSA.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ArrayConfig;
use crate::error::{Error, Result};
use crate::mapper;
use crate::workload::GemmWorkload;

/// Cost of a single mapped tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileCost {
    pub window_width: usize,
    pub cycles: u64,
    pub mac_ops: u64,
}

/// Cycles of one weight-stationary tile: load one weight row per cycle,
/// stream `stream_len` inputs, then wait out the skew and drain.
pub fn tile_cycles(rows_used: usize, cols_used: usize, stream_len: usize) -> u64 {
    debug_assert!(rows_used > 0 && cols_used > 0 && stream_len > 0);
    (rows_used + stream_len + (rows_used - 1) + (cols_used - 1)) as u64
}

pub fn tile_cost(rows_used: usize, width: usize, stream_len: usize) -> TileCost {
    TileCost {
        window_width: width,
        cycles: tile_cycles(rows_used, width, stream_len),
        mac_ops: (rows_used * width * stream_len) as u64,
    }
}

/// How work is counted when splitting load across window widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Fraction of execution cycles.
    Cycles,
    /// Fraction of tiles (jobs).
    Jobs,
    /// Fraction of dense MAC operations, zeros included.
    MacOps,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthTally {
    pub jobs: u64,
    pub cycles: u64,
    pub mac_ops: u64,
}

/// Execution broken down by window width.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSplit {
    pub by_width: BTreeMap<usize, WidthTally>,
}

impl LoadSplit {
    pub fn record(&mut self, cost: TileCost) {
        let e = self.by_width.entry(cost.window_width).or_default();
        e.jobs += 1;
        e.cycles += cost.cycles;
        e.mac_ops += cost.mac_ops;
    }

    pub fn merge(&mut self, other: &LoadSplit) {
        for (w, t) in &other.by_width {
            let e = self.by_width.entry(*w).or_default();
            e.jobs += t.jobs;
            e.cycles += t.cycles;
            e.mac_ops += t.mac_ops;
        }
    }

    pub fn total(&self) -> WidthTally {
        self.by_width.values().fold(WidthTally::default(), |a, t| WidthTally {
            jobs: a.jobs + t.jobs,
            cycles: a.cycles + t.cycles,
            mac_ops: a.mac_ops + t.mac_ops,
        })
    }

    pub fn fractions(&self, weighting: Weighting) -> BTreeMap<usize, f64> {
        let pick = |t: &WidthTally| match weighting {
            Weighting::Cycles => t.cycles,
            Weighting::Jobs => t.jobs,
            Weighting::MacOps => t.mac_ops,
        };
        let total = pick(&self.total());
        self.by_width
            .iter()
            .map(|(w, t)| (*w, if total == 0 { 0.0 } else { pick(t) as f64 / total as f64 }))
            .collect()
    }

    pub fn fraction(&self, width: usize, weighting: Weighting) -> f64 {
        self.fractions(weighting).get(&width).copied().unwrap_or(0.0)
    }
}

fn standard_cycles(g: &GemmWorkload, rows: usize, cols: usize) -> u64 {
    let mut total = 0;
    for k0 in (0..g.k).step_by(rows) {
        let r = rows.min(g.k - k0);
        for c0 in (0..g.c).step_by(cols) {
            total += tile_cycles(r, cols.min(g.c - c0), g.t);
        }
    }
    total
}

/// Cycles of a standard `rows x cols` array over all GEMMs, folding each
/// one into `ceil(K / rows) * ceil(C / cols)` tiles.
pub fn run_standard(gemms: &[GemmWorkload], rows: usize, cols: usize) -> u64 {
    gemms.par_iter().map(|g| standard_cycles(g, rows, cols)).sum()
}

/// Cycles and load split of a single GEMM on a VUSA.
pub fn gemm_vusa(g: &GemmWorkload, cfg: &ArrayConfig) -> LoadSplit {
    let mut split = LoadSplit::default();
    for (rows, widths) in mapper::window_widths(&g.weights, cfg) {
        for w in widths {
            split.record(tile_cost(rows, w, g.t));
        }
    }
    split
}

/// Maps every GEMM with the window rule and sums tile cycles.
pub fn run_vusa(gemms: &[GemmWorkload], cfg: &ArrayConfig) -> (u64, LoadSplit) {
    let split = gemms
        .par_iter()
        .map(|g| gemm_vusa(g, cfg))
        .reduce(LoadSplit::default, |mut a, b| {
            a.merge(&b);
            a
        });
    (split.total().cycles, split)
}

/// Blends per-width full-model cycle counts by the fraction of load run at
/// each width.
pub fn blend_cycles(split: &BTreeMap<usize, f64>, per_width_cycles: &BTreeMap<usize, f64>) -> Result<f64> {
    let sum: f64 = split.values().sum();
    if (sum - 1.0).abs() > 1e-6 || split.values().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Domain(format!("load split fractions sum to {sum}")));
    }
    split
        .iter()
        .map(|(w, f)| {
            per_width_cycles
                .get(w)
                .map(|c| f * c)
                .ok_or_else(|| Error::Domain(format!("no cycle count for width {w}")))
        })
        .sum()
}
