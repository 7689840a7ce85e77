use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CLOCK_HZ: f64 = 1e9;

/// Shape of a (possibly virtually upscaled) systolic array.
///
/// `rows` x `virtual_cols` SPEs with `macs_per_row` physical MAC units in
/// each row. `macs_per_row == virtual_cols` is an ordinary systolic array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: usize,
    pub virtual_cols: usize,
    pub macs_per_row: usize,
    pub clock_hz: f64,
}

impl ArrayConfig {
    /// Builds and validates a configuration at the default 1 GHz clock.
    pub fn new(rows: usize, virtual_cols: usize, macs_per_row: usize) -> Result<Self> {
        let cfg = Self {
            rows,
            virtual_cols,
            macs_per_row,
            clock_hz: DEFAULT_CLOCK_HZ,
        };
        validate_config(&cfg)?;
        Ok(cfg)
    }

    /// A standard `rows x cols` array.
    pub fn standard(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, cols)
    }

    pub fn with_clock(mut self, clock_hz: f64) -> Result<Self> {
        self.clock_hz = clock_hz;
        validate_config(&self)?;
        Ok(self)
    }

    pub fn is_standard(&self) -> bool {
        self.macs_per_row == self.virtual_cols
    }

    /// How far a MAC may be shifted to the right of its home SPE.
    pub fn max_shift(&self) -> usize {
        self.virtual_cols - self.macs_per_row
    }

    pub fn total_macs(&self) -> usize {
        self.rows * self.macs_per_row
    }

    /// Label used to look up cost coefficients, e.g. `vusa-3x6` or `standard-3x4`.
    pub fn label(&self) -> String {
        if self.is_standard() {
            standard_label(self.rows, self.virtual_cols)
        } else {
            vusa_label(self.rows, self.virtual_cols)
        }
    }
}

impl fmt::Display for ArrayConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(N={}, M={}, A={})", self.rows, self.virtual_cols, self.macs_per_row)
    }
}

pub fn standard_label(rows: usize, cols: usize) -> String {
    format!("standard-{rows}x{cols}")
}

pub fn vusa_label(rows: usize, cols: usize) -> String {
    format!("vusa-{rows}x{cols}")
}

pub fn validate_config(cfg: &ArrayConfig) -> Result<()> {
    if cfg.rows == 0 || cfg.virtual_cols == 0 || cfg.macs_per_row == 0 {
        return Err(Error::InvalidConfig(format!("zero dimension in {cfg}")));
    }
    if cfg.macs_per_row > cfg.virtual_cols {
        return Err(Error::InvalidConfig(format!(
            "A={} exceeds M={}",
            cfg.macs_per_row, cfg.virtual_cols
        )));
    }
    if !(cfg.clock_hz.is_finite() && cfg.clock_hz > 0.0) {
        return Err(Error::InvalidConfig(format!("clock must be positive, got {}", cfg.clock_hz)));
    }
    Ok(())
}
