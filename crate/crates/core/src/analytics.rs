//! Closed-form virtual-growth probability under i.i.d. weight sparsity,
//! plus a seeded Monte-Carlo estimator used to cross-check it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ArrayConfig;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name}={p} is not a probability")))
    }
}

fn check_width(cfg: &ArrayConfig, target_cols: usize) -> Result<()> {
    if target_cols < cfg.macs_per_row || target_cols > cfg.virtual_cols {
        return Err(Error::Domain(format!(
            "target width {target_cols} outside [{}, {}]",
            cfg.macs_per_row, cfg.virtual_cols
        )));
    }
    Ok(())
}

/// `C(n, k)` by the multiplicative formula, pairing each numerator factor
/// with a denominator factor so intermediates stay small.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (1..=k).fold(1.0, |acc, i| acc * (n - k + i) as f64 / i as f64)
}

/// Probability of exactly `i` nonzeros among `m` weights.
pub fn p_i_ones(i: usize, m: usize, p1: f64) -> Result<f64> {
    check_prob("P1", p1)?;
    if i > m {
        return Err(Error::Domain(format!("i={i} exceeds M={m}")));
    }
    Ok(binomial(m, i) * p1.powi(i as i32) * (1.0 - p1).powi((m - i) as i32))
}

/// Probability that a row segment of `width` weights has at most `macs`
/// nonzeros.
pub fn p_gain_row(width: usize, macs: usize, p1: f64) -> Result<f64> {
    check_prob("P1", p1)?;
    if macs > width {
        return Err(Error::Domain(format!("A={macs} exceeds width {width}")));
    }
    if macs == width {
        return Ok(1.0);
    }
    let mut sum = 0.0;
    for i in 0..=macs {
        sum += p_i_ones(i, width, p1)?;
    }
    Ok(sum.min(1.0))
}

/// Probability that every one of the `N` rows fits an `N x target_cols`
/// window.
pub fn p_grow(cfg: &ArrayConfig, target_cols: usize, p1: f64) -> Result<f64> {
    check_width(cfg, target_cols)?;
    Ok(p_gain_row(target_cols, cfg.macs_per_row, p1)?.powi(cfg.rows as i32))
}

const MC_CHUNK: u64 = 4096;

/// Fraction of sampled Bernoulli(`p1`) masks of shape `N x target_cols`
/// whose rows all hold at most `A` ones. Trials run in fixed chunks with
/// their own derived seeds, so the result does not depend on thread count.
pub fn monte_carlo_growth(cfg: &ArrayConfig, target_cols: usize, p1: f64, trials: u64, seed: u64) -> Result<f64> {
    check_width(cfg, target_cols)?;
    check_prob("P1", p1)?;
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    let chunks = trials.div_ceil(MC_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, chunk));
            let n = MC_CHUNK.min(trials - chunk * MC_CHUNK);
            (0..n)
                .filter(|_| {
                    // Draw the full mask so every trial consumes the same
                    // amount of randomness.
                    let mut ok = true;
                    for _ in 0..cfg.rows {
                        let ones = (0..target_cols).filter(|_| rng.random::<f64>() < p1).count();
                        ok &= ones <= cfg.macs_per_row;
                    }
                    ok
                })
                .count() as u64
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sparsity: f64,
    pub target_cols: usize,
    pub probability: f64,
}

/// Growth probabilities over a sparsity grid for every width in `[A, M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    pub config: ArrayConfig,
    pub points: Vec<CurvePoint>,
}

impl GrowthCurve {
    pub fn series(&self, target_cols: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.target_cols == target_cols)
            .map(|p| (p.sparsity, p.probability))
            .collect()
    }

    /// CSV with columns `sparsity,M_prime,probability`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sparsity,M_prime,probability\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.sparsity, p.target_cols, p.probability));
        }
        out
    }
}

pub fn sweep_curve(cfg: &ArrayConfig, sparsity_grid: &[f64]) -> Result<GrowthCurve> {
    let mut points = Vec::with_capacity(sparsity_grid.len() * (cfg.virtual_cols - cfg.macs_per_row + 1));
    for &p0 in sparsity_grid {
        check_prob("P0", p0)?;
        for target_cols in cfg.macs_per_row..=cfg.virtual_cols {
            points.push(CurvePoint {
                sparsity: p0,
                target_cols,
                probability: p_grow(cfg, target_cols, 1.0 - p0)?,
            });
        }
    }
    Ok(GrowthCurve { config: *cfg, points })
}

/// `0, step, 2*step, ..., 1` with the endpoint included.
pub fn uniform_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| (i as f64 / n as f64 * 1e12).round() / 1e12).collect()
}
