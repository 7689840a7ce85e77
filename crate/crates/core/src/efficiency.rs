//! Throughput, normalized area/power efficiency, energy, and pruning sweeps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{standard_label, ArrayConfig};
use crate::error::{Error, Result};
use crate::timing::{self, LoadSplit, Weighting};
use crate::workload::{self, LayerSpec, Pattern};

const BUNDLED: &str = include_str!("../data/coefficients_16nm.csv");

/// Normalized silicon cost of one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub area_norm: f64,
    pub power_norm: f64,
}

/// Area and power of each design, normalized to a common unit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostCoefficients {
    pub designs: BTreeMap<String, Cost>,
}

#[derive(Deserialize)]
struct CostRow {
    design: String,
    area_norm: f64,
    power_norm: f64,
}

impl CostCoefficients {
    /// 16-nm synthesis results for the 3-row designs, normalized to the
    /// 3x6 VUSA.
    pub fn bundled() -> Self {
        Self::parse_csv(BUNDLED).expect("bundled coefficients parse")
    }

    /// Reads `design,area_norm,power_norm` rows.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut designs = BTreeMap::new();
        for (i, row) in rdr.deserialize::<CostRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            if !(row.area_norm > 0.0 && row.power_norm > 0.0) {
                return Err(Error::Parse {
                    line,
                    msg: format!("`{}` needs positive area and power", row.design),
                });
            }
            designs.insert(
                row.design,
                Cost {
                    area_norm: row.area_norm,
                    power_norm: row.power_norm,
                },
            );
        }
        Ok(Self { designs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text)
    }

    pub fn get(&self, design: &str) -> Result<Cost> {
        self.designs
            .get(design)
            .copied()
            .ok_or_else(|| Error::MissingCoefficient(design.to_string()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            designs: self
                .designs
                .iter()
                .map(|(k, c)| {
                    (
                        k.clone(),
                        Cost {
                            area_norm: c.area_norm * factor,
                            power_norm: c.power_norm * factor,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Dense-equivalent throughput in GOP/s, two operations per MAC.
pub fn throughput(dense_macs: u64, cycles: u64, clock_hz: f64) -> Result<f64> {
    if cycles == 0 {
        return Err(Error::ZeroCycles);
    }
    let time_s = cycles as f64 / clock_hz;
    Ok(2.0 * dense_macs as f64 / time_s / 1e9)
}

/// Performance and cost figures of one design on one workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub design_label: String,
    pub total_cycles: u64,
    pub time_s: f64,
    pub perf_gops: f64,
    pub perf_per_area_norm: Option<f64>,
    pub perf_per_power_norm: Option<f64>,
    pub energy_norm: Option<f64>,
    pub load_split: Option<LoadSplit>,
}

impl RunReport {
    pub fn new(design_label: impl Into<String>, total_cycles: u64, dense_macs: u64, clock_hz: f64) -> Result<Self> {
        Ok(Self {
            design_label: design_label.into(),
            total_cycles,
            time_s: total_cycles as f64 / clock_hz,
            perf_gops: throughput(dense_macs, total_cycles, clock_hz)?,
            perf_per_area_norm: None,
            perf_per_power_norm: None,
            energy_norm: None,
            load_split: None,
        })
    }

    /// A report from already measured time and throughput.
    pub fn from_measurement(design_label: impl Into<String>, total_cycles: u64, time_s: f64, perf_gops: f64) -> Self {
        Self {
            design_label: design_label.into(),
            total_cycles,
            time_s,
            perf_gops,
            perf_per_area_norm: None,
            perf_per_power_norm: None,
            energy_norm: None,
            load_split: None,
        }
    }

    pub fn with_load_split(mut self, split: LoadSplit) -> Self {
        self.load_split = Some(split);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub perf_per_area: f64,
    pub perf_per_power: f64,
    pub energy: f64,
}

/// Efficiency of `report` relative to `reference`.
pub fn normalize(report: &RunReport, coefficients: &CostCoefficients, reference: &RunReport) -> Result<Normalized> {
    let c = coefficients.get(&report.design_label)?;
    let r = coefficients.get(&reference.design_label)?;
    Ok(Normalized {
        perf_per_area: (report.perf_gops / c.area_norm) / (reference.perf_gops / r.area_norm),
        perf_per_power: (report.perf_gops / c.power_norm) / (reference.perf_gops / r.power_norm),
        energy: (c.power_norm * report.time_s) / (r.power_norm * reference.time_s),
    })
}

/// Fills the normalized fields of every report against the report labelled
/// `reference_label`.
pub fn normalize_all(reports: &mut [RunReport], coefficients: &CostCoefficients, reference_label: &str) -> Result<()> {
    let reference = reports
        .iter()
        .find(|r| r.design_label == reference_label)
        .cloned()
        .ok_or_else(|| Error::MissingCoefficient(reference_label.to_string()))?;
    for r in reports.iter_mut() {
        let n = normalize(r, coefficients, &reference)?;
        r.perf_per_area_norm = Some(n.perf_per_area);
        r.perf_per_power_norm = Some(n.perf_per_power);
        r.energy_norm = Some(n.energy);
    }
    Ok(())
}

/// One pruning rate of a sweep, VUSA against the standard `N x M` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sparsity: f64,
    pub vusa_cycles: u64,
    pub standard_cycles: u64,
    pub area_efficiency_ratio: f64,
    pub power_efficiency_ratio: f64,
    pub energy_ratio: f64,
    pub cycle_split: BTreeMap<usize, f64>,
}

/// Area and power efficiency of the VUSA versus the standard `N x M` array
/// over a range of i.i.d. pruning rates.
///
/// All points share the same seed, so every weight zeroed at one rate stays
/// zero at higher rates.
pub fn pruning_sweep(
    layers: &[LayerSpec],
    sparsity_grid: &[f64],
    cfg: &ArrayConfig,
    coefficients: &CostCoefficients,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let vusa = coefficients.get(&cfg.label())?;
    let std = coefficients.get(&standard_label(cfg.rows, cfg.virtual_cols))?;
    sparsity_grid
        .iter()
        .map(|&p0| {
            let gemms = workload::synthesize_model(layers, p0, Pattern::Iid, seed)?;
            let (vusa_cycles, split) = timing::run_vusa(&gemms, cfg);
            let standard_cycles = timing::run_standard(&gemms, cfg.rows, cfg.virtual_cols);
            if vusa_cycles == 0 {
                return Err(Error::ZeroCycles);
            }
            // Same dense work on both designs, so throughput scales with
            // inverse cycles.
            let speed = standard_cycles as f64 / vusa_cycles as f64;
            Ok(SweepPoint {
                sparsity: p0,
                vusa_cycles,
                standard_cycles,
                area_efficiency_ratio: speed * std.area_norm / vusa.area_norm,
                power_efficiency_ratio: speed * std.power_norm / vusa.power_norm,
                energy_ratio: vusa.power_norm * vusa_cycles as f64 / (std.power_norm * standard_cycles as f64),
                cycle_split: split.fractions(Weighting::Cycles),
            })
        })
        .collect()
}

/// First pruning rate where `ratio` reaches 1, linearly interpolated
/// between grid points.
pub fn crossover(points: &[SweepPoint], ratio: impl Fn(&SweepPoint) -> f64) -> Option<f64> {
    let first = points.first()?;
    if ratio(first) >= 1.0 {
        return Some(first.sparsity);
    }
    points.windows(2).find_map(|w| {
        let (a, b) = (ratio(&w[0]), ratio(&w[1]));
        (a < 1.0 && b >= 1.0).then(|| w[0].sparsity + (1.0 - a) / (b - a) * (w[1].sparsity - w[0].sparsity))
    })
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(
        "sparsity,vusa_cycles,standard_cycles,area_efficiency_ratio,power_efficiency_ratio,energy_ratio\n",
    );
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.sparsity, p.vusa_cycles, p.standard_cycles, p.area_efficiency_ratio, p.power_efficiency_ratio, p.energy_ratio
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        ((a - b) / b).abs() <= rel
    }

    #[test]
    fn bundled_table() {
        let t = CostCoefficients::bundled();
        assert_eq!(t.designs.len(), 5);
        assert_eq!(t.get("vusa-3x6").unwrap(), Cost { area_norm: 1.0, power_norm: 1.0 });
        assert_eq!(t.get("standard-3x4").unwrap(), Cost { area_norm: 0.91, power_norm: 1.15 });
        assert!(matches!(t.get("standard-4x4"), Err(Error::MissingCoefficient(_))));
    }

    #[test]
    fn coefficient_file_errors() {
        assert!(CostCoefficients::parse_csv("design,area_norm,power_norm\nx,0,1\n").is_err());
        assert!(CostCoefficients::parse_csv("design,area_norm,power_norm\nx,1\n").is_err());
    }

    #[test]
    fn throughput_matches_standard_3x6_row() {
        // 17.21 GOP/s over 89.81 ms at 1 GHz.
        let ops: f64 = 17.21e9 * 0.08981;
        let macs = (ops / 2.0).round() as u64;
        let gops = throughput(macs, 89_810_000, 1e9).unwrap();
        assert!(close(gops, 17.21, 1e-6));
        assert_eq!(throughput(0, 100, 1e9).unwrap(), 0.0);
        assert!(close(throughput(1000, 100, 2e9).unwrap(), 2.0 * throughput(1000, 100, 1e9).unwrap(), 1e-12));
        assert_eq!(throughput(10, 0, 1e9), Err(Error::ZeroCycles));
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let t = CostCoefficients::bundled();
        let a = RunReport::from_measurement("vusa-3x6", 0, 0.09646, 16.02);
        let b = RunReport::from_measurement("standard-3x6", 0, 0.08981, 17.21);
        let n1 = normalize(&a, &t, &b).unwrap();
        let n2 = normalize(&a, &t.scaled(3.7), &b).unwrap();
        assert!(close(n1.perf_per_area, n2.perf_per_area, 1e-12));
        assert!(close(n1.perf_per_power, n2.perf_per_power, 1e-12));
        assert!(close(n1.energy, n2.energy, 1e-12));
        let self_ref = normalize(&b, &t, &b).unwrap();
        assert_eq!(self_ref.energy, 1.0);
        assert_eq!(self_ref.perf_per_area, 1.0);
    }

    #[test]
    fn lower_power_means_lower_energy_at_equal_cycles() {
        let t = CostCoefficients::bundled();
        let reference = RunReport::new("standard-3x6", 1000, 5000, 1e9).unwrap();
        let low = normalize(&RunReport::new("standard-3x3", 1000, 5000, 1e9).unwrap(), &t, &reference).unwrap();
        let high = normalize(&RunReport::new("standard-3x5", 1000, 5000, 1e9).unwrap(), &t, &reference).unwrap();
        assert!(low.energy < high.energy);
    }

    #[test]
    fn normalize_all_fills_every_report() {
        let t = CostCoefficients::bundled();
        let mut reports = vec![
            RunReport::new("standard-3x6", 900, 5000, 1e9).unwrap(),
            RunReport::new("vusa-3x6", 1000, 5000, 1e9).unwrap(),
        ];
        normalize_all(&mut reports, &t, "standard-3x6").unwrap();
        assert_eq!(reports[0].energy_norm, Some(1.0));
        assert!(close(reports[1].perf_per_area_norm.unwrap(), 0.9 * 1.37, 1e-12));
        let mut missing = vec![RunReport::new("standard-4x4", 10, 10, 1e9).unwrap()];
        assert!(normalize_all(&mut missing, &t, "standard-4x4").is_err());
    }

    #[test]
    fn crossover_interpolates() {
        let pt = |s: f64, a: f64| SweepPoint {
            sparsity: s,
            vusa_cycles: 1,
            standard_cycles: 1,
            area_efficiency_ratio: a,
            power_efficiency_ratio: a,
            energy_ratio: 1.0,
            cycle_split: BTreeMap::new(),
        };
        let pts = vec![pt(0.0, 0.5), pt(0.5, 0.9), pt(1.0, 1.3)];
        let x = crossover(&pts, |p| p.area_efficiency_ratio).unwrap();
        assert!((x - 0.625).abs() < 1e-12);
        assert_eq!(crossover(&pts[..2], |p| p.area_efficiency_ratio), None);
    }
}
