//! The `analyze`, `simulate` and `sweep` subcommands.

use serde::Serialize;
use vusa_core::analytics::sweep_curve;
use vusa_core::efficiency::{crossover, normalize, pruning_sweep, sweep_to_csv};
use vusa_core::workload::{load_weights_file, lower_to_gemm, read_topology, sparsity_stats, synthesize_model};
use vusa_core::{timing, GemmWorkload, LayerSpec, RunReport, Weighting};

use crate::config::{Design, RunConfig, WeightSource};
use crate::output::{emit, percent_map, rows_to_csv, width_map};
use crate::{file_failure, Failure};

fn load_layers(cfg: &RunConfig) -> Result<Vec<LayerSpec>, Failure> {
    let path = cfg
        .topology
        .as_ref()
        .ok_or_else(|| Failure::Invalid("no topology; pass --topology PATH".into()))?;
    read_topology(path).map_err(|e| file_failure(path, e))
}

/// Lowers every layer and attaches its weights from the configured source.
pub fn load_model(cfg: &RunConfig) -> Result<Vec<GemmWorkload>, Failure> {
    let layers = load_layers(cfg)?;
    match &cfg.source {
        None => Err(Failure::Invalid(
            "no weight source; pass --sparsity P0 or --weights DIR".into(),
        )),
        Some(WeightSource::Synthetic { sparsity, pattern }) => {
            Ok(synthesize_model(&layers, *sparsity, *pattern, cfg.seed)?)
        }
        Some(WeightSource::Files(dir)) => layers
            .iter()
            .map(|l| {
                let dims = lower_to_gemm(l)?;
                let path = dir.join(format!("{}.smx", l.name));
                let w = load_weights_file(&path)
                    .map_err(|e| Failure::Runtime(format!("layer `{}`: {}", l.name, file_failure(&path, e))))?;
                if (w.rows(), w.cols()) != (dims.k, dims.c) {
                    return Err(Failure::Runtime(format!(
                        "layer `{}`: {} holds {}x{} weights, topology needs {}x{}",
                        l.name,
                        path.display(),
                        w.rows(),
                        w.cols(),
                        dims.k,
                        dims.c
                    )));
                }
                Ok(GemmWorkload::new(&l.name, dims.t, w))
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct LayerRow {
    layer: String,
    k: usize,
    c: usize,
    t: usize,
    zeros: u64,
    total: u64,
    zero_fraction: f64,
    window_jobs: String,
    segment_nonzero_hist: String,
}

pub fn analyze(cfg: &RunConfig) -> Result<(), Failure> {
    let gemms = load_model(cfg)?;
    let stats = sparsity_stats(&gemms, &cfg.array);

    let rows: Vec<LayerRow> = gemms
        .iter()
        .zip(&stats.layers)
        .map(|(g, s)| LayerRow {
            layer: s.name.clone(),
            k: g.k,
            c: g.c,
            t: g.t,
            zeros: s.zeros,
            total: s.total,
            zero_fraction: s.zero_fraction,
            window_jobs: width_map(&s.windows.by_width.iter().map(|(w, t)| (*w, t.jobs)).collect()),
            segment_nonzero_hist: width_map(&s.segment_nonzero_hist),
        })
        .collect();

    println!("array {}", cfg.array);
    println!("{:<16} {:>7} {:>7} {:>7} {:>8}  windows (jobs)", "layer", "K", "C", "T", "zeros");
    for r in &rows {
        println!(
            "{:<16} {:>7} {:>7} {:>7} {:>7.2}%  {}",
            r.layer,
            r.k,
            r.c,
            r.t,
            100.0 * r.zero_fraction,
            r.window_jobs
        );
    }
    let all = stats.windows();
    println!("total zeros {:.2}%", 100.0 * stats.zero_fraction());
    println!("load split (cycles): {}", percent_map(&all.fractions(Weighting::Cycles)));

    emit(cfg, "sparsity", &rows_to_csv(&rows)?, &stats)
}

#[derive(Serialize)]
struct ReportRow<'a> {
    design_label: &'a str,
    total_cycles: u64,
    time_s: f64,
    perf_gops: f64,
    perf_per_area_norm: Option<f64>,
    perf_per_power_norm: Option<f64>,
    energy_norm: Option<f64>,
    load_split_cycles: String,
    load_split_jobs: String,
    load_split_mac_ops: String,
}

impl<'a> From<&'a RunReport> for ReportRow<'a> {
    fn from(r: &'a RunReport) -> Self {
        let split = |w| r.load_split.as_ref().map(|s| width_map(&s.fractions(w))).unwrap_or_default();
        Self {
            design_label: &r.design_label,
            total_cycles: r.total_cycles,
            time_s: r.time_s,
            perf_gops: r.perf_gops,
            perf_per_area_norm: r.perf_per_area_norm,
            perf_per_power_norm: r.perf_per_power_norm,
            energy_norm: r.energy_norm,
            load_split_cycles: split(Weighting::Cycles),
            load_split_jobs: split(Weighting::Jobs),
            load_split_mac_ops: split(Weighting::MacOps),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

pub fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let gemms = load_model(cfg)?;
    let dense_macs: u64 = gemms.iter().map(GemmWorkload::dense_macs).sum();
    let clock = cfg.array.clock_hz;

    let report_for = |d: &Design| -> Result<RunReport, Failure> {
        let label = d.label(&cfg.array);
        Ok(match d {
            Design::Standard { rows, cols } => {
                RunReport::new(label, timing::run_standard(&gemms, *rows, *cols), dense_macs, clock)?
            }
            Design::Vusa => {
                let (cycles, split) = timing::run_vusa(&gemms, &cfg.array);
                RunReport::new(label, cycles, dense_macs, clock)?.with_load_split(split)
            }
        })
    };
    let mut reports = cfg.designs.iter().map(report_for).collect::<Result<Vec<_>, _>>()?;

    let ref_label = cfg.reference_label();
    let reference = match reports.iter().find(|r| r.design_label == ref_label) {
        Some(r) => r.clone(),
        None => report_for(&Design::Standard {
            rows: cfg.array.rows,
            cols: cfg.array.virtual_cols,
        })?,
    };
    for r in &mut reports {
        match normalize(r, &cfg.coefficients, &reference) {
            Ok(n) => {
                r.perf_per_area_norm = Some(n.perf_per_area);
                r.perf_per_power_norm = Some(n.perf_per_power);
                r.energy_norm = Some(n.energy);
            }
            Err(e) => eprintln!("warning: {}: normalized metrics skipped ({e})", r.design_label),
        }
    }

    println!("array {}, {} dense MACs, reference {ref_label}", cfg.array, dense_macs);
    println!(
        "{:<16} {:>14} {:>12} {:>10} {:>10} {:>11} {:>8}",
        "design", "cycles", "time_s", "GOP/s", "perf/area", "perf/power", "energy"
    );
    for r in &reports {
        println!(
            "{:<16} {:>14} {:>12.6} {:>10.3} {:>10} {:>11} {:>8}",
            r.design_label,
            r.total_cycles,
            r.time_s,
            r.perf_gops,
            fmt_opt(r.perf_per_area_norm),
            fmt_opt(r.perf_per_power_norm),
            fmt_opt(r.energy_norm)
        );
    }
    for r in &reports {
        if let Some(split) = &r.load_split {
            for (name, w) in [("cycles", Weighting::Cycles), ("jobs", Weighting::Jobs), ("mac ops", Weighting::MacOps)] {
                println!("{} load split by {name}: {}", r.design_label, percent_map(&split.fractions(w)));
            }
        }
    }

    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    emit(cfg, "reports", &rows_to_csv(&rows)?, &reports)
}

pub fn sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let curve = sweep_curve(&cfg.array, &cfg.grid)?;
    let widths: Vec<usize> = (cfg.array.macs_per_row..=cfg.array.virtual_cols).collect();

    println!("growth probability, array {}", cfg.array);
    print!("{:>8}", "P0");
    for w in &widths {
        print!(" {:>10}", format!("M'={w}"));
    }
    println!();
    for (i, p0) in cfg.grid.iter().enumerate() {
        print!("{p0:>8.3}");
        for w in &widths {
            print!(" {:>10.6}", curve.series(*w)[i].1);
        }
        println!();
    }
    emit(cfg, "growth", &curve.to_csv(), &curve)?;

    if cfg.topology.is_none() {
        return Ok(());
    }
    let layers = load_layers(cfg)?;
    let points = pruning_sweep(&layers, &cfg.grid, &cfg.array, &cfg.coefficients, cfg.seed)?;
    println!();
    println!("pruning sweep, {} vs {}", cfg.array.label(), cfg.reference_label());
    println!("{:>8} {:>14} {:>14} {:>10} {:>10} {:>8}", "P0", "vusa", "standard", "area", "power", "energy");
    for p in &points {
        println!(
            "{:>8.3} {:>14} {:>14} {:>10.3} {:>10.3} {:>8.3}",
            p.sparsity, p.vusa_cycles, p.standard_cycles, p.area_efficiency_ratio, p.power_efficiency_ratio, p.energy_ratio
        );
    }
    let show = |c: Option<f64>| c.map_or_else(|| "none".into(), |x| format!("{x:.3}"));
    println!(
        "break-even pruning rate: area {}, power {}",
        show(crossover(&points, |p| p.area_efficiency_ratio)),
        show(crossover(&points, |p| p.power_efficiency_ratio))
    );
    emit(cfg, "pruning", &sweep_to_csv(&points), &points)
}
