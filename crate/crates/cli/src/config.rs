//! Run configuration: a TOML file of `key = value` entries, overridden by
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use vusa_core::config::{standard_label, DEFAULT_CLOCK_HZ};
use vusa_core::{ArrayConfig, CostCoefficients, Pattern};

use crate::{file_failure, Failure};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_GRID_STEP: f64 = 0.05;
pub const DEFAULT_CASES: usize = 64;
pub const DEFAULT_TRIALS: u64 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Default)]
pub struct Flags {
    /// Configuration file of `key = value` entries; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Array shape: rows, virtual columns, MACs per row.
    #[arg(long, global = true, num_args = 3, value_names = ["N", "M", "A"])]
    pub array: Option<Vec<usize>>,
    #[arg(long, global = true, value_name = "HZ")]
    pub clock_hz: Option<f64>,
    /// Layer table (name, ifmap h/w, filter h/w, channels, filters, stride).
    #[arg(long, global = true, value_name = "PATH")]
    pub topology: Option<PathBuf>,
    /// Directory holding one `<layer>.smx` weight file per layer.
    #[arg(long, global = true, value_name = "DIR", conflicts_with = "sparsity")]
    pub weights: Option<PathBuf>,
    /// Zero fraction of synthetic weights.
    #[arg(long, global = true, value_name = "P0")]
    pub sparsity: Option<f64>,
    /// iid, clustered:W or interleaved.
    #[arg(long, global = true)]
    pub pattern: Option<Pattern>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Designs to compare, e.g. `3x3,3x6,vusa`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub designs: Option<Vec<String>>,
    /// CSV of `design,area_norm,power_norm`; defaults to the bundled table.
    #[arg(long, global = true, value_name = "PATH")]
    pub coefficients: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
    /// Explicit sparsity grid for `sweep`, comma separated.
    #[arg(long, global = true, value_delimiter = ',', conflicts_with = "grid_step")]
    pub grid: Option<Vec<f64>>,
    /// Uniform sparsity grid step over [0, 1] for `sweep`.
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    /// Random GEMM instances checked by `verify`.
    #[arg(long, global = true)]
    pub cases: Option<usize>,
    /// Monte Carlo trials per point in `verify`.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true, hide = true)]
    pub corrupt_assignment: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    array: Option<Vec<usize>>,
    clock_hz: Option<f64>,
    topology: Option<PathBuf>,
    weights: Option<PathBuf>,
    sparsity: Option<f64>,
    pattern: Option<String>,
    seed: Option<u64>,
    designs: Option<Vec<String>>,
    coefficients: Option<PathBuf>,
    out: Option<PathBuf>,
    format: Option<Vec<Format>>,
    grid: Option<Vec<f64>>,
    grid_step: Option<f64>,
    cases: Option<usize>,
    trials: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource {
    Files(PathBuf),
    Synthetic { sparsity: f64, pattern: Pattern },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    Standard { rows: usize, cols: usize },
    Vusa,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub array: ArrayConfig,
    pub topology: Option<PathBuf>,
    pub source: Option<WeightSource>,
    pub seed: u64,
    pub designs: Vec<Design>,
    pub coefficients: CostCoefficients,
    pub out: Option<PathBuf>,
    pub formats: Vec<Format>,
    pub grid: Vec<f64>,
    pub cases: usize,
    pub trials: u64,
    pub corrupt_assignment: bool,
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn read_file_config(path: &Path) -> Result<FileConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let mut cfg: FileConfig =
        toml::from_str(&text).map_err(|e| invalid(format!("{}: {}", path.display(), e.message())))?;
    // Paths in the file are relative to the file itself.
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.topology, &mut cfg.weights, &mut cfg.coefficients, &mut cfg.out] {
        if let Some(rel) = p.as_mut().filter(|p| p.is_relative()) {
            *rel = base.join(&*rel);
        }
    }
    Ok(cfg)
}

fn parse_design(token: &str, cfg: &ArrayConfig) -> Result<Design, Failure> {
    let t = token.trim();
    if t == "vusa" || t == cfg.label() && !cfg.is_standard() {
        return Ok(Design::Vusa);
    }
    let shape = t.strip_prefix("standard-").unwrap_or(t);
    let parsed = shape
        .split_once('x')
        .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)));
    match parsed {
        Some((rows, cols)) if rows > 0 && cols > 0 => Ok(Design::Standard { rows, cols }),
        _ => Err(invalid(format!("unknown design `{t}` (expected NxW, standard-NxW or vusa)"))),
    }
}

fn default_designs(cfg: &ArrayConfig) -> Vec<Design> {
    let mut d: Vec<Design> = (cfg.macs_per_row..=cfg.virtual_cols)
        .map(|cols| Design::Standard { rows: cfg.rows, cols })
        .collect();
    if !cfg.is_standard() {
        d.push(Design::Vusa);
    }
    d
}

impl Design {
    pub fn label(&self, cfg: &ArrayConfig) -> String {
        match self {
            Design::Standard { rows, cols } => standard_label(*rows, *cols),
            Design::Vusa => cfg.label(),
        }
    }
}

fn check_sparsity(p0: f64) -> Result<f64, Failure> {
    if (0.0..=1.0).contains(&p0) {
        Ok(p0)
    } else {
        Err(invalid(format!("sparsity {p0} outside [0, 1]")))
    }
}

fn grid_from_step(step: f64) -> Result<Vec<f64>, Failure> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(invalid(format!("grid step {step} must be in (0, 1]")));
    }
    Ok(vusa_core::analytics::uniform_grid(step))
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self, Failure> {
        let file = match &flags.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };

        let dims = flags.array.clone().or(file.array).unwrap_or_else(|| vec![3, 6, 3]);
        let [n, m, a] = dims[..] else {
            return Err(invalid(format!("array needs three values N M A, got {}", dims.len())));
        };
        let clock = flags.clock_hz.or(file.clock_hz).unwrap_or(DEFAULT_CLOCK_HZ);
        let array = ArrayConfig::new(n, m, a)
            .and_then(|c| c.with_clock(clock))
            .map_err(|e| invalid(e.to_string()))?;

        let file_pattern = file
            .pattern
            .as_deref()
            .map(str::parse::<Pattern>)
            .transpose()
            .map_err(|e| invalid(e.to_string()))?;
        let pattern = flags.pattern.or(file_pattern).unwrap_or(Pattern::Iid);
        if file.weights.is_some() && file.sparsity.is_some() {
            return Err(invalid("config sets both `weights` and `sparsity`; pick one weight source"));
        }
        let synthetic = |p0: f64| check_sparsity(p0).map(|sparsity| WeightSource::Synthetic { sparsity, pattern });
        // A source given on the command line replaces whichever one the file set.
        let source = match (&flags.weights, flags.sparsity) {
            (Some(dir), _) => Some(WeightSource::Files(dir.clone())),
            (None, Some(p0)) => Some(synthetic(p0)?),
            (None, None) => match (file.weights, file.sparsity) {
                (Some(dir), _) => Some(WeightSource::Files(dir)),
                (None, Some(p0)) => Some(synthetic(p0)?),
                (None, None) => None,
            },
        };

        let designs = match flags.designs.clone().or(file.designs) {
            Some(tokens) => {
                let mut out: Vec<Design> = Vec::new();
                for t in tokens.iter().filter(|t| !t.trim().is_empty()) {
                    let d = parse_design(t, &array)?;
                    if !out.iter().any(|o| o.label(&array) == d.label(&array)) {
                        out.push(d);
                    }
                }
                if out.is_empty() {
                    return Err(invalid("design list is empty"));
                }
                out
            }
            None => default_designs(&array),
        };

        let coefficients = match flags.coefficients.clone().or(file.coefficients) {
            Some(p) => CostCoefficients::load(&p).map_err(|e| file_failure(&p, e))?,
            None => CostCoefficients::bundled(),
        };

        let grid = match (flags.grid.clone(), flags.grid_step) {
            (Some(g), _) => g,
            (None, Some(step)) => grid_from_step(step)?,
            (None, None) => match (file.grid, file.grid_step) {
                (Some(g), _) => g,
                (None, step) => grid_from_step(step.unwrap_or(DEFAULT_GRID_STEP))?,
            },
        };
        if grid.is_empty() {
            return Err(invalid("sparsity grid is empty"));
        }
        for &p in &grid {
            check_sparsity(p)?;
        }

        let formats = flags.format.clone().or(file.format).unwrap_or_else(|| vec![Format::Csv]);
        let trials = flags.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(invalid("trials must be positive"));
        }

        Ok(Self {
            array,
            topology: flags.topology.clone().or(file.topology),
            source,
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            designs,
            coefficients,
            out: flags.out.clone().or(file.out),
            formats,
            grid,
            cases: flags.cases.or(file.cases).unwrap_or(DEFAULT_CASES),
            trials,
            corrupt_assignment: flags.corrupt_assignment,
        })
    }

    pub fn reference_label(&self) -> String {
        standard_label(self.array.rows, self.array.virtual_cols)
    }
}
