//! `verify`: seeded self-checks of the mapper, the dataflow simulator and
//! the growth-probability formula.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vusa_core::analytics::{monte_carlo_growth, p_grow};
use vusa_core::dataflow::simulate_assignments;
use vusa_core::mapper::{partition, select_window, MacPair};
use vusa_core::seed::derive_seed;
use vusa_core::workload::generate_weights;
use vusa_core::{dense_matmul, timing, ArrayConfig, GemmWorkload, Matrix, Pattern, WeightMatrix, WindowAssignment};

use crate::config::RunConfig;
use crate::Failure;

const MC_SALT: u64 = 0x4d43;
const MC_SPARSITY: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

struct Check {
    name: &'static str,
    summary: String,
    failure: Option<String>,
}

struct Case {
    inputs: Matrix<i64>,
    weights: WeightMatrix,
}

fn make_case(cfg: &ArrayConfig, seed: u64, index: usize) -> Result<Case, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=3 * cfg.rows + 2);
    let c = rng.random_range(1..=3 * cfg.virtual_cols + 2);
    let t = rng.random_range(1..=6);
    let p0: f64 = rng.random();
    let pattern = match index % 3 {
        0 => Pattern::Iid,
        1 => Pattern::Clustered {
            block_w: cfg.macs_per_row,
        },
        _ => Pattern::Interleaved,
    };
    let weights = generate_weights(k, c, p0, pattern, rng.random())?;
    let inputs = Matrix::from_fn(t, k, |_, _| rng.random_range(-8i64..=8));
    Ok(Case { inputs, weights })
}

/// Test hook: breaks the first row of the first window so the checks have
/// something to catch.
fn corrupt(assignments: &mut [WindowAssignment], cfg: &ArrayConfig) {
    if let Some(row) = assignments.first_mut().and_then(|a| a.rows.first_mut()) {
        row.pairs.push(MacPair {
            mac: cfg.macs_per_row,
            spe_col: cfg.virtual_cols,
        });
    }
}

/// Each window that stops before the matrix edge must fail to grow by one
/// column without exceeding `A` nonzeros in some row.
fn check_maximal(a: &WindowAssignment, weights: &WeightMatrix, cfg: &ArrayConfig) -> Option<String> {
    let t = &a.tile;
    let remaining = weights.cols() - t.col_start;
    let mask = Matrix::from_fn(t.rows, remaining, |r, c| weights.get(t.row_start + r, t.col_start + c) != 0);
    let best = select_window(&mask, cfg);
    (best != t.width).then(|| format!("window at row {} col {} has width {}, greedy width is {best}", t.row_start, t.col_start, t.width))
}

fn oracle_checks(cfg: &RunConfig) -> Result<Vec<Check>, Failure> {
    let arr = &cfg.array;
    let (mut tiles, mut mac_pairs) = (0usize, 0usize);
    let mut mapping_fail = None;
    let mut maximal_fail = None;
    let mut equiv_fail = None;
    let mut cycle_fail = None;

    for i in 0..cfg.cases {
        let case = make_case(arr, derive_seed(cfg.seed, i as u64), i)?;
        let mut assignments = partition(&case.weights, arr)?;
        if cfg.corrupt_assignment && i == 0 {
            corrupt(&mut assignments, arr);
        }
        tiles += assignments.len();
        mac_pairs += assignments.iter().map(WindowAssignment::mac_count).sum::<usize>();

        if let Some(v) = assignments.iter().find_map(|a| a.check(&case.weights).err()) {
            mapping_fail.get_or_insert(format!("case {i}: {v}"));
            continue;
        }
        if maximal_fail.is_none() {
            maximal_fail = assignments
                .iter()
                .find_map(|a| check_maximal(a, &case.weights, arr))
                .map(|d| format!("case {i}: `window-maximality` violated: {d}"));
        }

        let run = simulate_assignments(&case.inputs, &case.weights, &assignments)?;
        let expected = dense_matmul(&case.inputs, &case.weights.to_wide())?;
        if run.outputs != expected && equiv_fail.is_none() {
            equiv_fail = Some(format!("case {i}: `dataflow-equivalence` violated: outputs differ from the dense product"));
        }
        let model = timing::gemm_vusa(&GemmWorkload::new("case", case.inputs.rows(), case.weights.clone()), arr);
        if run.cycles != model.total().cycles && cycle_fail.is_none() {
            cycle_fail = Some(format!(
                "case {i}: `cycle-model` violated: simulated {} cycles, model {}",
                run.cycles,
                model.total().cycles
            ));
        }
    }

    let n = cfg.cases;
    Ok(vec![
        Check {
            name: "mapping-invariants",
            summary: format!("{n} cases, {tiles} windows, {mac_pairs} MAC pairs"),
            failure: mapping_fail,
        },
        Check {
            name: "window-maximality",
            summary: format!("{tiles} windows"),
            failure: maximal_fail,
        },
        Check {
            name: "dataflow-equivalence",
            summary: format!("{n} GEMMs against the dense product"),
            failure: equiv_fail,
        },
        Check {
            name: "cycle-model",
            summary: format!("{n} GEMMs against the tile cycle formula"),
            failure: cycle_fail,
        },
    ])
}

fn monte_carlo_check(cfg: &RunConfig) -> Result<Check, Failure> {
    let arr = &cfg.array;
    let n = cfg.trials as f64;
    let mut worst: f64 = 0.0;
    let mut failure = None;
    let mut points = 0;
    for target in arr.macs_per_row..=arr.virtual_cols {
        for (j, p0) in MC_SPARSITY.iter().enumerate() {
            let p1 = 1.0 - p0;
            let exact = p_grow(arr, target, p1)?;
            let seed = derive_seed(derive_seed(cfg.seed, MC_SALT), (target * MC_SPARSITY.len() + j) as u64);
            let mc = monte_carlo_growth(arr, target, p1, cfg.trials, seed)?;
            // Four standard errors, plus slack for points where the
            // binomial variance is nearly zero.
            let tol = 4.0 * (exact * (1.0 - exact) / n).sqrt() + 4.0 / n;
            let err = (mc - exact).abs();
            worst = worst.max(err / tol);
            points += 1;
            if err > tol && failure.is_none() {
                failure = Some(format!(
                    "`monte-carlo-agreement` violated at M'={target}, P0={p0}: closed form {exact:.6}, sampled {mc:.6}, tolerance {tol:.2e}"
                ));
            }
        }
    }
    Ok(Check {
        name: "monte-carlo-agreement",
        summary: format!("{points} points, {} trials each, worst error {:.2} of tolerance", cfg.trials, worst),
        failure,
    })
}

pub fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let mut checks = oracle_checks(cfg)?;
    checks.push(monte_carlo_check(cfg)?);

    println!("verify {} seed {}", cfg.array, cfg.seed);
    for c in &checks {
        let status = if c.failure.is_none() { "PASS" } else { "FAIL" };
        println!("{:<22} {status}  {}", c.name, c.summary);
        if let Some(f) = &c.failure {
            println!("{:<22}       {f}", "");
        }
    }
    let failed: Vec<&Check> = checks.iter().filter(|c| c.failure.is_some()).collect();
    match failed.first() {
        None => Ok(()),
        Some(first) => Err(Failure::Verification(format!(
            "{} of {} checks failed; first: {}",
            failed.len(),
            checks.len(),
            first.failure.as_deref().unwrap_or_default()
        ))),
    }
}
