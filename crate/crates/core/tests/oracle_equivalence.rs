//! Cycle-stepped simulation against the reference matrix product.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vusa_core::dataflow::{simulate_gemm, simulate_tile};
use vusa_core::mapper::partition;
use vusa_core::timing::tile_cycles;
use vusa_core::{dense_matmul, ArrayConfig, Matrix, WeightMatrix};

fn random_weights(rng: &mut ChaCha8Rng, k: usize, c: usize, p0: f64) -> WeightMatrix {
    WeightMatrix::from_fn(k, c, |_, _| {
        if rng.random::<f64>() < p0 {
            0
        } else {
            rng.random_range(-128..=127)
        }
    })
}

fn random_inputs(rng: &mut ChaCha8Rng, t: usize, k: usize) -> Matrix<i64> {
    Matrix::from_fn(t, k, |_, _| rng.random_range(-128..=127))
}

#[test]
fn multi_tile_gemm_matches_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (n, m, a) in [(3, 6, 3), (2, 4, 2), (4, 8, 2), (3, 3, 3), (1, 5, 1)] {
        let cfg = ArrayConfig::new(n, m, a).unwrap();
        for _ in 0..40 {
            let (k, c, t) = (rng.random_range(1..14), rng.random_range(1..20), rng.random_range(1..9));
            let p0 = rng.random::<f64>();
            let w = random_weights(&mut rng, k, c, p0);
            let x = random_inputs(&mut rng, t, k);
            let run = simulate_gemm(&x, &w, &cfg).unwrap();
            assert_eq!(run.outputs, dense_matmul(&x, &w.to_wide()).unwrap(), "{cfg} {k}x{c}");
        }
    }
}

#[test]
fn virtual_growth_is_transparent() {
    let vusa = ArrayConfig::new(3, 6, 3).unwrap();
    let standard = ArrayConfig::standard(3, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut grown = 0;
    for _ in 0..200 {
        let w = random_weights(&mut rng, 3, 6, 0.6);
        let tiles = partition(&w, &vusa).unwrap();
        if tiles.len() != 1 {
            continue;
        }
        grown += 1;
        let x = random_inputs(&mut rng, 6, 3);
        let partial = random_inputs(&mut rng, 6, 6);
        let on_vusa = simulate_tile(&tiles[0], &w, &x, &partial).unwrap();
        let std_tiles = partition(&w, &standard).unwrap();
        let on_std = simulate_tile(&std_tiles[0], &w, &x, &partial).unwrap();
        assert_eq!(on_vusa, on_std);
    }
    assert!(grown > 50);
}

#[test]
fn measured_cycles_match_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for rows in 1..=8 {
        for cols in 1..=8 {
            for t in [1, 2, 5, 13, 32] {
                let cfg = ArrayConfig::standard(rows, cols).unwrap();
                let w = random_weights(&mut rng, rows, cols, 0.5);
                let tile = &partition(&w, &cfg).unwrap()[0];
                let x = random_inputs(&mut rng, t, rows);
                let run = simulate_tile(tile, &w, &x, &Matrix::zeros(t, cols)).unwrap();
                assert_eq!(run.cycles, tile_cycles(rows, cols, t));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_config_matches_matmul(
        (n, m, a) in (1usize..5, 1usize..9).prop_flat_map(|(n, m)| (Just(n), Just(m), 1..=m)),
        k in 1usize..10,
        c in 1usize..14,
        t in 1usize..6,
        p0 in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let cfg = ArrayConfig::new(n, m, a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_weights(&mut rng, k, c, p0);
        let x = random_inputs(&mut rng, t, k);
        let run = simulate_gemm(&x, &w, &cfg).unwrap();
        prop_assert_eq!(run.outputs, dense_matmul(&x, &w.to_wide()).unwrap());
    }
}
