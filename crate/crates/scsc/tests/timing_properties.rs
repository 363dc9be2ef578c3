//! Wall-clock scaling properties. These measure real time, so every test
//! takes the shared timing lock and uses generous margins.

mod common;

use std::time::Instant;

use common::*;
use scsc::config::{AdmmParams, QuadMode};
use scsc::lasso::solve_codes;
use scsc::mask::sample_mask;
use scsc::operators::CodeOperator;
use scsc::Dictionary;

#[test]
fn code_adjoint_cost_scales_with_nonzeros() {
    let _guard = timing_lock();
    let mut r = rng(7);
    let dict = Dictionary::random_init(8, 7, 7).unwrap();
    let grid = random_grid(&mut r, 96, 96);
    let mut time_density = |density: f64| -> f64 {
        let codes = random_codes(&mut r, 8, 96, 96, density);
        let zop = CodeOperator::new(&codes, dict.side()).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t = Instant::now();
            let out = zop.adjoint(&grid).unwrap();
            let dt = t.elapsed().as_secs_f64();
            assert!(out.len() == 8 * 49);
            best = best.min(dt);
        }
        best
    };
    let sparse = time_density(0.01);
    let dense = time_density(1.0);
    // 100x density difference must cost visibly more; demand only 3x
    assert!(
        dense >= 3.0 * sparse,
        "dense {dense:.6}s vs sparse {sparse:.6}s"
    );
}

#[test]
fn subsampled_solve_is_at_least_three_times_faster() {
    let _guard = timing_lock();
    let mut r = rng(13);
    let dict = Dictionary::random_init(32, 7, 13).unwrap();
    let signal = random_signal(&mut r, 48, 48);
    let lambda = 1.0;
    let mut params = AdmmParams::for_lambda(lambda);
    params.quad_mode = QuadMode::Iterative;
    let time_rate = |rate: f64, iteration: u64| -> f64 {
        let mask = sample_mask(48, 48, 32, rate, 3, iteration).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t = Instant::now();
            let sol = solve_codes(&signal, &dict, &mask, lambda, &params, None).unwrap();
            let dt = t.elapsed().as_secs_f64();
            assert!(sol.reduced.len() == mask.len());
            best = best.min(dt);
        }
        best
    };
    let full = time_rate(1.0, 1);
    let tenth = time_rate(0.1, 2);
    assert!(
        tenth <= full / 3.0,
        "p=0.1 took {tenth:.4}s, p=1 took {full:.4}s"
    );
}
