//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured margin (run with `--nocapture` to see them).
//!
//! Tests serialize on a shared lock so wall-clock measurements are clean;
//! expect the full suite to take on the order of fifteen minutes.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use scsc::applications::{infer_codes, inpaint, reconstruct, InpaintOptions};
use scsc::config::{AdmmParams, QuadMode};
use scsc::dictionary::NORM_TOLERANCE;
use scsc::drivers::{
    evaluate_dictionary, train_sbcsc, train_sbcsc_observed, train_socsc, DrawPolicy, StreamSource,
};
use scsc::filter_update::{surrogate_objective, SurrogateState};
use scsc::lasso::{kkt_gaps, solve_codes, CodeLinearOp};
use scsc::mask::sample_mask;
use scsc::metrics::{nonzero_fraction, psnr_rescaled};
use scsc::operators::{CodeOperator, DictOperator};
use scsc::{cscd, CodeMap, Dictionary, ObservationMask, Signal, TrainConfig};
use scsc_oracle as oracle;

fn assert_ball_constraint(dict: &Dictionary, context: &str) {
    let max = dict.max_norm();
    assert!(
        max <= 1.0 + NORM_TOLERANCE,
        "criterion 4 violated in {context}: max filter norm {max}"
    );
}

#[test]
fn criterion_01_operator_correctness() {
    let _guard = timing_lock();
    let mut r = rng(1001);
    let mut worst_adjoint = 0.0f64;
    let mut worst_dense = 0.0f64;
    for trial in 0..100u64 {
        let h = r.random_range(6..=16);
        let w = r.random_range(6..=16);
        let k = r.random_range(1..=4);
        let m = [1usize, 3, 5][r.random_range(0..3)];
        let dict = Dictionary::random_init(k, m, 50_000 + trial).unwrap();
        let codes = random_codes(&mut r, k, h, w, 0.4);
        let y = random_signal(&mut r, h, w);

        let op = DictOperator::new(&dict, h, w).unwrap();
        let dz = op.apply(&codes).unwrap();
        let dty = op.adjoint(&y).unwrap();

        // adjoint identity at 1e-10 relative
        let lhs: f64 = dz.pixels().iter().zip(y.pixels().iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = codes
            .maps()
            .iter()
            .zip(dty.maps())
            .map(|(zm, gm)| zm.iter().zip(gm.iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let z_norm: f64 =
            codes.maps().iter().map(|m| m.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
        let scale = (z_norm * y.norm_sq().sqrt()).max(1e-12);
        worst_adjoint = worst_adjoint.max((lhs - rhs).abs() / scale);
        assert!((lhs - rhs).abs() <= 1e-10 * scale, "trial {trial} adjoint identity");

        // dense-oracle equality at 1e-12 relative
        let dmat = oracle::materialize_dict_matrix(&dict, h, w).unwrap();
        let zvec = oracle::codes_vector(&codes);
        let dense_dz = &dmat * &zvec;
        let ours: Vec<f64> = dz.pixels().iter().copied().collect();
        let gap = l2_diff(&ours, dense_dz.as_slice()) / dense_dz.norm().max(1e-12);
        worst_dense = worst_dense.max(gap);
        assert!(gap <= 1e-12, "trial {trial} dense apply gap {gap}");

        let dense_adj = dmat.transpose() * oracle::signal_vector(&y);
        let ours: Vec<f64> = dty.maps().iter().flat_map(|m| m.iter().copied()).collect();
        let gap = l2_diff(&ours, dense_adj.as_slice()) / dense_adj.norm().max(1e-12);
        worst_dense = worst_dense.max(gap);
        assert!(gap <= 1e-12, "trial {trial} dense adjoint gap {gap}");

        // the code operator and its adjoint against the dense Z
        let zop = CodeOperator::new(&codes, m).unwrap();
        let flat = dict.to_flat();
        let zmat = oracle::materialize_code_matrix(&codes, m).unwrap();
        let dense_zf = &zmat * DVector::from_column_slice(&flat);
        let zf = zop.apply(&flat).unwrap();
        let ours: Vec<f64> = zf.pixels().iter().copied().collect();
        let gap = l2_diff(&ours, dense_zf.as_slice()) / dense_zf.norm().max(1e-12);
        worst_dense = worst_dense.max(gap);
        assert!(gap <= 1e-12, "trial {trial} dense code apply gap {gap}");

        let dense_ztr = zmat.transpose() * oracle::signal_vector(&y);
        let ztr = zop.adjoint(y.pixels()).unwrap();
        let gap = l2_diff(&ztr, dense_ztr.as_slice()) / dense_ztr.norm().max(1e-12);
        worst_dense = worst_dense.max(gap);
        assert!(gap <= 1e-12, "trial {trial} dense code adjoint gap {gap}");

        let zf_lhs: f64 = zf.pixels().iter().zip(y.pixels().iter()).map(|(a, b)| a * b).sum();
        let zf_rhs: f64 = flat.iter().zip(&ztr).map(|(a, b)| a * b).sum();
        let scale = (l2(&flat) * y.norm_sq().sqrt()).max(1e-12);
        assert!((zf_lhs - zf_rhs).abs() <= 1e-10 * scale, "trial {trial} Z adjoint identity");
    }
    println!(
        "ACCEPTANCE 01 PASS: operators on 100 instances; worst adjoint residual {worst_adjoint:.2e} (<=1e-10), worst dense gap {worst_dense:.2e} (<=1e-12)"
    );
}

#[test]
fn criterion_02_lasso_oracle_equivalence() {
    let _guard = timing_lock();
    let mut r = rng(42);
    let dict = Dictionary::random_init(2, 3, 42).unwrap();
    let signal = random_signal(&mut r, 6, 6);
    let mask = sample_mask(6, 6, 2, 1.0, 0, 0).unwrap();
    let lambda = 0.1;

    let mut params = AdmmParams::for_lambda(lambda);
    params.iterations = 500;
    params.cg_tol = 1e-10;
    params.cg_max_iters = 1000;
    params.quad_mode = QuadMode::Iterative;
    let sol = solve_codes(&signal, &dict, &mask, lambda, &params, None).unwrap();

    let d = oracle::materialize_dict_matrix(&dict, 6, 6).unwrap();
    let x = oracle::signal_vector(&signal);
    let reference = oracle::lasso_reference(&d, &x, lambda, 1e-9).unwrap();
    let ref_obj = oracle::lasso_objective(&d, &x, lambda, &reference);
    let admm_obj =
        oracle::lasso_objective(&d, &x, lambda, &DVector::from_column_slice(&sol.reduced));
    let gap = rel_gap(admm_obj, ref_obj);
    assert!(gap < 1e-6, "objective gap {gap}");

    let op = CodeLinearOp::new(&dict, &mask, None).unwrap();
    let (support_gap, zero_max) = kkt_gaps(&op, &signal, &sol.reduced, lambda).unwrap();
    assert!(support_gap <= 1e-4 * lambda, "KKT support gap {support_gap}");
    assert!(zero_max <= lambda * (1.0 + 1e-4), "KKT zero bound {zero_max}");
    println!(
        "ACCEPTANCE 02 PASS: ADMM(500) vs dense LASSO objective gap {gap:.2e} (<=1e-6); KKT support gap {:.2e} (tol 1e-4)",
        support_gap / lambda
    );
}

#[test]
fn criterion_03_surrogate_exactness() {
    let _guard = timing_lock();
    let k = 3;
    let m = 3;
    let (h, w) = (12, 12);
    let stream = smooth_corpus(25, h, w, 3003, 2.0, 6);
    let dict = Dictionary::random_init(k, m, 77).unwrap();
    let params = AdmmParams::for_lambda(0.5);
    let mut state = SurrogateState::new(k, m);
    let mut kept: Vec<(CodeMap, Signal)> = Vec::new();
    for (t, x) in stream.iter().enumerate() {
        let mask = sample_mask(h, w, k, 0.5, 9, t as u64 + 1).unwrap();
        let sol = solve_codes(x, &dict, &mask, 0.5, &params, None).unwrap();
        let codes = mask.upsample(&sol.reduced).unwrap();
        state.update(&codes, x).unwrap();
        kept.push((codes, x.clone()));
    }
    assert_eq!(state.count(), 25);

    let t = kept.len() as f64;
    let km = k * m * m;
    let mut dense_c = DMatrix::zeros(km, km);
    let mut dense_b = DVector::zeros(km);
    for (z, x) in &kept {
        let zm = oracle::materialize_code_matrix(z, m).unwrap();
        dense_c += zm.transpose() * &zm / t;
        dense_b += zm.transpose() * oracle::signal_vector(x) / t;
    }
    let c_gap = (state.c() - &dense_c).norm() / dense_c.norm().max(1e-300);
    let b_gap = (state.b() - &dense_b).norm() / dense_b.norm().max(1e-300);
    assert!(c_gap <= 1e-12, "C gap {c_gap}");
    assert!(b_gap <= 1e-12, "B gap {b_gap}");

    // Eq.-8-style objective equals the full-history quadratic up to the
    // (1/2t) sum ||x||^2 constant
    let probe_dict = Dictionary::random_init(k, m, 4004).unwrap();
    let lhs = surrogate_objective(&state, &probe_dict).unwrap();
    let mut rhs = 0.0;
    for (z, x) in &kept {
        let recon = DictOperator::new(&probe_dict, h, w).unwrap().apply(z).unwrap();
        let err: f64 = x
            .pixels()
            .iter()
            .zip(recon.pixels().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        rhs += 0.5 * err / t - 0.5 * x.norm_sq() / t;
    }
    let obj_gap = (lhs - rhs).abs() / rhs.abs().max(1e-300);
    assert!(obj_gap <= 1e-10, "objective gap {obj_gap}");
    println!(
        "ACCEPTANCE 03 PASS: surrogates after 25-image stream; C gap {c_gap:.2e}, B gap {b_gap:.2e} (<=1e-12), objective gap {obj_gap:.2e} (<=1e-10)"
    );
}

#[test]
fn criterion_04_filter_ball_constraint() {
    let _guard = timing_lock();
    // every other criterion asserts this on its own dictionaries; here a
    // quick dedicated sweep over both update paths
    let mut r = rng(404);
    let signals: Vec<Signal> = (0..3).map(|_| random_signal(&mut r, 10, 10)).collect();
    let mut cfg = TrainConfig::new(4, 3);
    cfg.lambda = 0.3;
    cfg.max_outer = 5;
    cfg.tol = 0.0;
    cfg.seed = 8;
    let batch = train_sbcsc(&signals, &cfg).unwrap();
    assert_ball_constraint(&batch.dictionary, "batch training");
    let stream = StreamSource::from_signals(signals, DrawPolicy::Sequential).unwrap();
    cfg.max_outer = 8;
    let online = train_socsc(&stream, &cfg, None).unwrap();
    assert_ball_constraint(&online.dictionary, "online training");
    println!(
        "ACCEPTANCE 04 PASS: max filter norms {:.12} / {:.12} (<= 1+1e-12)",
        batch.dictionary.max_norm(),
        online.dictionary.max_norm()
    );
}

#[test]
fn criterion_05_monotone_alternating_minimization() {
    let _guard = timing_lock();
    let signals = smooth_corpus(2, 12, 12, 505, 2.0, 6);
    let mut cfg = TrainConfig::new(2, 3);
    cfg.lambda = 0.15;
    cfg.subsample_rate = 1.0;
    cfg.admm_iters = 500;
    cfg.quad_mode = QuadMode::Iterative;
    cfg.max_outer = 15;
    cfg.tol = 0.0;
    cfg.seed = 12;
    // exact subsolves
    cfg.cg_tol = 1e-10;
    cfg.cg_max_iters = 10_000;
    let out = train_sbcsc(&signals, &cfg).unwrap();
    let objs = out.trace.objectives();
    assert_eq!(objs.len(), 15);
    for pair in objs.windows(2) {
        assert!(
            pair[1] <= pair[0] * (1.0 + 1e-9),
            "objective increased: {} -> {}",
            pair[0],
            pair[1]
        );
    }
    assert_ball_constraint(&out.dictionary, "criterion 5");
    println!(
        "ACCEPTANCE 05 PASS: Eq.-1 objective nonincreasing over 15 exact outer iterations ({:.4} -> {:.4})",
        objs[0],
        objs[14]
    );
}

#[test]
fn criterion_06_subsampling_fidelity() {
    let _guard = timing_lock();
    let signals = smooth_corpus(10, 64, 64, 600, 3.0, 9);
    let mut finals = Vec::new();
    for p in [1.0f64, 0.2, 0.1] {
        let mut cfg = TrainConfig::new(32, 7);
        cfg.lambda = 1.0;
        cfg.subsample_rate = p;
        cfg.max_outer = 20;
        cfg.tol = 0.0;
        cfg.seed = 7;
        let out = train_sbcsc(&signals, &cfg).unwrap();
        assert_ball_constraint(&out.dictionary, "criterion 6");
        let objs = out.trace.objectives();
        let n = objs.len();
        assert_eq!(n, 20);
        let plateau = (objs[n - 2] - objs[n - 1]).abs() / objs[n - 2];
        assert!(plateau <= 0.01, "p={p} has not plateaued: last change {plateau}");
        finals.push(objs[n - 1]);
    }
    let gap = (finals[2] - finals[0]).abs() / finals[0];
    assert!(gap <= 0.05, "p=0.1 vs p=1 final objective gap {gap}");
    println!(
        "ACCEPTANCE 06 PASS: plateaus within 20 iterations; p=0.1 vs p=1 objective gap {:.2}% (<=5%)",
        gap * 100.0
    );
}

#[test]
fn criterion_07_subsampling_speedup() {
    let _guard = timing_lock();
    // 100x100/K=100 does not fit this machine's budget; the criterion's
    // sanctioned fallback scale
    let signals = smooth_corpus(10, 64, 64, 700, 3.0, 9);
    let mut means = Vec::new();
    for p in [1.0f64, 0.1] {
        let mut cfg = TrainConfig::new(64, 7);
        cfg.lambda = 1.0;
        cfg.subsample_rate = p;
        cfg.quad_mode = QuadMode::Iterative; // same substep for both rates
        cfg.max_outer = 3;
        cfg.tol = 0.0;
        cfg.seed = 7;
        let mut code_times = Vec::new();
        let out = train_sbcsc_observed(&signals, &cfg, |stats| {
            code_times.push(stats.code_update_s);
        })
        .unwrap();
        assert_ball_constraint(&out.dictionary, "criterion 7");
        means.push(code_times.iter().sum::<f64>() / code_times.len() as f64);
    }
    let ratio = means[1] / means[0];
    assert!(
        ratio <= 1.0 / 3.0,
        "p=0.1 mean code update {:.3}s vs p=1 {:.3}s (ratio {ratio:.3})",
        means[1],
        means[0]
    );
    println!(
        "ACCEPTANCE 07 PASS: per-iteration code update {:.3}s at p=0.1 vs {:.3}s at p=1 (ratio {:.3} <= 1/3)",
        means[1], means[0], ratio
    );
}

#[test]
fn criterion_08_sparsity() {
    let _guard = timing_lock();
    let signals = smooth_corpus(10, 64, 64, 800, 3.0, 9);
    let mut cfg = TrainConfig::new(64, 7);
    cfg.lambda = 1.0;
    cfg.subsample_rate = 0.1;
    cfg.max_outer = 15;
    cfg.tol = 0.0;
    cfg.seed = 9;
    let out = train_sbcsc(&signals, &cfg).unwrap();
    assert_ball_constraint(&out.dictionary, "criterion 8");
    let nnz = out.trace.last().unwrap().nnz_frac;
    assert!(nnz <= 0.02, "nonzero fraction {nnz}");
    println!("ACCEPTANCE 08 PASS: nonzero fraction {:.4}% at K=64, lambda=1 (<=2%)", nnz * 100.0);
}

#[test]
fn criterion_09_online_vs_batch_parity() {
    let _guard = timing_lock();
    let train = smooth_corpus(10, 32, 32, 900, 2.0, 6);
    let held_out = smooth_corpus(10, 32, 32, 901, 2.0, 6);
    let mut cfg = TrainConfig::new(16, 5);
    cfg.lambda = 1.0;
    cfg.subsample_rate = 1.0;
    cfg.max_outer = 25;
    cfg.tol = 0.0;
    cfg.seed = 3;
    let batch = train_sbcsc(&train, &cfg).unwrap();
    assert_ball_constraint(&batch.dictionary, "criterion 9 batch");
    let (_, batch_psnr) = evaluate_dictionary(&batch.dictionary, &held_out, &cfg).unwrap();

    let stream = StreamSource::from_signals(train.clone(), DrawPolicy::Sequential).unwrap();
    let mut online_cfg = cfg.clone();
    online_cfg.minibatch = 1;
    online_cfg.max_outer = 600;
    let online = train_socsc(&stream, &online_cfg, None).unwrap();
    assert_ball_constraint(&online.dictionary, "criterion 9 online");
    let (_, online_psnr) = evaluate_dictionary(&online.dictionary, &held_out, &cfg).unwrap();

    let gap = (batch_psnr - online_psnr).abs();
    assert!(
        gap <= 0.5,
        "batch {batch_psnr:.3} dB vs online {online_psnr:.3} dB (gap {gap:.3})"
    );
    println!(
        "ACCEPTANCE 09 PASS: held-out PSNR batch {batch_psnr:.2} dB vs online {online_psnr:.2} dB (gap {gap:.3} <= 0.5)"
    );
}

#[test]
fn criterion_10_minibatch_speedup() {
    let _guard = timing_lock();
    let patches = smooth_corpus(200, 24, 24, 910, 2.0, 6);
    let held_out = smooth_corpus(3, 24, 24, 911, 2.0, 6);
    let mut results = Vec::new();
    for (eta, steps) in [(1usize, 200usize), (20, 10)] {
        let stream = StreamSource::from_signals(patches.clone(), DrawPolicy::Sequential).unwrap();
        let mut cfg = TrainConfig::new(16, 5);
        cfg.lambda = 1.0;
        cfg.subsample_rate = 0.1;
        cfg.minibatch = eta;
        cfg.max_outer = steps;
        cfg.tol = 0.0;
        cfg.seed = 5;
        // the speedup claim is about amortizing the cached factorization
        // across a mini-batch, so both arms use the factor-cache substep
        // (eta=1 refactors every step, eta=20 once per 20 members)
        cfg.quad_mode = QuadMode::FactorCache { cap: 20_000 };
        let out = train_socsc(&stream, &cfg, Some(&held_out)).unwrap();
        assert_ball_constraint(&out.dictionary, "criterion 10");
        let last = out.trace.last().unwrap();
        results.push((last.test_objective.unwrap(), last.wall_s));
    }
    let obj_gap = (results[1].0 - results[0].0).abs() / results[0].0;
    let wall_ratio = results[1].1 / results[0].1;
    assert!(obj_gap <= 0.05, "test objective gap {obj_gap}");
    assert!(wall_ratio <= 0.5, "wall ratio {wall_ratio}");
    println!(
        "ACCEPTANCE 10 PASS: eta=20 reaches eta=1 objective within {:.2}% (<=5%) using {:.1}% of the wall time (<=50%)",
        obj_gap * 100.0,
        wall_ratio * 100.0
    );
}

#[test]
fn criterion_11_overcomplete_benefit() {
    let _guard = timing_lock();
    let patches = oriented_corpus(200, 24, 24, 920);
    let held_out = oriented_corpus(12, 24, 24, 921);
    let mut results = Vec::new();
    for k in [8usize, 32] {
        let stream = StreamSource::from_signals(patches.clone(), DrawPolicy::Sequential).unwrap();
        let mut cfg = TrainConfig::new(k, 5);
        cfg.lambda = 1.0;
        cfg.subsample_rate = 0.2;
        cfg.minibatch = 5;
        cfg.max_outer = 160;
        cfg.tol = 0.0;
        cfg.seed = 6;
        let out = train_socsc(&stream, &cfg, None).unwrap();
        assert_ball_constraint(&out.dictionary, "criterion 11");
        let mut psnr_sum = 0.0;
        let mut nnz_sum = 0.0;
        for t in &held_out {
            let codes = infer_codes(t, &out.dictionary, 0.3, 10).unwrap();
            let recon = reconstruct(&out.dictionary, &codes).unwrap();
            psnr_sum += psnr_rescaled(t, &recon).unwrap();
            nnz_sum += nonzero_fraction(&codes, 0.1);
        }
        results.push((psnr_sum / held_out.len() as f64, nnz_sum / held_out.len() as f64));
    }
    let (under_psnr, under_nnz) = results[0];
    let (over_psnr, over_nnz) = results[1];
    assert!(over_psnr > under_psnr, "PSNR {over_psnr:.3} !> {under_psnr:.3}");
    assert!(over_nnz < under_nnz, "nnz {over_nnz:.5} !< {under_nnz:.5}");
    println!(
        "ACCEPTANCE 11 PASS: 4x over-complete dictionary: PSNR {over_psnr:.2} > {under_psnr:.2} dB, nnz {over_nnz:.4} < {under_nnz:.4}"
    );
}

#[test]
fn criterion_12_inpainting() {
    let _guard = timing_lock();
    let dict = smooth_generator_dict(4, 5, 11);
    let mut r = rng(1212);
    let mut margins = Vec::new();
    for _image in 0..2 {
        let z0 = spike_codes(&mut r, 4, 24, 24, 30, 3.0, 9.0);
        let x = reconstruct(&dict, &z0).unwrap();
        let mut psnr_sum = 0.0;
        let mut base_sum = 0.0;
        for trial in 0..5u64 {
            let omask = ObservationMask::random(24, 24, 0.5, 7000 + trial).unwrap();
            let observed = omask.zero_filled(&x);
            let recon = inpaint(&observed, &omask, &dict, &InpaintOptions::default()).unwrap();
            psnr_sum += psnr_rescaled(&x, &recon).unwrap();
            base_sum += psnr_rescaled(&x, &observed).unwrap();
        }
        margins.push((psnr_sum - base_sum) / 5.0);
    }
    for (i, margin) in margins.iter().enumerate() {
        assert!(*margin >= 3.0, "image {i}: mean margin {margin:.2} dB");
    }
    println!(
        "ACCEPTANCE 12 PASS: inpainting at 50% observation beats zero-fill by {:.2} / {:.2} dB over 5 mask seeds (>=3)",
        margins[0], margins[1]
    );
}

#[test]
fn criterion_13_determinism() {
    let _guard = timing_lock();
    let signals = smooth_corpus(10, 64, 64, 600, 3.0, 9);
    let run = || {
        let mut cfg = TrainConfig::new(32, 7);
        cfg.lambda = 1.0;
        cfg.subsample_rate = 0.1;
        cfg.max_outer = 20;
        cfg.tol = 0.0;
        cfg.seed = 7;
        train_sbcsc(&signals, &cfg).unwrap()
    };
    let a = run();
    let b = run();
    let bytes_a = cscd::encode(&a.dictionary);
    let bytes_b = cscd::encode(&b.dictionary);
    assert_eq!(bytes_a, bytes_b, "dictionary files differ between identical runs");
    assert_eq!(a.trace.objectives(), b.trace.objectives());
    println!(
        "ACCEPTANCE 13 PASS: two identical criterion-6 runs produce byte-identical .cscd files ({} bytes)",
        bytes_a.len()
    );
}
