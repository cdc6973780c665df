mod common;

use common::*;
use mmrsafi::fbs::SolverConfig;
use mmrsafi::forward::ForwardOp;
use mmrsafi::io::{
    mmr_from_archive, mmr_to_archive, phantom, safi_from_archive, safi_to_archive, trace_csv,
    ParamArchive,
};
use mmrsafi::prox::ConstraintSet;
use mmrsafi::schemes::{
    default_safi_model, default_tv_model, run_cvx, run_mmr, run_safi, RunOptions,
};
use mmrsafi::tensor::{psnr, Image};
use mmrsafi::{Image32, MmrModel32, SafiModel32, SolverConfig32};

#[test]
fn residuals_match_recomputation_from_iterates() {
    let (x0, y) = noisy_phantom(25.0 / 255.0, NOISE_SEED);
    let h = ForwardOp::identity(64, 64);
    let opts = RunOptions {
        x_init: Some(&y),
        reference: Some(&x0),
        keep_iterates: true,
    };
    let cfg = SolverConfig {
        k_out: 4,
        ..SolverConfig::default()
    };
    let (_, trace) = run_mmr(
        &default_tv_model(),
        &h,
        y.as_slice(),
        &cfg,
        &ConstraintSet::AllSpace,
        &opts,
    )
    .unwrap();
    let mut prev = y.clone();
    for (step, x) in trace.steps.iter().zip(&trace.iterates) {
        let e = x.distance(&prev) / prev.norm();
        assert!(
            (e - step.residual).abs() <= 1e-12,
            "{e} vs {}",
            step.residual
        );
        prev = x.clone();
    }
}

#[test]
fn runs_are_deterministic() {
    let (_, y) = noisy_phantom(15.0 / 255.0, NOISE_SEED);
    let h = ForwardOp::identity(64, 64);
    let cfg = SolverConfig {
        k_out: 3,
        ..SolverConfig::default()
    };
    let run = || {
        run_safi(
            &default_safi_model(),
            &h,
            y.as_slice(),
            &cfg,
            &ConstraintSet::AllSpace,
            &RunOptions::default(),
        )
        .unwrap()
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(a, b);
    assert_eq!(trace_csv(&ta), trace_csv(&tb));
}

#[test]
fn default_models_improve_on_noisy_input() {
    let (x0, y) = noisy_phantom(25.0 / 255.0, NOISE_SEED);
    let h = ForwardOp::identity(64, 64);
    let cfg = SolverConfig::default();
    let base = psnr(&x0, &y).unwrap();
    let (xm, _) = run_mmr(
        &default_tv_model(),
        &h,
        y.as_slice(),
        &cfg,
        &ConstraintSet::AllSpace,
        &RunOptions::default(),
    )
    .unwrap();
    let (xs, _) = run_safi(
        &default_safi_model(),
        &h,
        y.as_slice(),
        &cfg,
        &ConstraintSet::AllSpace,
        &RunOptions::default(),
    )
    .unwrap();
    let tv = default_tv_model::<f64>();
    let (xc, tc) = run_cvx(
        &tv.w,
        tv.lambda,
        &h,
        y.as_slice(),
        &cfg,
        &ConstraintSet::AllSpace,
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(tc.steps.len(), 1);
    let (pm, ps, pc) = (
        psnr(&x0, &xm).unwrap(),
        psnr(&x0, &xs).unwrap(),
        psnr(&x0, &xc).unwrap(),
    );
    assert!(
        pm > base + 5.0 && ps > base + 5.0 && pc > base + 5.0,
        "{base} {pm} {ps} {pc}"
    );
    assert!(pm > pc, "reweighting should beat plain TV: {pm} vs {pc}");
}

#[test]
fn box_constraint_is_respected() {
    let (_, y) = noisy_phantom(25.0 / 255.0, NOISE_SEED);
    let h = ForwardOp::identity(64, 64);
    let set = ConstraintSet::Box {
        lower: 0.0,
        upper: 1.0,
    };
    let cfg = SolverConfig {
        k_out: 3,
        ..SolverConfig::default()
    };
    let (x, _) = run_mmr(
        &default_tv_model(),
        &h,
        y.as_slice(),
        &cfg,
        &set,
        &RunOptions::default(),
    )
    .unwrap();
    assert!(set.contains(x.as_slice()));
}

#[test]
fn models_survive_archive_files() {
    let dir = std::env::temp_dir().join(format!("mmrsafi-archive-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mmr = default_tv_model::<f64>();
    let path = dir.join("tv.bin");
    mmr_to_archive(&mmr).unwrap().write(&path).unwrap();
    assert_eq!(
        mmr_from_archive::<f64>(&ParamArchive::read(&path).unwrap()).unwrap(),
        mmr
    );
    let safi = default_safi_model::<f64>();
    let path = dir.join("safi.bin");
    safi_to_archive(&safi).unwrap().write(&path).unwrap();
    assert_eq!(
        safi_from_archive::<f64>(&ParamArchive::read(&path).unwrap()).unwrap(),
        safi
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn single_precision_pipeline() {
    let x0: Image32 = phantom();
    let y64 = noisy_phantom(25.0 / 255.0, NOISE_SEED).1;
    let y: Image32 =
        Image::from_vec(64, 64, y64.as_slice().iter().map(|&v| v as f32).collect()).unwrap();
    let h = ForwardOp::<f32>::identity(64, 64);
    let cfg = SolverConfig32 {
        k_out: 4,
        ..SolverConfig::default()
    };
    let mmr: MmrModel32 = default_tv_model();
    let safi: SafiModel32 = default_safi_model();
    let base = psnr(&x0, &y).unwrap();
    let (xm, tm) = run_mmr(
        &mmr,
        &h,
        y.as_slice(),
        &cfg,
        &ConstraintSet::AllSpace,
        &RunOptions::default(),
    )
    .unwrap();
    let (xs, _) = run_safi(
        &safi,
        &h,
        y.as_slice(),
        &cfg,
        &ConstraintSet::AllSpace,
        &RunOptions::default(),
    )
    .unwrap();
    assert!(xm.is_finite() && xs.is_finite());
    assert!(psnr(&x0, &xm).unwrap() > base + 5.0);
    assert!(psnr(&x0, &xs).unwrap() > base + 5.0);
    let f = tm.objectives();
    assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-3 * w[0].abs()));
}

#[test]
fn mri_zero_fill_is_adjoint_of_measurements() {
    let (x0, h, y) = mri_problem();
    let zf = h
        .adjoint(&mmrsafi::forward::Measurements::Kspace(y))
        .unwrap();
    let p = psnr(&x0, &zf).unwrap();
    assert!(p > 15.0 && p < 30.0, "{p}");
}
