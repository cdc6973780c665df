mod common;

use common::*;
use mmrsafi::fbs::{convex_objective, fbs_solve, SolverConfig, Tolerances};
use mmrsafi::forward::{DenseForward, ForwardOp};
use mmrsafi::linops::{DenseMatrix, FilterBank, KernelConstraint};
use mmrsafi::oracle::{
    admm_full_oracle, admm_prox_oracle, dense_bank_matrix, dense_mask_mmr, dense_mask_safi,
    dense_objective, jacobi_singular_values, jacobi_svd_norm, AdmmConfig,
};
use mmrsafi::prox::{prox_weighted_l1, ConstraintSet, ProxConfig, WeightedAnalysisOperator};
use mmrsafi::scalar::max_abs_diff;
use mmrsafi::schemes::{
    default_safi_model, default_tv_model, eval_objective, mask_mmr, mask_safi, random_mmr_model,
    random_safi_model, MmrModel, SafiModel,
};
use mmrsafi::tensor::{Image, Rng};

#[test]
fn bank_forward_matches_explicit_circulant() {
    let mut rng = Rng::new(11);
    let layouts: [&[(usize, usize, usize)]; 3] = [
        &[(1, 3, 1)],
        &[(1, 2, 1), (2, 4, 2)],
        &[(2, 2, 2), (2, 2, 1)],
    ];
    for (i, layout) in layouts.iter().enumerate() {
        let bank = FilterBank::<f64>::random(
            layout,
            3 + 2 * (i % 2),
            KernelConstraint::Unconstrained,
            1.0,
            &mut rng,
        )
        .unwrap();
        let (h, w) = (5, 7);
        let x: Vec<f64> = (0..bank.in_channels() * h * w)
            .map(|_| rng.next_gaussian())
            .collect();
        let stack =
            mmrsafi::tensor::ChannelStack::from_vec(bank.in_channels(), h, w, x.clone()).unwrap();
        let fast = bank.apply_stack(&stack).unwrap().into_vec();
        let dense = dense_bank_matrix(&bank, h, w).matvec(&x);
        assert!(max_abs_diff(&fast, &dense) < 1e-12);
    }
}

#[test]
fn bank_spectral_norm_matches_jacobi() {
    let mut rng = Rng::new(12);
    for constraint in [KernelConstraint::ZeroMean, KernelConstraint::Unconstrained] {
        let bank = FilterBank::<f64>::random(&[(1, 3, 1)], 3, constraint, 1.0, &mut rng).unwrap();
        let exact = bank.spectral_norm(8, 8).unwrap();
        let svd = jacobi_svd_norm(&dense_bank_matrix(&bank, 8, 8));
        assert!((exact - svd).abs() < 1e-10 * svd, "{exact} vs {svd}");
    }
}

#[test]
fn jacobi_recovers_known_spectrum() {
    let mut s = jacobi_singular_values(&DenseMatrix::from_diagonal(&[0.5, 4.0, 2.0, 1.0]));
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(s, vec![0.5, 1.0, 2.0, 4.0]);
}

#[test]
fn masks_match_dense_composition() {
    let mut rng = Rng::new(13);
    let (h, w) = (6, 5);
    for _ in 0..10 {
        let x = Image::gaussian(h, w, 1.0, &mut rng);
        let m: MmrModel<f64> =
            random_mmr_model(1 + rng.below(3), 1 + rng.below(2), &mut rng).unwrap();
        let fast = mask_mmr(&m, &x).unwrap();
        assert!(max_abs_diff(fast.as_slice(), &dense_mask_mmr(&m, x.as_slice(), h, w)) < 1e-12);
        let s: SafiModel<f64> = random_safi_model(1 + rng.below(3), &mut rng).unwrap();
        let fast = mask_safi(&s, &x).unwrap();
        assert!(max_abs_diff(fast.as_slice(), &dense_mask_safi(&s, x.as_slice(), h, w)) < 1e-12);
    }
    let x = phantom_crop(8);
    let fast = mask_safi(&default_safi_model(), &x).unwrap();
    assert!(
        max_abs_diff(
            fast.as_slice(),
            &dense_mask_safi(&default_safi_model(), x.as_slice(), 8, 8)
        ) < 1e-12
    );
}

fn phantom_crop(n: usize) -> Image<f64> {
    let p: Image<f64> = mmrsafi::io::phantom();
    let mut out = Image::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, p.get(20 + i, 20 + j));
        }
    }
    out
}

#[test]
fn objective_matches_quadrature() {
    let mut rng = Rng::new(14);
    let (h, w) = (4, 4);
    for _ in 0..10 {
        let m: MmrModel<f64> = random_mmr_model(1 + rng.below(2), 1, &mut rng).unwrap();
        let hd = DenseMatrix::random_gaussian(10, h * w, &mut rng);
        let fwd = DenseForward::new(hd.clone(), h, w).unwrap();
        let y: Vec<f64> = (0..10).map(|_| rng.next_gaussian()).collect();
        let x = Image::gaussian(h, w, 0.5, &mut rng);
        let fast = eval_objective(&m, &fwd, &y, &x).unwrap();
        let slow = dense_objective(&m, &hd, &y, x.as_slice(), h, w);
        assert!(
            (fast - slow).abs() < 1e-10 * fast.abs().max(1.0),
            "{fast} vs {slow}"
        );
    }
    let m = default_tv_model::<f64>();
    let x = phantom_crop(8);
    let fwd = ForwardOp::identity(8, 8);
    let y = x
        .add_scaled(0.1, &Image::gaussian(8, 8, 1.0, &mut rng))
        .into_vec();
    let fast = eval_objective(&m, &fwd, &y, &x).unwrap();
    let slow = dense_objective(&m, &DenseMatrix::identity(64), &y, x.as_slice(), 8, 8);
    assert!((fast - slow).abs() < 1e-10 * fast);
}

#[test]
fn full_oracle_with_identity_is_prox_oracle() {
    let mut rng = Rng::new(15);
    let bank = FilterBank::<f64>::forward_differences();
    let weights = uniform_stack(2, 4, 4, &mut rng);
    let l = dense_weighted(&bank, &weights);
    let z = Image::<f64>::gaussian(4, 4, 1.0, &mut rng).into_vec();
    let cfg = AdmmConfig::default();
    let a = admm_prox_oracle(&z, &l, 0.4, &ConstraintSet::AllSpace, &cfg).unwrap();
    let b = admm_full_oracle(
        &DenseMatrix::identity(16),
        &z,
        &l,
        0.4,
        &ConstraintSet::AllSpace,
        &cfg,
    )
    .unwrap();
    assert!(max_abs_diff(&a.x, &b.x) < 1e-8);
    assert!(a.kkt_residual < 1e-8 && b.kkt_residual < 1e-8);
}

#[test]
fn fbs_objective_bracketed_by_admm() {
    let mut rng = Rng::new(16);
    let (h, w) = (4, 4);
    let bank = FilterBank::<f64>::forward_differences();
    let cfg = SolverConfig {
        k_fbs: 20000,
        k_prox: 20000,
        tolerances: Tolerances::Fixed {
            fbs: 1e-12,
            prox: 1e-12,
        },
        ..SolverConfig::default()
    };
    for i in 0..5 {
        let hd = DenseMatrix::random_gaussian(12, h * w, &mut rng);
        let fwd = DenseForward::new(hd.clone(), h, w).unwrap();
        let y: Vec<f64> = (0..12).map(|_| rng.next_gaussian()).collect();
        let weights = uniform_stack(2, h, w, &mut rng);
        let lambda = rng.uniform_in(0.05, 0.5);
        let set = if i % 2 == 0 {
            ConstraintSet::AllSpace
        } else {
            ConstraintSet::Box {
                lower: -0.5,
                upper: 0.5,
            }
        };
        let oracle = admm_full_oracle(
            &hd,
            &y,
            &dense_weighted(&bank, &weights),
            lambda,
            &set,
            &AdmmConfig::default(),
        )
        .unwrap();
        assert!(oracle.kkt_residual < 1e-8, "KKT {}", oracle.kkt_residual);
        let l = WeightedAnalysisOperator::new(&bank, weights).unwrap();
        let out = fbs_solve(
            &fwd,
            &y,
            &l,
            lambda,
            &Image::zeros(h, w),
            1,
            &cfg,
            &set,
            None,
        )
        .unwrap();
        let f_fbs = convex_objective(&fwd, &y, &l, lambda, &out.x).unwrap();
        let f_admm = convex_objective(
            &fwd,
            &y,
            &l,
            lambda,
            &Image::from_vec(h, w, oracle.x.clone()).unwrap(),
        )
        .unwrap();
        assert!(f_admm <= f_fbs + 1e-6, "{f_admm} > {f_fbs}");
        assert!(f_fbs - f_admm >= -1e-6);
        assert!(max_abs_diff(out.x.as_slice(), &oracle.x) < 1e-5);
    }
}

#[test]
fn admm_rejects_oversized_problems() {
    let z = vec![0.0; 65];
    let l = DenseMatrix::identity(65);
    assert!(admm_prox_oracle(
        &z,
        &l,
        1.0,
        &ConstraintSet::AllSpace,
        &AdmmConfig::default()
    )
    .is_err());
}

#[test]
fn prox_does_not_stop_on_a_repeated_extrapolated_iterate() {
    // Instance 12 of this stream once produced x_{k+1} = x_k after a momentum
    // step while still 2.6e-4 away from the optimum.
    let mut rng = Rng::new(1);
    let bank = FilterBank::<f64>::forward_differences();
    let cfg = ProxConfig {
        max_iter: 200_000,
        epsilon: 1e-13,
        alpha: None,
    };
    for i in 0..13 {
        let gamma = [0.05, 0.3, 1.0][i % 3];
        let set = [
            ConstraintSet::AllSpace,
            ConstraintSet::Box {
                lower: 0.0,
                upper: 1.0,
            },
        ][(i / 3) % 2];
        let weights = uniform_stack(2, 8, 8, &mut rng);
        let z = Image::gaussian(8, 8, 1.0, &mut rng).add_scaled(1.0, &Image::filled(8, 8, 0.5));
        if i < 12 {
            continue;
        }
        let oracle = admm_prox_oracle(
            z.as_slice(),
            &dense_weighted(&bank, &weights),
            gamma,
            &set,
            &AdmmConfig::default(),
        )
        .unwrap();
        let l = WeightedAnalysisOperator::new(&bank, weights).unwrap();
        let out = prox_weighted_l1(&z, &l, gamma, &set, &cfg, None).unwrap();
        assert!(max_abs_diff(out.x.as_slice(), &oracle.x) < 1e-6);
    }
}
