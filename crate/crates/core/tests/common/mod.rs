#![allow(dead_code)]

use mmrsafi::fbs::{SolverConfig, Tolerances};
use mmrsafi::forward::{add_noise, make_cartesian_mask, ForwardOp, Measurements};
use mmrsafi::io::phantom;
use mmrsafi::linops::{DenseMatrix, FilterBank};
use mmrsafi::oracle::dense_bank_matrix;
use mmrsafi::tensor::{ChannelStack, Image, Rng};

pub const NOISE_SEED: u64 = 7;
pub const MRI_SEED: u64 = 3;
pub const MRI_LAMBDA: f64 = 0.002;

/// Noisy phantom for denoising runs.
pub fn noisy_phantom(sigma: f64, seed: u64) -> (Image<f64>, Image<f64>) {
    let x0: Image<f64> = phantom();
    let y = add_noise(&Measurements::Image(x0.clone()), sigma, &mut Rng::new(seed)).unwrap();
    let (h, w) = x0.shape();
    let y = Image::from_vec(h, w, y.as_slice().to_vec()).unwrap();
    (x0, y)
}

/// 4-fold Cartesian MRI problem on the phantom: `(x0, H, y)`.
pub fn mri_problem() -> (Image<f64>, ForwardOp<f64>, Vec<f64>) {
    let x0: Image<f64> = phantom();
    let mut rng = Rng::new(MRI_SEED);
    let mask = make_cartesian_mask(64, 4, 0.08, &mut rng).unwrap();
    let h = ForwardOp::masked_dft(64, 64, mask).unwrap();
    let y = add_noise(&h.apply(&x0).unwrap(), 2e-3, &mut rng).unwrap();
    (x0, h, y.as_slice().to_vec())
}

/// Inner solves accurate enough that outer residuals reflect the scheme and
/// not the inexactness of the prox.
pub fn tight_config() -> SolverConfig<f64> {
    SolverConfig {
        k_prox: 20000,
        tolerances: Tolerances::Fixed {
            fbs: 1e-8,
            prox: 1e-9,
        },
        ..SolverConfig::default()
    }
}

pub fn uniform_stack(c: usize, h: usize, w: usize, rng: &mut Rng) -> ChannelStack<f64> {
    let data = (0..c * h * w).map(|_| rng.next_uniform()).collect();
    ChannelStack::from_vec(c, h, w, data).unwrap()
}

/// `diag(Λ) D` with `D` the explicit matrix of `bank`.
pub fn dense_weighted(bank: &FilterBank<f64>, weights: &ChannelStack<f64>) -> DenseMatrix<f64> {
    let mut d = dense_bank_matrix(bank, weights.height(), weights.width());
    for (r, &lam) in weights.as_slice().iter().enumerate() {
        for c in 0..d.cols() {
            d.set(r, c, lam * d.get(r, c));
        }
    }
    d
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
