//! Independent dense reference computations for tests: ADMM solvers with KKT
//! certificates, finite differences, quadrature, Jacobi SVD and explicit
//! circulant matrices. Everything here works in `f64` and avoids the
//! convolution and prox code paths it is compared against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linops::{DenseMatrix, FilterBank};
use crate::prox::ConstraintSet;
use crate::schemes::{MmrModel, SafiModel};
use crate::splines::ConcavePotential;

/// Problem dimension cap for the dense oracles.
pub const ORACLE_LIMIT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    pub iters: usize,
    pub tol: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            iters: 20000,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdmmSolution {
    pub x: Vec<f64>,
    /// Multiplier of the constraint `v = Lx`, with `‖u‖∞ ≤ λ` at optimum.
    pub u: Vec<f64>,
    pub iterations: usize,
    /// Max of the stationarity, dual-feasibility and complementarity residuals.
    pub kkt_residual: f64,
}

fn to_na(m: &DenseMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn project(set: &ConstraintSet<f64>, v: f64) -> f64 {
    match *set {
        ConstraintSet::AllSpace => v,
        ConstraintSet::Box { lower, upper } => v.max(lower).min(upper),
    }
}

/// KKT residual of `min_{x ∈ X} q(x) + λ‖Lx‖₁` given `∇q(x)` and a multiplier `u`.
pub fn kkt_residual(
    grad_q: &[f64],
    l: &DenseMatrix<f64>,
    lambda: f64,
    set: &ConstraintSet<f64>,
    x: &[f64],
    u: &[f64],
) -> f64 {
    let ltu = l.transpose_matvec(u);
    let stationarity = x
        .iter()
        .zip(grad_q.iter().zip(&ltu))
        .map(|(&xi, (&g, &t))| (xi - project(set, xi - (g + t))).abs())
        .fold(0.0, f64::max);
    let feasibility = u
        .iter()
        .map(|&ui| (ui.abs() - lambda).max(0.0))
        .fold(0.0, f64::max);
    let lx = l.matvec(x);
    let complementarity = lx
        .iter()
        .zip(u)
        .map(|(&a, &ui)| (lambda * a.abs() - ui * a).abs())
        .fold(0.0, f64::max);
    stationarity.max(feasibility).max(complementarity)
}

/// ADMM for `min_{x ∈ X} ½xᵀQx − cᵀx + λ‖Lx‖₁` with exact Cholesky solves.
fn admm_core(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    l: &DenseMatrix<f64>,
    lambda: f64,
    set: &ConstraintSet<f64>,
    cfg: &AdmmConfig,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    if !(cfg.rho > 0.0) {
        return Err(Error::InvalidArgument(
            "ADMM penalty must be positive".into(),
        ));
    }
    let n = q.nrows();
    let m = l.rows();
    let rho = cfg.rho;
    let boxed = matches!(set, ConstraintSet::Box { .. });
    let ln = to_na(l);
    let mut system = q + (ln.transpose() * &ln) * rho;
    if boxed {
        system += DMatrix::identity(n, n) * rho;
    }
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::Singular("H and L share a nontrivial common kernel".into()))?;
    let diag = chol.l_dirty().diagonal();
    if diag.min() <= 1e-7 * diag.max() {
        return Err(Error::Singular(
            "H and L share a nontrivial common kernel".into(),
        ));
    }

    let mut v = DVector::zeros(m);
    let mut a = DVector::zeros(m);
    let mut s = DVector::zeros(n);
    let mut b = DVector::zeros(n);
    for it in 1..=cfg.iters {
        let mut rhs = c + ln.transpose() * (&v - &a) * rho;
        if boxed {
            rhs += (&s - &b) * rho;
        }
        let x = chol.solve(&rhs);
        let lx = &ln * &x;
        let v_old = v.clone();
        v = (&lx + &a).map(|t| soft(t, lambda / rho));
        let s_old = s.clone();
        if boxed {
            s = (&x + &b).map(|t| project(set, t));
        }
        a += &lx - &v;
        let mut primal = (&lx - &v).amax();
        let mut dual = (ln.transpose() * (&v - &v_old)).amax() * rho;
        if boxed {
            b += &x - &s;
            primal = primal.max((&x - &s).amax());
            dual = dual.max((&s - &s_old).amax() * rho);
        }
        if primal < cfg.tol && dual < cfg.tol {
            let xs: Vec<f64> = if boxed {
                s.iter().copied().collect()
            } else {
                x.iter().copied().collect()
            };
            let u = a.iter().map(|&ai| ai * rho).collect();
            return Ok((xs, u, it));
        }
    }
    Err(Error::OracleNotConverged(format!(
        "ADMM after {} iterations",
        cfg.iters
    )))
}

fn check_dims(n: usize) -> Result<()> {
    if n > ORACLE_LIMIT {
        return Err(Error::TooLarge(n, ORACLE_LIMIT));
    }
    Ok(())
}

/// `argmin_{w ∈ X} ½‖w − z‖² + γ‖Lw‖₁` by ADMM on the splitting `v = Lw`.
pub fn admm_prox_oracle(
    z: &[f64],
    l: &DenseMatrix<f64>,
    gamma: f64,
    set: &ConstraintSet<f64>,
    cfg: &AdmmConfig,
) -> Result<AdmmSolution> {
    let n = z.len();
    check_dims(n)?;
    if l.cols() != n {
        return Err(Error::ShapeMismatch("L does not match z".into()));
    }
    if gamma == 0.0 {
        let x: Vec<f64> = z.iter().map(|&v| project(set, v)).collect();
        return Ok(AdmmSolution {
            x,
            u: vec![0.0; l.rows()],
            iterations: 0,
            kkt_residual: 0.0,
        });
    }
    let q = DMatrix::identity(n, n);
    let c = DVector::from_column_slice(z);
    let (x, u, iterations) = admm_core(&q, &c, l, gamma, set, cfg)?;
    let grad: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
    let kkt_residual = kkt_residual(&grad, l, gamma, set, &x, &u);
    Ok(AdmmSolution {
        x,
        u,
        iterations,
        kkt_residual,
    })
}

/// `argmin_{x ∈ X} ½‖Hx − y‖² + λ‖Lx‖₁`.
pub fn admm_full_oracle(
    h: &DenseMatrix<f64>,
    y: &[f64],
    l: &DenseMatrix<f64>,
    lambda: f64,
    set: &ConstraintSet<f64>,
    cfg: &AdmmConfig,
) -> Result<AdmmSolution> {
    let n = h.cols();
    check_dims(n)?;
    if h.rows() != y.len() || l.cols() != n {
        return Err(Error::ShapeMismatch("H, y and L are inconsistent".into()));
    }
    let hn = to_na(h);
    let q = hn.transpose() * &hn;
    let c = hn.transpose() * DVector::from_column_slice(y);
    let (x, u, iterations) = admm_core(&q, &c, l, lambda, set, cfg)?;
    let r: Vec<f64> = h.matvec(&x).iter().zip(y).map(|(a, b)| a - b).collect();
    let grad = h.transpose_matvec(&r);
    let kkt_residual = kkt_residual(&grad, l, lambda, set, &x, &u);
    Ok(AdmmSolution {
        x,
        u,
        iterations,
        kkt_residual,
    })
}

/// Least-squares solution of the normal equations `HᵀH x = Hᵀy`.
pub fn normal_equations(h: &DenseMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let hn = to_na(h);
    let q = hn.transpose() * &hn;
    let c = hn.transpose() * DVector::from_column_slice(y);
    let chol = q
        .cholesky()
        .ok_or_else(|| Error::Singular("H does not have full column rank".into()))?;
    Ok(chol.solve(&c).iter().copied().collect())
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h`.
pub fn finite_diff_gradient(fun: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = p[i];
            p[i] = xi + h;
            let fp = fun(&p);
            p[i] = xi - h;
            let fm = fun(&p);
            p[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `ψ(x) = ∫_0^x ψ'(t) dt` by quadrature over each knot interval of `ψ'`.
pub fn potential_by_quadrature(p: &ConcavePotential<f64>, x: f64) -> f64 {
    let step = p.sigma().delta() / p.r();
    let mut total = 0.0;
    let mut a = 0.0;
    while a < x {
        let b = (a + step).min(x);
        total += adaptive_simpson(|t| p.derivative(t), a, b, 1e-14);
        a = b;
    }
    total
}

/// Largest singular value by one-sided Jacobi orthogonalization.
pub fn jacobi_svd_norm(a: &DenseMatrix<f64>) -> f64 {
    jacobi_singular_values(a).into_iter().fold(0.0, f64::max)
}

/// All singular values (unsorted) by one-sided Jacobi on the columns.
pub fn jacobi_singular_values(a: &DenseMatrix<f64>) -> Vec<f64> {
    let a = if a.cols() > a.rows() {
        a.transpose()
    } else {
        a.clone()
    };
    let (m, n) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..m).map(|r| a.get(r, c)).collect())
        .collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    cols.iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Explicit matrix of a bank on `height x width` images, built entry by
/// entry from the cross-correlation definition with periodic wrap.
pub fn dense_bank_matrix(bank: &FilterBank<f64>, height: usize, width: usize) -> DenseMatrix<f64> {
    let np = height * width;
    let mut total: Option<DenseMatrix<f64>> = None;
    for layer in bank.layers() {
        let k = layer.ksize();
        let r = (k / 2) as isize;
        let ipg = layer.in_channels() / layer.groups();
        let opg = layer.out_channels() / layer.groups();
        let mut m = DenseMatrix::zeros(layer.out_channels() * np, layer.in_channels() * np);
        for o in 0..layer.out_channels() {
            let g = o / opg;
            for j in 0..ipg {
                let ic = g * ipg + j;
                let kern = layer.kernel(o, j);
                for i in 0..height {
                    for jj in 0..width {
                        let row = o * np + i * width + jj;
                        for a in 0..k {
                            for b in 0..k {
                                let si = (i as isize + a as isize - r).rem_euclid(height as isize)
                                    as usize;
                                let sj = (jj as isize + b as isize - r).rem_euclid(width as isize)
                                    as usize;
                                let col = ic * np + si * width + sj;
                                m.set(row, col, m.get(row, col) + kern[a * k + b]);
                            }
                        }
                    }
                }
            }
        }
        total = Some(match total {
            None => m,
            Some(prev) => m.matmul(&prev).expect("consistent stages"),
        });
    }
    total.expect("bank has at least one stage")
}

fn per_block(v: &mut [f64], block: usize, f: impl Fn(usize, f64) -> f64) {
    for (i, x) in v.iter_mut().enumerate() {
        *x = f(i / block, *x);
    }
}

/// `Bᵀ ψ'(B |W x|)` from explicit matrices.
pub fn dense_mask_mmr(m: &MmrModel<f64>, x: &[f64], height: usize, width: usize) -> Vec<f64> {
    let np = height * width;
    let w = dense_bank_matrix(&m.w, height, width);
    let b = dense_bank_matrix(&m.b, height, width);
    let s: Vec<f64> = w.matvec(x).into_iter().map(f64::abs).collect();
    let mut t = b.matvec(&s);
    per_block(&mut t, np, |c, v| m.potentials[c].derivative(v));
    b.transpose_matvec(&t)
}

/// `φ₃(B̂ φ₂(B̃ φ₁(W̃ x)))` from explicit matrices.
pub fn dense_mask_safi(m: &SafiModel<f64>, x: &[f64], height: usize, width: usize) -> Vec<f64> {
    let np = height * width;
    let mut a = dense_bank_matrix(&m.wt, height, width).matvec(x);
    per_block(&mut a, np, |c, v| m.phi1[c].eval(v));
    let mut b = dense_bank_matrix(&m.bt, height, width).matvec(&a);
    per_block(&mut b, np, |c, v| m.phi2[c].eval(v));
    let mut out = dense_bank_matrix(&m.bh, height, width).matvec(&b);
    per_block(&mut out, np, |c, v| m.phi3[c].eval(v));
    out
}

/// `½‖Hx − y‖² + λ Σ ψ_c((B|Wx|)_c)` with explicit matrices and quadrature for `ψ`.
pub fn dense_objective(
    m: &MmrModel<f64>,
    h: &DenseMatrix<f64>,
    y: &[f64],
    x: &[f64],
    height: usize,
    width: usize,
) -> f64 {
    let np = height * width;
    let r: Vec<f64> = h.matvec(x).iter().zip(y).map(|(a, b)| a - b).collect();
    let data = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let w = dense_bank_matrix(&m.w, height, width);
    let b = dense_bank_matrix(&m.b, height, width);
    let s: Vec<f64> = w.matvec(x).into_iter().map(f64::abs).collect();
    let t = b.matvec(&s);
    let reg: f64 = t
        .iter()
        .enumerate()
        .map(|(i, &v)| potential_by_quadrature(&m.potentials[i / np], v))
        .sum();
    data + m.lambda * reg
}
