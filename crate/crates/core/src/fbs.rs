//! Accelerated forward-backward splitting for
//! `min_{x ∈ X} ½‖Hx − y‖² + λ‖Lx‖₁`, with the inner/outer tolerance schedules.

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::linops::operator_norm;
use crate::prox::{
    momentum, proj_constraint, prox_weighted_l1, ConstraintSet, ProxConfig,
    WeightedAnalysisOperator,
};
use crate::scalar::{dist2, Real};
use crate::tensor::{ChannelStack, Image, Rng};

/// How the FBS and prox stopping tolerances are chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tolerances<T> {
    /// [`tol_fbs`] for the FBS loop and [`tol_prox`] (or [`tol_prox_denoising`]) inside it.
    Schedule,
    Fixed {
        fbs: T,
        prox: T,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig<T> {
    pub k_out: usize,
    /// Ignored for `H = Id`, where a single step is exact.
    pub k_fbs: usize,
    pub k_prox: usize,
    pub eps_out: T,
    pub tolerances: Tolerances<T>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            k_out: 10,
            k_fbs: 1000,
            k_prox: 500,
            eps_out: T::lit(1e-5),
            tolerances: Tolerances::Schedule,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k_out == 0 || self.k_fbs == 0 || self.k_prox == 0 {
            return Err(Error::InvalidArgument(
                "iteration budgets must be >= 1".into(),
            ));
        }
        if !(self.eps_out > T::zero()) {
            return Err(Error::InvalidArgument("eps_out must be positive".into()));
        }
        if let Tolerances::Fixed { fbs, prox } = self.tolerances {
            if !(fbs > T::zero() && prox > T::zero()) {
                return Err(Error::InvalidArgument(
                    "fixed tolerances must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Iterate state of the accelerated loop.
#[derive(Clone, Debug)]
pub struct FbsState<T: Real> {
    pub x: Image<T>,
    pub x_tilde: Image<T>,
    pub t: T,
    pub k: usize,
}

#[derive(Clone, Debug)]
pub struct FbsOutput<T: Real> {
    pub x: Image<T>,
    /// Last prox dual, `None` when λ = 0.
    pub u: Option<ChannelStack<T>>,
    pub iterations: usize,
    /// FBS stopping rule fired (always true for `H = Id`).
    pub converged: bool,
    /// Every inner prox call met its tolerance.
    pub prox_converged: bool,
}

/// `t_{k+1} = (k + 5) / 3`.
pub fn momentum_next<T: Real>(k: usize) -> Result<T> {
    if k < 1 {
        return Err(Error::InvalidArgument("momentum index starts at 1".into()));
    }
    Ok(momentum(k))
}

/// `1e-3 · 0.01^{k_out/5}` up to `k_out = 5`, then `1e-5`.
pub fn tol_fbs<T: Real>(k_out: usize) -> T {
    if k_out <= 5 {
        T::lit(1e-3) * T::lit(0.01).powf(T::from_usize_lossy(k_out) / T::lit(5.0))
    } else {
        T::lit(1e-5)
    }
}

/// `3ε · (1/9)^{k_fbs/50}` up to `k_fbs = 50`, then `ε/3`.
pub fn tol_prox<T: Real>(k_fbs: usize, eps_fbs: T) -> T {
    if k_fbs <= 50 {
        T::lit(3.0)
            * eps_fbs
            * (T::one() / T::lit(9.0)).powf(T::from_usize_lossy(k_fbs) / T::lit(50.0))
    } else {
        eps_fbs / T::lit(3.0)
    }
}

/// Prox tolerance when `H = Id`: the single prox call follows the outer schedule.
pub fn tol_prox_denoising<T: Real>(k_out: usize) -> T {
    tol_fbs(k_out)
}

/// FBS step `1/‖H‖²`, from the exact norm when the model knows it and from
/// 100 power iterations deflated by 0.999 otherwise.
pub fn fbs_step<T: Real, H: ForwardModel<T> + ?Sized>(h: &H) -> Result<T> {
    let (norm, safety) = match h.exact_norm() {
        Some(n) => (n, T::one()),
        None => (operator_norm(h, 100, &mut Rng::new(0))?, T::lit(0.999)),
    };
    if !(norm > T::zero()) {
        return Err(Error::InvalidArgument("forward operator is zero".into()));
    }
    Ok(safety / (norm * norm))
}

/// `½‖Hx − y‖² + λ‖Lx‖₁`
pub fn convex_objective<T: Real, H: ForwardModel<T> + ?Sized>(
    h: &H,
    y: &[T],
    l: &WeightedAnalysisOperator<'_, T>,
    lambda: T,
    x: &Image<T>,
) -> Result<T> {
    let hx = h.apply(x.as_slice());
    if hx.len() != y.len() {
        return Err(Error::ShapeMismatch("measurement length".into()));
    }
    let d = dist2(&hx, y);
    let lx = l.apply(x)?;
    let l1 = lx.as_slice().iter().fold(T::zero(), |a, v| a + v.abs());
    Ok(T::lit(0.5) * d * d + lambda * l1)
}

fn gradient_point<T: Real, H: ForwardModel<T> + ?Sized>(
    h: &H,
    y: &[T],
    x: &Image<T>,
    alpha: T,
) -> Result<Image<T>> {
    if h.is_identity() {
        let yi = Image::from_vec(x.height(), x.width(), y.to_vec())?;
        return Ok(x.add_scaled(-alpha, &x.add_scaled(-T::one(), &yi)));
    }
    let r: Vec<T> = h
        .apply(x.as_slice())
        .iter()
        .zip(y)
        .map(|(&a, &b)| a - b)
        .collect();
    let g = Image::from_vec(x.height(), x.width(), h.apply_adjoint(&r))?;
    Ok(x.add_scaled(-alpha, &g))
}

/// Solves one reweighted convex problem by accelerated FBS started at `x_init`.
///
/// `k_out` selects the tolerance schedule. The returned iterate is never worse
/// in objective than `x_init`.
#[allow(clippy::too_many_arguments)]
pub fn fbs_solve<T: Real, H: ForwardModel<T> + ?Sized>(
    h: &H,
    y: &[T],
    l: &WeightedAnalysisOperator<'_, T>,
    lambda: T,
    x_init: &Image<T>,
    k_out: usize,
    cfg: &SolverConfig<T>,
    set: &ConstraintSet<T>,
    warm_u: Option<&ChannelStack<T>>,
) -> Result<FbsOutput<T>> {
    cfg.validate()?;
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}")));
    }
    if h.image_shape() != x_init.shape() || l.image_shape() != x_init.shape() {
        return Err(Error::ShapeMismatch(
            "x_init does not match the operators".into(),
        ));
    }
    if y.len() != h.output_len() {
        return Err(Error::ShapeMismatch(format!(
            "{} measurements for a model producing {}",
            y.len(),
            h.output_len()
        )));
    }
    if !x_init.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("FBS input"));
    }

    let identity = h.is_identity();
    let alpha = if identity { T::one() } else { fbs_step(h)? };
    let (eps_fbs, fixed_prox) = match cfg.tolerances {
        Tolerances::Schedule => (tol_fbs(k_out), None),
        Tolerances::Fixed { fbs, prox } => (fbs, Some(prox)),
    };
    let max_iter = if identity { 1 } else { cfg.k_fbs };

    let mut state = FbsState {
        x: x_init.clone(),
        x_tilde: x_init.clone(),
        t: T::one(),
        k: 1,
    };
    let mut u = warm_u.cloned();
    let mut converged = identity;
    let mut prox_converged = true;
    let mut iterations = 0;

    while state.k <= max_iter {
        let k = state.k;
        iterations = k;
        let z = gradient_point(h, y, &state.x_tilde, alpha)?;
        let x_next = if lambda == T::zero() {
            proj_constraint(set, &z)
        } else {
            let epsilon = fixed_prox.unwrap_or_else(|| {
                if identity {
                    tol_prox_denoising(k_out)
                } else {
                    tol_prox(k, eps_fbs)
                }
            });
            let pcfg = ProxConfig {
                max_iter: cfg.k_prox,
                epsilon,
                alpha: None,
            };
            let out = prox_weighted_l1(&z, l, alpha * lambda, set, &pcfg, u.as_ref())?;
            prox_converged &= out.converged;
            u = Some(out.u);
            out.x
        };
        if !x_next.is_finite() {
            return Err(Error::NumericalFailure("FBS iterate"));
        }
        let t_next: T = momentum(k);
        let beta = (state.t - T::one()) / t_next;
        let step = x_next.add_scaled(-T::one(), &state.x);
        let change = step.norm();
        let reference = state.x.norm();
        state.x_tilde = x_next.add_scaled(beta, &step);
        state.x = x_next;
        state.t = t_next;
        state.k += 1;
        if !identity && (change < eps_fbs * reference || change == T::zero()) {
            converged = true;
            break;
        }
    }

    let mut x = state.x;
    if convex_objective(h, y, l, lambda, &x)? > convex_objective(h, y, l, lambda, x_init)? {
        x = x_init.clone();
    }
    Ok(FbsOutput {
        x,
        u: if lambda == T::zero() { None } else { u },
        iterations,
        converged,
        prox_converged,
    })
}
