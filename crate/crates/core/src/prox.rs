//! Proximal operator of `γ‖L·‖₁` restricted to a box or all space, computed
//! by accelerated projected gradient on the dual.

use crate::error::{Error, Result};
use crate::linops::{FilterBank, LinearOperator};
use crate::scalar::Real;
use crate::splines::clip_unchecked;
use crate::tensor::{ChannelStack, Image, Rng};

/// Closed convex set `X` the reconstruction is confined to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstraintSet<T> {
    AllSpace,
    Box { lower: T, upper: T },
}

impl<T: Real> ConstraintSet<T> {
    pub fn boxed(lower: T, upper: T) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidArgument(format!(
                "box [{lower}, {upper}] is empty"
            )));
        }
        Ok(ConstraintSet::Box { lower, upper })
    }

    #[inline]
    pub fn project_value(&self, v: T) -> T {
        match *self {
            ConstraintSet::AllSpace => v,
            ConstraintSet::Box { lower, upper } => clip_unchecked(v, lower, upper),
        }
    }

    pub fn project_slice(&self, values: &mut [T]) {
        if let ConstraintSet::Box { .. } = self {
            values.iter_mut().for_each(|v| *v = self.project_value(*v));
        }
    }

    pub fn contains(&self, values: &[T]) -> bool {
        match *self {
            ConstraintSet::AllSpace => true,
            ConstraintSet::Box { lower, upper } => values.iter().all(|&v| v >= lower && v <= upper),
        }
    }
}

/// Orthogonal projection onto `X`.
pub fn proj_constraint<T: Real>(set: &ConstraintSet<T>, z: &Image<T>) -> Image<T> {
    z.map(|v| set.project_value(v))
}

/// `L = [diag(Λ_c) W_c]_c`. Missing weights mean `Λ ≡ 1`.
#[derive(Clone, Debug)]
pub struct WeightedAnalysisOperator<'a, T: Real> {
    bank: &'a FilterBank<T>,
    weights: Option<ChannelStack<T>>,
    height: usize,
    width: usize,
}

impl<'a, T: Real> WeightedAnalysisOperator<'a, T> {
    pub fn new(bank: &'a FilterBank<T>, weights: ChannelStack<T>) -> Result<Self> {
        if bank.in_channels() != 1 {
            return Err(Error::InvalidArgument(
                "analysis bank must act on a single image".into(),
            ));
        }
        if weights.channels() != bank.out_channels() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight channels for a {}-channel bank",
                weights.channels(),
                bank.out_channels()
            )));
        }
        if weights
            .as_slice()
            .iter()
            .any(|&w| !(w >= T::zero()) || !w.is_finite())
        {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            bank,
            height: weights.height(),
            width: weights.width(),
            weights: Some(weights),
        })
    }

    /// Unweighted `L = W` on `height x width` images.
    pub fn unweighted(bank: &'a FilterBank<T>, height: usize, width: usize) -> Result<Self> {
        if bank.in_channels() != 1 {
            return Err(Error::InvalidArgument(
                "analysis bank must act on a single image".into(),
            ));
        }
        Ok(Self {
            bank,
            weights: None,
            height,
            width,
        })
    }

    pub fn bank(&self) -> &FilterBank<T> {
        self.bank
    }

    pub fn weights(&self) -> Option<&ChannelStack<T>> {
        self.weights.as_ref()
    }

    pub fn channels(&self) -> usize {
        self.bank.out_channels()
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn check_image(&self, x: &Image<T>) -> Result<()> {
        if x.shape() != (self.height, self.width) {
            return Err(Error::ShapeMismatch(format!(
                "image {:?} for operator on {:?}",
                x.shape(),
                (self.height, self.width)
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Image<T>) -> Result<ChannelStack<T>> {
        self.check_image(x)?;
        let mut s = self.bank.forward(x);
        if let Some(w) = &self.weights {
            for (v, &m) in s.as_mut_slice().iter_mut().zip(w.as_slice()) {
                *v = *v * m;
            }
        }
        Ok(s)
    }

    pub fn adjoint(&self, u: &ChannelStack<T>) -> Result<Image<T>> {
        if u.shape() != (self.channels(), self.height, self.width) {
            return Err(Error::ShapeMismatch(format!(
                "dual variable {:?} for operator with {} channels on {:?}",
                u.shape(),
                self.channels(),
                (self.height, self.width)
            )));
        }
        match &self.weights {
            None => self.bank.adjoint(u),
            Some(w) => {
                let mut scaled = u.clone();
                for (v, &m) in scaled.as_mut_slice().iter_mut().zip(w.as_slice()) {
                    *v = *v * m;
                }
                self.bank.adjoint(&scaled)
            }
        }
    }

    /// Upper bound on `‖L‖₂`: `max|Λ| · ‖W‖₂`, exact when `Λ` is constant.
    pub fn norm_bound(&self) -> T {
        let w_norm = self
            .bank
            .spectral_norm(self.height, self.width)
            .unwrap_or_else(|| {
                let op = crate::linops::BankOperator {
                    bank: self.bank,
                    height: self.height,
                    width: self.width,
                };
                crate::linops::operator_norm(&op, 100, &mut Rng::new(0)).unwrap_or(T::zero())
                    / T::lit(0.999)
            });
        let max_weight = self.weights.as_ref().map_or(T::one(), |w| w.max_abs());
        max_weight * w_norm
    }
}

impl<T: Real> LinearOperator<T> for WeightedAnalysisOperator<'_, T> {
    fn input_len(&self) -> usize {
        self.height * self.width
    }

    fn output_len(&self) -> usize {
        self.channels() * self.height * self.width
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        let img = Image::from_vec(self.height, self.width, x.to_vec()).expect("input length");
        WeightedAnalysisOperator::apply(self, &img)
            .expect("shape checked")
            .into_vec()
    }

    fn apply_adjoint(&self, y: &[T]) -> Vec<T> {
        let u = ChannelStack::from_vec(self.channels(), self.height, self.width, y.to_vec())
            .expect("output length");
        self.adjoint(&u).expect("shape checked").into_vec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxConfig<T> {
    /// `K_prox`
    pub max_iter: usize,
    /// Relative primal-change tolerance `ε_prox`.
    pub epsilon: T,
    /// Dual step; `None` uses `1 / ‖L‖²` from [`WeightedAnalysisOperator::norm_bound`].
    pub alpha: Option<T>,
}

impl<T: Real> Default for ProxConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 500,
            epsilon: T::lit(1e-5),
            alpha: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProxOutput<T: Real> {
    pub x: Image<T>,
    /// Final dual iterate, reusable as a warm start.
    pub u: ChannelStack<T>,
    pub iterations: usize,
    /// `false` when `max_iter` was exhausted before the stopping rule fired.
    pub converged: bool,
}

/// `t_{k+1} = (k + 5) / 3`.
#[inline]
pub(crate) fn momentum<T: Real>(k: usize) -> T {
    T::from_usize_lossy(k + 5) / T::lit(3.0)
}

/// `L Proj_X{z − Lᵀu}`, the gradient of the concave dual function [`dual_value`].
pub fn dual_gradient<T: Real>(
    l: &WeightedAnalysisOperator<'_, T>,
    set: &ConstraintSet<T>,
    z: &Image<T>,
    u: &ChannelStack<T>,
) -> Result<ChannelStack<T>> {
    let ltu = l.adjoint(u)?;
    z.same_shape(&ltu)?;
    let mut p = z.add_scaled(-T::one(), &ltu);
    set.project_slice(p.as_mut_slice());
    l.apply(&p)
}

/// `½ dist_X(z − Lᵀu)² − ½‖z − Lᵀu‖²`: the dual of the prox problem up to the
/// constant `½‖z‖²`, to be maximized over `‖u‖∞ ≤ γ`.
pub fn dual_value<T: Real>(
    l: &WeightedAnalysisOperator<'_, T>,
    set: &ConstraintSet<T>,
    z: &Image<T>,
    u: &ChannelStack<T>,
) -> Result<T> {
    let ltu = l.adjoint(u)?;
    z.same_shape(&ltu)?;
    let half = T::lit(0.5);
    let value = z
        .as_slice()
        .iter()
        .zip(ltu.as_slice())
        .fold(T::zero(), |acc, (&zi, &li)| {
            let p = zi - li;
            let d = p - set.project_value(p);
            acc + half * d * d - half * p * p
        });
    Ok(value)
}

/// `½‖x − z‖² + γ‖Lx‖₁`
pub fn prox_objective<T: Real>(
    l: &WeightedAnalysisOperator<'_, T>,
    gamma: T,
    z: &Image<T>,
    x: &Image<T>,
) -> Result<T> {
    let d = x.distance(z);
    let lx = l.apply(x)?;
    let l1 = lx.as_slice().iter().fold(T::zero(), |a, v| a + v.abs());
    Ok(T::lit(0.5) * d * d + gamma * l1)
}

/// `argmin_{w ∈ X} ½‖w − z‖² + γ‖Lw‖₁` via accelerated projected gradient on the dual.
///
/// The dual iterate starts from `warm_u` (clipped to the feasible box) when
/// given and from `Lz` otherwise.
pub fn prox_weighted_l1<T: Real>(
    z: &Image<T>,
    l: &WeightedAnalysisOperator<'_, T>,
    gamma: T,
    set: &ConstraintSet<T>,
    cfg: &ProxConfig<T>,
    warm_u: Option<&ChannelStack<T>>,
) -> Result<ProxOutput<T>> {
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "prox weight gamma = {gamma}"
        )));
    }
    if cfg.max_iter == 0 {
        return Err(Error::InvalidArgument("K_prox must be >= 1".into()));
    }
    if !z.is_finite() {
        return Err(Error::NumericalFailure("prox input"));
    }
    let (h, w) = l.image_shape();
    let channels = l.channels();
    let alpha = match cfg.alpha {
        Some(a) if a > T::zero() => a,
        Some(a) => return Err(Error::InvalidArgument(format!("dual step alpha = {a}"))),
        None => {
            let n = l.norm_bound();
            if n == T::zero() {
                return Ok(ProxOutput {
                    x: proj_constraint(set, z),
                    u: ChannelStack::zeros(channels, h, w),
                    iterations: 0,
                    converged: true,
                });
            }
            T::one() / (n * n)
        }
    };

    let mut u = match warm_u {
        Some(u0) => {
            if u0.shape() != (channels, h, w) {
                return Err(Error::ShapeMismatch("warm-start dual variable".into()));
            }
            u0.map(|v| clip_unchecked(v, -gamma, gamma))
        }
        None => l.apply(z)?,
    };
    let mut ltu = l.adjoint(&u)?;
    let mut ltv = ltu.clone();
    let mut v = u.clone();
    let mut x = z.add_scaled(-T::one(), &ltu);
    set.project_slice(x.as_mut_slice());
    let mut t = T::one();
    let mut converged = false;
    let mut iterations = 0;
    // Whether `v` carries momentum; a repeated primal iterate only certifies
    // convergence after a plain projected-gradient step.
    let mut extrapolated = false;

    for k in 1..=cfg.max_iter {
        iterations = k;
        let mut p = z.add_scaled(-T::one(), &ltv);
        set.project_slice(p.as_mut_slice());
        let grad = l.apply(&p)?;
        let mut u_next = v.clone();
        for (un, &g) in u_next.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *un = clip_unchecked(*un + alpha * g, -gamma, gamma);
        }
        let t_next = momentum::<T>(k);
        let beta = (t - T::one()) / t_next;
        let ltu_next = l.adjoint(&u_next)?;

        for ((vv, &un), &uo) in v
            .as_mut_slice()
            .iter_mut()
            .zip(u_next.as_slice())
            .zip(u.as_slice())
        {
            *vv = un + beta * (un - uo);
        }
        for ((lv, &ln), &lo) in ltv
            .as_mut_slice()
            .iter_mut()
            .zip(ltu_next.as_slice())
            .zip(ltu.as_slice())
        {
            *lv = ln + beta * (ln - lo);
        }

        let mut x_next = z.add_scaled(-T::one(), &ltu_next);
        set.project_slice(x_next.as_mut_slice());
        if !x_next.is_finite() {
            return Err(Error::NumericalFailure("dual prox iteration"));
        }
        let change = x_next.distance(&x);
        let reference = x.norm();
        u = u_next;
        ltu = ltu_next;
        x = x_next;
        t = t_next;
        if change == T::zero() && extrapolated {
            v = u.clone();
            ltv = ltu.clone();
            t = T::one();
            extrapolated = false;
            continue;
        }
        if change < cfg.epsilon * reference || change == T::zero() {
            converged = true;
            break;
        }
        extrapolated = beta != T::zero();
    }

    Ok(ProxOutput {
        x,
        u,
        iterations,
        converged,
    })
}
