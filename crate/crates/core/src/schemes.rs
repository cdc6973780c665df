//! Mask generators, the nonconvex objective and its majorizer, and the
//! reweighting outer loops (MMR and SAFI).

use crate::error::{Error, Result};
use crate::fbs::{convex_objective, fbs_solve, SolverConfig};
use crate::forward::ForwardModel;
use crate::linops::{ConvLayer, FilterBank, KernelConstraint};
use crate::prox::{ConstraintSet, WeightedAnalysisOperator};
use crate::scalar::{dist2, Real};
use crate::splines::{clip_unchecked, ConcavePotential, SigmoidSpline, SplineCoeffs};
use crate::tensor::{psnr, ChannelStack, Image, Rng};

/// Per-channel nonnegative weights `Λ_c`.
pub type MaskStack<T> = ChannelStack<T>;

/// Model `f(x) = ½‖Hx − y‖² + λ Σ_c ⟨1, ψ_c(B_c |W_c x|)⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct MmrModel<T: Real> {
    pub w: FilterBank<T>,
    pub b: FilterBank<T>,
    pub potentials: Vec<ConcavePotential<T>>,
    pub lambda: T,
}

impl<T: Real> MmrModel<T> {
    pub fn new(
        w: FilterBank<T>,
        b: FilterBank<T>,
        potentials: Vec<ConcavePotential<T>>,
        lambda: T,
    ) -> Result<Self> {
        let m = Self {
            w,
            b,
            potentials,
            lambda,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn channels(&self) -> usize {
        self.w.out_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let nc = self.channels();
        if self.w.in_channels() != 1 {
            return Err(Error::InvalidArgument(
                "W must act on a single image".into(),
            ));
        }
        if self.b.in_channels() != nc || self.b.out_channels() != nc {
            return Err(Error::ShapeMismatch(format!(
                "B must map {nc} channels to {nc}"
            )));
        }
        if self.b.constraint() != KernelConstraint::PositiveNormalized
            || self.b.layers().iter().any(|l| l.groups() != nc)
        {
            return Err(Error::InvalidArgument(
                "B must be depthwise and positive-normalized".into(),
            ));
        }
        if self.potentials.len() != nc {
            return Err(Error::ShapeMismatch(format!(
                "{} potentials for {nc} channels",
                self.potentials.len()
            )));
        }
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda = {}", self.lambda)));
        }
        Ok(())
    }

    /// `B |W x|`
    fn smoothed_magnitudes(&self, x: &Image<T>) -> ChannelStack<T> {
        let s = self.w.forward(x).map(|v| v.abs());
        self.b.apply_stack(&s).expect("validated channel counts")
    }

    /// `Σ_c ⟨1, ψ_c(B_c |W_c x|)⟩`
    pub fn regularizer(&self, x: &Image<T>) -> T {
        let t = self.smoothed_magnitudes(x);
        let mut total = T::zero();
        for (c, p) in self.potentials.iter().enumerate() {
            total = total + t.channel(c).iter().fold(T::zero(), |a, &v| a + p.value(v));
        }
        total
    }
}

/// Mask generator `Λ̃_c(x) = φ_{3,c}(B̂_c φ₂(B̃ φ₁(W̃ x)))` together with the
/// analysis bank `W` it modulates.
#[derive(Clone, Debug, PartialEq)]
pub struct SafiModel<T: Real> {
    pub w: FilterBank<T>,
    pub wt: FilterBank<T>,
    pub bt: FilterBank<T>,
    pub bh: FilterBank<T>,
    pub phi1: Vec<SplineCoeffs<T>>,
    pub phi2: Vec<SplineCoeffs<T>>,
    pub phi3: Vec<SigmoidSpline<T>>,
    pub lambda: T,
}

impl<T: Real> SafiModel<T> {
    pub fn channels(&self) -> usize {
        self.w.out_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let nc = self.channels();
        if self.w.in_channels() != 1 || self.wt.in_channels() != 1 {
            return Err(Error::InvalidArgument(
                "W and W~ must act on a single image".into(),
            ));
        }
        if self.bt.in_channels() != self.wt.out_channels() {
            return Err(Error::ShapeMismatch(
                "B~ input does not match W~ output".into(),
            ));
        }
        if self.bh.in_channels() != self.bt.out_channels() || self.bh.out_channels() != nc {
            return Err(Error::ShapeMismatch(
                "B^ must map B~ output to the mask channels".into(),
            ));
        }
        if self.phi1.len() != self.wt.out_channels()
            || self.phi2.len() != self.bt.out_channels()
            || self.phi3.len() != nc
        {
            return Err(Error::ShapeMismatch(
                "one activation per channel is required".into(),
            ));
        }
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda = {}", self.lambda)));
        }
        Ok(())
    }
}

fn apply_per_channel<T: Real>(s: &mut ChannelStack<T>, f: impl Fn(usize, T) -> T) {
    for c in 0..s.channels() {
        s.channel_mut(c).iter_mut().for_each(|v| *v = f(c, *v));
    }
}

/// `Λ_c(x) = B_cᵀ ψ'_c(B_c |W_c x|)`, clamped to `[0, 1]` against rounding.
pub fn mask_mmr<T: Real>(m: &MmrModel<T>, x: &Image<T>) -> Result<MaskStack<T>> {
    if !x.is_finite() {
        return Err(Error::NumericalFailure("mask input"));
    }
    let mut t = m.smoothed_magnitudes(x);
    apply_per_channel(&mut t, |c, v| m.potentials[c].derivative(v));
    let mut mask = m.b.adjoint_stack(&t)?;
    apply_per_channel(&mut mask, |_, v| clip_unchecked(v, T::zero(), T::one()));
    Ok(mask)
}

pub fn mask_safi<T: Real>(m: &SafiModel<T>, x: &Image<T>) -> Result<MaskStack<T>> {
    if !x.is_finite() {
        return Err(Error::NumericalFailure("mask input"));
    }
    let mut a = m.wt.forward(x);
    apply_per_channel(&mut a, |c, v| m.phi1[c].eval(v));
    let mut b = m.bt.apply_stack(&a)?;
    apply_per_channel(&mut b, |c, v| m.phi2[c].eval(v));
    let mut out = m.bh.apply_stack(&b)?;
    apply_per_channel(&mut out, |c, v| m.phi3[c].eval(v));
    Ok(out)
}

/// `L = [diag(Λ_c) W_c]`.
pub fn build_weighted_operator<'a, T: Real>(
    w: &'a FilterBank<T>,
    mask: MaskStack<T>,
) -> Result<WeightedAnalysisOperator<'a, T>> {
    WeightedAnalysisOperator::new(w, mask)
}

fn data_term<T: Real, H: ForwardModel<T> + ?Sized>(h: &H, y: &[T], x: &Image<T>) -> Result<T> {
    if h.image_shape() != x.shape() {
        return Err(Error::ShapeMismatch(
            "image does not match the forward model".into(),
        ));
    }
    let hx = h.apply(x.as_slice());
    if hx.len() != y.len() {
        return Err(Error::ShapeMismatch("measurement length".into()));
    }
    let d = dist2(&hx, y);
    Ok(T::lit(0.5) * d * d)
}

/// `f(x) = ½‖Hx − y‖² + λ Σ_c ⟨1, ψ_c(B_c |W_c x|)⟩`
pub fn eval_objective<T: Real, H: ForwardModel<T> + ?Sized>(
    m: &MmrModel<T>,
    h: &H,
    y: &[T],
    x: &Image<T>,
) -> Result<T> {
    if !x.is_finite() {
        return Err(Error::NumericalFailure("objective input"));
    }
    Ok(data_term(h, y, x)? + m.lambda * m.regularizer(x))
}

/// `g(x, a) = ½‖Hx − y‖² + λ Σ_c ⟨1, ψ_c(B_c|W_c a|)⟩ + λ Σ_c ⟨Λ_c(a), |W_c x| − |W_c a|⟩`
pub fn eval_majorization<T: Real, H: ForwardModel<T> + ?Sized>(
    m: &MmrModel<T>,
    h: &H,
    y: &[T],
    x: &Image<T>,
    anchor: &Image<T>,
) -> Result<T> {
    if !x.is_finite() || !anchor.is_finite() {
        return Err(Error::NumericalFailure("majorization input"));
    }
    x.same_shape(anchor)?;
    let mask = mask_mmr(m, anchor)?;
    let wx = m.w.forward(x);
    let wa = m.w.forward(anchor);
    let linear = mask
        .as_slice()
        .iter()
        .zip(wx.as_slice().iter().zip(wa.as_slice()))
        .fold(T::zero(), |acc, (&l, (&p, &q))| {
            acc + l * (p.abs() - q.abs())
        });
    Ok(data_term(h, y, x)? + m.lambda * (m.regularizer(anchor) + linear))
}

/// One outer step of a reweighting run.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep<T> {
    /// Outer index `k` (1-based).
    pub k: usize,
    /// `e_k = ‖x_{k+1} − x_k‖ / ‖x_k‖` (infinite when `x_k = 0 ≠ x_{k+1}`).
    pub residual: T,
    /// `f(x_{k+1})` for MMR runs.
    pub objective: Option<T>,
    /// PSNR of `x_{k+1}` against the reference, when one was given.
    pub psnr: Option<T>,
    pub fbs_iterations: usize,
    /// Inner FBS and prox tolerances were all met.
    pub inner_converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeTrace<T> {
    /// `f(x_1)` for MMR runs.
    pub initial_objective: Option<T>,
    pub steps: Vec<TraceStep<T>>,
    /// Outer stopping rule fired before `K_out` was exhausted.
    pub converged: bool,
    /// Every outer iterate `x_2, x_3, ...`, kept only when requested.
    pub iterates: Vec<Image<T>>,
}

impl<T: Real> SchemeTrace<T> {
    pub fn residuals(&self) -> Vec<T> {
        self.steps.iter().map(|s| s.residual).collect()
    }

    /// `f(x_1), f(x_2), ...` when the run tracked objectives.
    pub fn objectives(&self) -> Vec<T> {
        self.initial_objective
            .into_iter()
            .chain(self.steps.iter().filter_map(|s| s.objective))
            .collect()
    }

    pub fn last_residual(&self) -> Option<T> {
        self.steps.last().map(|s| s.residual)
    }
}

/// Run-level options that are not solver parameters.
#[derive(Clone, Debug, Default)]
pub struct RunOptions<'a, T: Real> {
    pub x_init: Option<&'a Image<T>>,
    pub reference: Option<&'a Image<T>>,
    /// Store every outer iterate in the trace.
    pub keep_iterates: bool,
}

fn relative_change<T: Real>(next: &Image<T>, prev: &Image<T>) -> T {
    let d = next.distance(prev);
    let n = prev.norm();
    if d == T::zero() {
        T::zero()
    } else if n == T::zero() {
        T::infinity()
    } else {
        d / n
    }
}

type MaskFn<'a, T> = &'a dyn Fn(&Image<T>) -> Result<MaskStack<T>>;
type ObjectiveFn<'a, T> = &'a dyn Fn(&Image<T>) -> Result<T>;

#[allow(clippy::too_many_arguments)]
fn run_reweighted<T: Real, H: ForwardModel<T> + ?Sized>(
    w: &FilterBank<T>,
    lambda: T,
    mask_of: MaskFn<'_, T>,
    objective_of: Option<ObjectiveFn<'_, T>>,
    h: &H,
    y: &[T],
    cfg: &SolverConfig<T>,
    set: &ConstraintSet<T>,
    opts: &RunOptions<'_, T>,
) -> Result<(Image<T>, SchemeTrace<T>)> {
    cfg.validate()?;
    let (height, width) = h.image_shape();
    if w.in_channels() != 1 {
        return Err(Error::InvalidArgument(
            "W must act on a single image".into(),
        ));
    }
    let (mut x, mut mask) = match opts.x_init {
        Some(x0) => {
            if x0.shape() != (height, width) {
                return Err(Error::ShapeMismatch(
                    "x_init does not match the forward model".into(),
                ));
            }
            (x0.clone(), mask_of(x0)?)
        }
        None => (
            Image::zeros(height, width),
            ChannelStack::filled(w.out_channels(), height, width, T::one()),
        ),
    };
    let mut trace = SchemeTrace {
        initial_objective: objective_of.map(|f| f(&x)).transpose()?,
        steps: Vec::new(),
        converged: false,
        iterates: Vec::new(),
    };
    let mut u = None;
    for k in 1..=cfg.k_out {
        let l = build_weighted_operator(w, mask)?;
        let out = fbs_solve(h, y, &l, lambda, &x, k, cfg, set, u.as_ref())?;
        let x_next = out.x;
        u = out.u;
        let residual = relative_change(&x_next, &x);
        mask = mask_of(&x_next)?;
        trace.steps.push(TraceStep {
            k,
            residual,
            objective: objective_of.map(|f| f(&x_next)).transpose()?,
            psnr: opts.reference.map(|r| psnr(r, &x_next)).transpose()?,
            fbs_iterations: out.iterations,
            inner_converged: out.converged && out.prox_converged,
        });
        if opts.keep_iterates {
            trace.iterates.push(x_next.clone());
        }
        x = x_next;
        if residual < cfg.eps_out {
            trace.converged = true;
            break;
        }
    }
    Ok((x, trace))
}

/// MMR outer loop: each step minimizes the majorizer anchored at the current iterate.
pub fn run_mmr<T: Real, H: ForwardModel<T> + ?Sized>(
    m: &MmrModel<T>,
    h: &H,
    y: &[T],
    cfg: &SolverConfig<T>,
    set: &ConstraintSet<T>,
    opts: &RunOptions<'_, T>,
) -> Result<(Image<T>, SchemeTrace<T>)> {
    m.validate()?;
    let mask_of = |x: &Image<T>| mask_mmr(m, x);
    let objective_of = |x: &Image<T>| eval_objective(m, h, y, x);
    run_reweighted(
        &m.w,
        m.lambda,
        &mask_of,
        Some(&objective_of),
        h,
        y,
        cfg,
        set,
        opts,
    )
}

/// SAFI fixed-point iterations `x_{k+1} = T(x_k)`.
pub fn run_safi<T: Real, H: ForwardModel<T> + ?Sized>(
    m: &SafiModel<T>,
    h: &H,
    y: &[T],
    cfg: &SolverConfig<T>,
    set: &ConstraintSet<T>,
    opts: &RunOptions<'_, T>,
) -> Result<(Image<T>, SchemeTrace<T>)> {
    m.validate()?;
    let mask_of = |x: &Image<T>| mask_safi(m, x);
    run_reweighted(&m.w, m.lambda, &mask_of, None, h, y, cfg, set, opts)
}

/// The convex problem with `Λ ≡ 1`, solved once.
pub fn run_cvx<T: Real, H: ForwardModel<T> + ?Sized>(
    w: &FilterBank<T>,
    lambda: T,
    h: &H,
    y: &[T],
    cfg: &SolverConfig<T>,
    set: &ConstraintSet<T>,
    opts: &RunOptions<'_, T>,
) -> Result<(Image<T>, SchemeTrace<T>)> {
    let single = SolverConfig { k_out: 1, ..*cfg };
    let ones = |_: &Image<T>| {
        Ok(ChannelStack::filled(
            w.out_channels(),
            h.image_shape().0,
            h.image_shape().1,
            T::one(),
        ))
    };
    let plain = WeightedAnalysisOperator::unweighted(w, h.image_shape().0, h.image_shape().1)?;
    let objective_of = |x: &Image<T>| convex_objective(h, y, &plain, lambda, x);
    let opts = RunOptions {
        x_init: None,
        ..opts.clone()
    };
    run_reweighted(
        w,
        lambda,
        &ones,
        Some(&objective_of),
        h,
        y,
        &single,
        set,
        &opts,
    )
}

/// Iteratively reweighted TV: forward differences, 3x3 box smoothing,
/// `ψ'(t) = 1/(1 + t/0.1)` and `λ = 0.1`.
pub fn default_tv_model<T: Real>() -> MmrModel<T> {
    let eps0 = T::lit(0.1);
    MmrModel::new(
        FilterBank::forward_differences(),
        FilterBank::box_filter(2, 3),
        vec![
            ConcavePotential::log_type(eps0),
            ConcavePotential::log_type(eps0),
        ],
        T::lit(0.1),
    )
    .expect("valid default model")
}

/// Slope and offset of the default SAFI output activation `sigmoid(a − b t)`.
pub const DEFAULT_SAFI_OFFSET: f64 = 2.0;
pub const DEFAULT_SAFI_SLOPE: f64 = 10.0;

/// Edge-aware mask generator on forward differences: the mask is
/// `sigmoid(a − b · box(|∂₁x| + |∂₂x|)/2)` on both channels.
pub fn default_safi_model<T: Real>() -> SafiModel<T> {
    let m = SplineCoeffs::<T>::DEFAULT_M;
    let delta = T::lit(SplineCoeffs::<T>::DEFAULT_DELTA);
    let abs = SplineCoeffs::sampled(m, delta, |t| t.abs()).expect("finite samples");
    let ident = SplineCoeffs::sampled(m, delta, |t| t).expect("finite samples");
    let (a, b) = (T::lit(DEFAULT_SAFI_OFFSET), T::lit(DEFAULT_SAFI_SLOPE));
    let out =
        SigmoidSpline::new(SplineCoeffs::sampled(m, delta, |t| a - b * t).expect("finite samples"));
    let box_taps = vec![T::one() / T::lit(18.0); 2 * 9];
    let bt = FilterBank::new(
        vec![
            ConvLayer::new(2, 1, 1, 3, box_taps, KernelConstraint::Unconstrained)
                .expect("valid layer"),
        ],
        KernelConstraint::Unconstrained,
    )
    .expect("valid bank");
    let bh = FilterBank::identity(2);
    SafiModel {
        w: FilterBank::forward_differences(),
        wt: FilterBank::forward_differences(),
        bt,
        bh,
        phi1: vec![abs.clone(), abs],
        phi2: vec![ident],
        phi3: vec![out.clone(), out],
        lambda: T::lit(0.1),
    }
}

/// Random valid MMR model with `channels` zero-mean 3x3 filters, a depthwise
/// positive-normalized 3x3 `B`, random potentials and `λ ∈ [0.01, 0.5]`.
pub fn random_mmr_model<T: Real>(
    channels: usize,
    stages: usize,
    rng: &mut Rng,
) -> Result<MmrModel<T>> {
    let mut w_layout = vec![(1, channels, 1)];
    w_layout.extend(std::iter::repeat_n(
        (channels, channels, 1),
        stages.saturating_sub(1),
    ));
    let b_layout = vec![(channels, channels, channels); stages.max(1)];
    let w = FilterBank::random(&w_layout, 3, KernelConstraint::ZeroMean, 1.0, rng)?;
    let b = FilterBank::random(&b_layout, 3, KernelConstraint::PositiveNormalized, 1.0, rng)?;
    let potentials = (0..channels)
        .map(|_| ConcavePotential::random(20, T::lit(0.05), rng))
        .collect();
    let lambda = T::lit(rng.uniform_in(0.01, 0.5));
    MmrModel::new(w, b, potentials, lambda)
}

/// Random valid SAFI model with `channels` mask channels and 3x3 kernels.
pub fn random_safi_model<T: Real>(channels: usize, rng: &mut Rng) -> Result<SafiModel<T>> {
    let w = FilterBank::random(&[(1, channels, 1)], 3, KernelConstraint::ZeroMean, 1.0, rng)?;
    let wt = FilterBank::random(&[(1, channels, 1)], 3, KernelConstraint::ZeroMean, 1.0, rng)?;
    let bt = FilterBank::random(
        &[(channels, channels, 1)],
        3,
        KernelConstraint::Unconstrained,
        0.3,
        rng,
    )?;
    let bh = FilterBank::random(
        &[(channels, channels, 1)],
        3,
        KernelConstraint::Unconstrained,
        0.3,
        rng,
    )?;
    let m = SplineCoeffs::<T>::DEFAULT_M;
    let delta = T::lit(SplineCoeffs::<T>::DEFAULT_DELTA);
    let spline = |rng: &mut Rng| SplineCoeffs::random(m, delta, 0.5, rng);
    let phi1 = (0..channels).map(|_| spline(rng)).collect();
    let phi2 = (0..channels).map(|_| spline(rng)).collect();
    let phi3 = (0..channels)
        .map(|_| SigmoidSpline::new(spline(rng)))
        .collect();
    let model = SafiModel {
        w,
        wt,
        bt,
        bh,
        phi1,
        phi2,
        phi3,
        lambda: T::lit(rng.uniform_in(0.02, 0.3)),
    };
    model.validate()?;
    Ok(model)
}

/// Same layout as `m` with every spline coefficient zero, so `Λ̃ ≡ 1/2`.
pub fn zero_spline_safi_model<T: Real>(m: &SafiModel<T>) -> SafiModel<T> {
    let zero = |s: &SplineCoeffs<T>| SplineCoeffs::zeros(s.m(), s.delta());
    SafiModel {
        phi1: m.phi1.iter().map(zero).collect(),
        phi2: m.phi2.iter().map(zero).collect(),
        phi3: m
            .phi3
            .iter()
            .map(|s| SigmoidSpline::new(zero(&s.base)))
            .collect(),
        ..m.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ForwardOp;

    #[test]
    fn mmr_mask_is_one_at_zero_and_for_linear_potentials() {
        let m = default_tv_model::<f64>();
        let mask = mask_mmr(&m, &Image::zeros(6, 6)).unwrap();
        assert!(mask.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let lin = MmrModel {
            potentials: vec![ConcavePotential::linear(), ConcavePotential::linear()],
            ..m
        };
        let x = Image::gaussian(6, 6, 1.0, &mut Rng::new(1));
        let mask = mask_mmr(&lin, &x).unwrap();
        assert!(mask.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn safi_zero_splines_give_half() {
        let m = zero_spline_safi_model(&default_safi_model::<f64>());
        let x = Image::gaussian(5, 5, 1.0, &mut Rng::new(2));
        assert!(mask_safi(&m, &x)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.5));
        let d = default_safi_model::<f64>();
        let mask = mask_safi(&d, &Image::zeros(5, 5)).unwrap();
        let expected = 1.0 / (1.0 + (-DEFAULT_SAFI_OFFSET).exp());
        assert!(mask
            .as_slice()
            .iter()
            .all(|&v| (v - expected).abs() < 1e-15));
    }

    #[test]
    fn objective_normalization() {
        let m = default_tv_model::<f64>();
        let h = ForwardOp::identity(4, 4);
        let y = Image::gaussian(4, 4, 1.0, &mut Rng::new(3));
        let f = eval_objective(&m, &h, y.as_slice(), &Image::zeros(4, 4)).unwrap();
        assert!((f - 0.5 * y.norm() * y.norm()).abs() < 1e-14);
        let m0 = MmrModel { lambda: 0.0, ..m };
        let x = Image::gaussian(4, 4, 1.0, &mut Rng::new(4));
        let f = eval_objective(&m0, &h, y.as_slice(), &x).unwrap();
        assert!((f - 0.5 * x.distance(&y).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn majorizer_touches_at_anchor() {
        let mut rng = Rng::new(5);
        let m = random_mmr_model::<f64>(2, 2, &mut rng).unwrap();
        let h = ForwardOp::identity(6, 6);
        let y = Image::gaussian(6, 6, 1.0, &mut rng);
        let a = Image::gaussian(6, 6, 1.0, &mut rng);
        let g = eval_majorization(&m, &h, y.as_slice(), &a, &a).unwrap();
        let f = eval_objective(&m, &h, y.as_slice(), &a).unwrap();
        assert!((g - f).abs() < 1e-12);
    }

    #[test]
    fn tv_model_annihilates_constants() {
        let m = default_tv_model::<f64>();
        let s = m.w.forward(&Image::filled(5, 5, 0.7));
        assert!(s.max_abs() < 1e-15);
        assert!(m.potentials.iter().all(|p| p.derivative(0.0) == 1.0));
    }

    #[test]
    fn validation_rejects_mismatched_models() {
        let m = default_tv_model::<f64>();
        assert!(MmrModel::new(
            m.w.clone(),
            m.b.clone(),
            vec![ConcavePotential::linear()],
            0.1
        )
        .is_err());
        assert!(MmrModel::new(
            m.w.clone(),
            FilterBank::identity(2),
            m.potentials.clone(),
            0.1
        )
        .is_err());
        assert!(MmrModel::new(m.w, m.b, m.potentials, -1.0).is_err());
        let mut s = default_safi_model::<f64>();
        s.phi3.pop();
        assert!(s.validate().is_err());
    }
}
