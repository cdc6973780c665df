//! Linear-spline activations and the concave potentials built from them.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Rng;

/// `clip_[lo, hi](a)`.
pub fn clip<T: Real>(a: T, lo: T, hi: T) -> Result<T> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!("clip bounds {lo} > {hi}")));
    }
    Ok(clip_unchecked(a, lo, hi))
}

#[inline]
pub(crate) fn clip_unchecked<T: Real>(a: T, lo: T, hi: T) -> T {
    if a < lo {
        lo
    } else if a > hi {
        hi
    } else {
        a
    }
}

/// Linear spline on the symmetric grid `-MΔ, ..., MΔ`, extrapolated linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineCoeffs<T> {
    m: usize,
    delta: T,
    d: Vec<T>,
}

impl<T: Real> SplineCoeffs<T> {
    pub const DEFAULT_M: usize = 10;
    pub const DEFAULT_DELTA: f64 = 0.1;

    pub fn new(m: usize, delta: T, d: Vec<T>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("spline needs M >= 1".into()));
        }
        if !(delta > T::zero()) {
            return Err(Error::InvalidArgument(
                "spline step must be positive".into(),
            ));
        }
        if d.len() != 2 * m + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for M = {m}",
                d.len()
            )));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("spline coefficients"));
        }
        Ok(Self { m, delta, d })
    }

    pub fn zeros(m: usize, delta: T) -> Self {
        Self::new(m, delta, vec![T::zero(); 2 * m + 1]).expect("valid zero spline")
    }

    /// Samples `f` at the knots.
    pub fn sampled(m: usize, delta: T, f: impl Fn(T) -> T) -> Result<Self> {
        let d = (0..=2 * m)
            .map(|k| f(T::from_usize_lossy(k) * delta - T::from_usize_lossy(m) * delta))
            .collect();
        Self::new(m, delta, d)
    }

    pub fn random(m: usize, delta: T, scale: f64, rng: &mut Rng) -> Self {
        let d = (0..=2 * m)
            .map(|_| T::lit(scale * rng.next_gaussian()))
            .collect();
        Self::new(m, delta, d).expect("finite random spline")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn coefficients(&self) -> &[T] {
        &self.d
    }

    pub fn eval(&self, x: T) -> T {
        let m = self.m;
        let mt = T::from_usize_lossy(m);
        let edge = mt * self.delta;
        if x < -edge {
            return self.d[0] + (self.d[1] - self.d[0]) / self.delta * (x + edge);
        }
        if x > edge {
            let last = self.d[2 * m];
            return last + (last - self.d[2 * m - 1]) / self.delta * (x - edge);
        }
        let t = x / self.delta + mt;
        let k = t.floor().to_usize().unwrap_or(0).min(2 * m - 1);
        let frac = t - T::from_usize_lossy(k);
        self.d[k] * (T::one() - frac) + self.d[k + 1] * frac
    }
}

/// `1 / (1 + exp(-s(x)))` for a linear spline `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmoidSpline<T> {
    pub base: SplineCoeffs<T>,
}

impl<T: Real> SigmoidSpline<T> {
    pub fn new(base: SplineCoeffs<T>) -> Self {
        Self { base }
    }

    /// Clamped to the open interval, which plain evaluation leaves once `|s(x)|`
    /// exceeds the precision of `T`.
    pub fn eval(&self, x: T) -> T {
        let v = T::one() / (T::one() + (-self.base.eval(x)).exp());
        v.max(T::min_positive_value())
            .min(T::one() - T::epsilon() / T::lit(2.0))
    }
}

/// Linear spline on the half-line grid `0, Δ, ..., MΔ`, constant beyond `MΔ`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfLineSpline<T> {
    m: usize,
    delta: T,
    d: Vec<T>,
}

impl<T: Real> HalfLineSpline<T> {
    pub const DEFAULT_M: usize = 20;
    pub const DEFAULT_DELTA: f64 = 0.05;

    pub fn new(m: usize, delta: T, d: Vec<T>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("spline needs M >= 1".into()));
        }
        if !(delta > T::zero()) {
            return Err(Error::InvalidArgument(
                "spline step must be positive".into(),
            ));
        }
        if d.len() != m + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for M = {m}",
                d.len()
            )));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("spline coefficients"));
        }
        Ok(Self { m, delta, d })
    }

    /// Samples `f` at `0, Δ, ..., MΔ`.
    pub fn sampled(m: usize, delta: T, f: impl Fn(T) -> T) -> Result<Self> {
        let d = (0..=m).map(|k| f(T::from_usize_lossy(k) * delta)).collect();
        Self::new(m, delta, d)
    }

    /// Spline with projected coefficients, see [`project_nonincreasing`].
    pub fn nonincreasing(m: usize, delta: T, raw: &[T]) -> Result<Self> {
        Self::new(m, delta, project_nonincreasing(raw)?)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn coefficients(&self) -> &[T] {
        &self.d
    }

    pub fn eval(&self, x: T) -> T {
        if x <= T::zero() {
            return self.d[0];
        }
        let t = x / self.delta;
        if t >= T::from_usize_lossy(self.m) {
            return self.d[self.m];
        }
        let k = t.floor().to_usize().unwrap_or(0).min(self.m - 1);
        let frac = t - T::from_usize_lossy(k);
        let (a, b) = (self.d[k], self.d[k + 1]);
        (a + (b - a) * frac).max(a.min(b)).min(a.max(b))
    }
}

/// `S clip_[-inf, 0](D d) + 1`: non-increasing coefficients starting at one.
pub fn project_nonincreasing<T: Real>(d: &[T]) -> Result<Vec<T>> {
    if d.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two coefficients".into(),
        ));
    }
    if d[0] == T::one() && d.windows(2).all(|w| w[1] <= w[0]) {
        return Ok(d.to_vec());
    }
    let mut out = Vec::with_capacity(d.len());
    let mut acc = T::zero();
    out.push(T::one());
    for w in d.windows(2) {
        acc = acc + (w[1] - w[0]).min(T::zero());
        out.push(acc + T::one());
    }
    Ok(out)
}

/// Integral of `clip_[0,1]` of the linear function through `(s0, v0)`, `(s1, v1)`.
fn integrate_clipped_linear<T: Real>(s0: T, s1: T, v0: T, v1: T) -> T {
    if s1 <= s0 {
        return T::zero();
    }
    let mut cuts = [s0, s1, s1, s1];
    let mut n = 1;
    if v0 != v1 {
        for level in [T::zero(), T::one()] {
            let t = (level - v0) / (v1 - v0);
            if t > T::zero() && t < T::one() {
                cuts[n] = s0 + t * (s1 - s0);
                n += 1;
            }
        }
    }
    cuts[n] = s1;
    cuts[1..n].sort_by(|a, b| a.partial_cmp(b).expect("finite cut points"));
    let slope = (v1 - v0) / (s1 - s0);
    let value = |s: T| clip_unchecked(v0 + slope * (s - s0), T::zero(), T::one());
    let half = T::lit(0.5);
    (0..n).fold(T::zero(), |acc, i| {
        let (a, b) = (cuts[i], cuts[i + 1]);
        acc + half * (b - a) * (value(a) + value(b))
    })
}

/// Concave potential `ψ` specified through its derivative
/// `ψ'(x) = clip_[0,1](σ(r x))`, normalized by `ψ(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcavePotential<T> {
    sigma: HalfLineSpline<T>,
    r: T,
    // ∫_0^{mΔ} clip(σ(s)) ds at every knot, in the unscaled variable s = r x
    knot_integrals: Vec<T>,
}

impl<T: Real> ConcavePotential<T> {
    pub fn new(sigma: HalfLineSpline<T>, r: T) -> Result<Self> {
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::InvalidArgument(
                "potential scale r must be positive".into(),
            ));
        }
        let mut knot_integrals = Vec::with_capacity(sigma.m + 1);
        let mut acc = T::zero();
        knot_integrals.push(acc);
        for k in 0..sigma.m {
            let s0 = T::from_usize_lossy(k) * sigma.delta;
            let s1 = T::from_usize_lossy(k + 1) * sigma.delta;
            acc = acc + integrate_clipped_linear(s0, s1, sigma.d[k], sigma.d[k + 1]);
            knot_integrals.push(acc);
        }
        Ok(Self {
            sigma,
            r,
            knot_integrals,
        })
    }

    /// Projects raw coefficients with [`project_nonincreasing`] first.
    pub fn from_raw(m: usize, delta: T, raw: &[T], r: T) -> Result<Self> {
        Self::new(HalfLineSpline::nonincreasing(m, delta, raw)?, r)
    }

    /// `ψ'(t) = 1 / (1 + t / eps0)` sampled on the default grid with `r = 1`.
    pub fn log_type(eps0: T) -> Self {
        let sigma = HalfLineSpline::sampled(
            HalfLineSpline::<T>::DEFAULT_M,
            T::lit(HalfLineSpline::<T>::DEFAULT_DELTA),
            |t| T::one() / (T::one() + t / eps0),
        )
        .expect("finite samples");
        Self::new(sigma, T::one()).expect("positive scale")
    }

    /// `ψ' ≡ 1`, i.e. `ψ(x) = x`.
    pub fn linear() -> Self {
        let m = HalfLineSpline::<T>::DEFAULT_M;
        let sigma = HalfLineSpline::new(
            m,
            T::lit(HalfLineSpline::<T>::DEFAULT_DELTA),
            vec![T::one(); m + 1],
        )
        .expect("valid constant spline");
        Self::new(sigma, T::one()).expect("positive scale")
    }

    pub fn random(m: usize, delta: T, rng: &mut Rng) -> Self {
        let raw: Vec<T> = (0..=m).map(|_| T::lit(0.3 * rng.next_gaussian())).collect();
        let r = T::lit(rng.uniform_in(0.5, 2.0));
        Self::from_raw(m, delta, &raw, r).expect("valid random potential")
    }

    pub fn sigma(&self) -> &HalfLineSpline<T> {
        &self.sigma
    }

    pub fn r(&self) -> T {
        self.r
    }

    /// `ψ'(x)`; negative inputs are treated as zero.
    #[inline]
    pub fn derivative(&self, x: T) -> T {
        clip_unchecked(
            self.sigma.eval(self.r * x.max(T::zero())),
            T::zero(),
            T::one(),
        )
    }

    /// `ψ(x) = ∫_0^x ψ'(t) dt`, exact for the piecewise-linear `ψ'`.
    pub fn value(&self, x: T) -> T {
        let s = self.r * x.max(T::zero());
        let sig = &self.sigma;
        let mt = T::from_usize_lossy(sig.m);
        let t = s / sig.delta;
        let integral = if t >= mt {
            let tail = clip_unchecked(sig.d[sig.m], T::zero(), T::one());
            self.knot_integrals[sig.m] + tail * (s - mt * sig.delta)
        } else {
            let k = t.floor().to_usize().unwrap_or(0).min(sig.m - 1);
            let s0 = T::from_usize_lossy(k) * sig.delta;
            let end = sig.d[k] + (sig.d[k + 1] - sig.d[k]) * ((s - s0) / sig.delta);
            self.knot_integrals[k] + integrate_clipped_linear(s0, s, sig.d[k], end)
        };
        integral / self.r
    }
}

/// `ψ'(x)` with the `x >= 0` precondition checked.
pub fn concave_derivative_eval<T: Real>(p: &ConcavePotential<T>, x: T) -> Result<T> {
    if x < T::zero() {
        return Err(Error::InvalidArgument(format!(
            "potential derivative at negative {x}"
        )));
    }
    Ok(p.derivative(x))
}

/// `ψ(x)` with the `x >= 0` precondition checked.
pub fn potential_eval<T: Real>(p: &ConcavePotential<T>, x: T) -> Result<T> {
    if x < T::zero() {
        return Err(Error::InvalidArgument(format!("potential at negative {x}")));
    }
    Ok(p.value(x))
}
