//! Periodic convolutional filter banks, kernel constraints, generic linear
//! operators and dense materialization.
//!
//! Convolutions follow the cross-correlation convention of deep-learning
//! frameworks with a centred odd-sized kernel and circular boundaries:
//!
//! ```text
//! out[o, i, j] = sum_{ic in group(o)} sum_{a, b} k[o, ic, a, b] * in[ic, i + a - r, j + b - r]
//! ```
//!
//! where `r = (k_s - 1) / 2` and indices wrap modulo the image size.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::{self, Real};
use crate::tensor::{ChannelStack, Image, Rng};

/// Largest input dimension [`dense_matrix_of`] will materialize.
pub const DENSE_LIMIT: usize = 4096;

/// A real linear map between flat vectors together with its adjoint.
pub trait LinearOperator<T: Real> {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[T]) -> Vec<T>;
    fn apply_adjoint(&self, y: &[T]) -> Vec<T>;
}

/// Subtracts the mean so the taps sum to zero. `tap_count` is `k_s²`.
///
/// Taps whose sum is already zero up to rounding are returned unchanged, so
/// the projection is exactly idempotent.
pub fn project_zero_mean<T: Real>(taps: &[T], tap_count: usize) -> Result<Vec<T>> {
    if taps.len() != tap_count || tap_count == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} taps, expected {}",
            taps.len(),
            tap_count
        )));
    }
    let sum = taps.iter().copied().sum::<T>();
    let scale = taps.iter().map(|t| t.abs()).sum::<T>();
    if sum.abs() <= T::epsilon() * T::from_usize_lossy(tap_count) * scale {
        return Ok(taps.to_vec());
    }
    let mean = sum / T::from_usize_lossy(taps.len());
    Ok(taps.iter().map(|&t| t - mean).collect())
}

/// Maps `b` to `|b| / sum(|b|)`: nonnegative taps summing to one. Already
/// normalized taps are returned unchanged.
pub fn project_positive_normalized<T: Real>(taps: &[T]) -> Result<Vec<T>> {
    let total = taps.iter().map(|t| t.abs()).sum::<T>();
    if taps.is_empty() || total == T::zero() {
        return Err(Error::DegenerateKernel);
    }
    let n = T::from_usize_lossy(taps.len());
    if taps.iter().all(|&t| t >= T::zero()) && (total - T::one()).abs() <= T::epsilon() * n {
        return Ok(taps.to_vec());
    }
    Ok(taps.iter().map(|t| t.abs() / total).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelConstraint {
    Unconstrained,
    ZeroMean,
    PositiveNormalized,
}

impl KernelConstraint {
    pub fn project<T: Real>(self, taps: &[T]) -> Result<Vec<T>> {
        match self {
            KernelConstraint::Unconstrained => Ok(taps.to_vec()),
            KernelConstraint::ZeroMean => project_zero_mean(taps, taps.len()),
            KernelConstraint::PositiveNormalized => project_positive_normalized(taps),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelConstraint::Unconstrained => "unconstrained",
            KernelConstraint::ZeroMean => "zero-mean",
            KernelConstraint::PositiveNormalized => "positive-normalized",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "unconstrained" => Some(KernelConstraint::Unconstrained),
            "zero-mean" => Some(KernelConstraint::ZeroMean),
            "positive-normalized" => Some(KernelConstraint::PositiveNormalized),
            _ => None,
        }
    }
}

/// One grouped periodic convolution stage.
///
/// Taps are stored out-channel-major, then input channel within the group,
/// then kernel rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    in_channels: usize,
    out_channels: usize,
    groups: usize,
    ksize: usize,
    taps: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    /// Builds a stage and applies `constraint` to every individual kernel.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        groups: usize,
        ksize: usize,
        taps: Vec<T>,
        constraint: KernelConstraint,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || groups == 0 {
            return Err(Error::InvalidArgument(
                "channel counts must be positive".into(),
            ));
        }
        if ksize.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "kernel size {ksize} is not odd"
            )));
        }
        if !in_channels.is_multiple_of(groups) || !out_channels.is_multiple_of(groups) {
            return Err(Error::InvalidArgument(format!(
                "groups {groups} must divide channels {in_channels} -> {out_channels}"
            )));
        }
        let kk = ksize * ksize;
        let expected = out_channels * (in_channels / groups) * kk;
        if taps.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} taps, expected {}",
                taps.len(),
                expected
            )));
        }
        if !scalar::all_finite(&taps) {
            return Err(Error::NumericalFailure("kernel taps"));
        }
        let mut projected = Vec::with_capacity(taps.len());
        for kernel in taps.chunks(kk) {
            projected.extend(constraint.project(kernel)?);
        }
        Ok(Self {
            in_channels,
            out_channels,
            groups,
            ksize,
            taps: projected,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn ksize(&self) -> usize {
        self.ksize
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// Kernel connecting output channel `o` to the `j`-th input of its group.
    pub fn kernel(&self, o: usize, j: usize) -> &[T] {
        let kk = self.ksize * self.ksize;
        let start = (o * self.in_per_group() + j) * kk;
        &self.taps[start..start + kk]
    }

    fn for_each_connection(&self, mut f: impl FnMut(usize, usize, &[T])) {
        let ipg = self.in_per_group();
        let opg = self.out_per_group();
        for o in 0..self.out_channels {
            let g = o / opg;
            for j in 0..ipg {
                f(o, g * ipg + j, self.kernel(o, j));
            }
        }
    }

    fn wrap_table(&self, n: usize) -> Vec<Vec<usize>> {
        let r = (self.ksize / 2) as isize;
        (0..self.ksize)
            .map(|a| {
                let d = a as isize - r;
                (0..n as isize)
                    .map(|i| (i + d).rem_euclid(n as isize) as usize)
                    .collect()
            })
            .collect()
    }

    pub fn apply(&self, input: &[T], height: usize, width: usize) -> Vec<T> {
        let plane = height * width;
        debug_assert_eq!(input.len(), self.in_channels * plane);
        let rows = self.wrap_table(height);
        let cols = self.wrap_table(width);
        let mut out = vec![T::zero(); self.out_channels * plane];
        self.for_each_connection(|o, ic, kernel| {
            let src = &input[ic * plane..(ic + 1) * plane];
            let dst = &mut out[o * plane..(o + 1) * plane];
            for (a, row_map) in rows.iter().enumerate() {
                for (b, col_map) in cols.iter().enumerate() {
                    let w = kernel[a * self.ksize + b];
                    if w == T::zero() {
                        continue;
                    }
                    for i in 0..height {
                        let s_row = &src[row_map[i] * width..(row_map[i] + 1) * width];
                        let d_row = &mut dst[i * width..(i + 1) * width];
                        for (d, &sj) in d_row.iter_mut().zip(col_map) {
                            *d = *d + w * s_row[sj];
                        }
                    }
                }
            }
        });
        out
    }

    pub fn apply_adjoint(&self, output: &[T], height: usize, width: usize) -> Vec<T> {
        let plane = height * width;
        debug_assert_eq!(output.len(), self.out_channels * plane);
        let rows = self.wrap_table(height);
        let cols = self.wrap_table(width);
        let mut inp = vec![T::zero(); self.in_channels * plane];
        self.for_each_connection(|o, ic, kernel| {
            let src = &output[o * plane..(o + 1) * plane];
            let dst = &mut inp[ic * plane..(ic + 1) * plane];
            for (a, row_map) in rows.iter().enumerate() {
                for (b, col_map) in cols.iter().enumerate() {
                    let w = kernel[a * self.ksize + b];
                    if w == T::zero() {
                        continue;
                    }
                    for i in 0..height {
                        let s_row = &src[i * width..(i + 1) * width];
                        let base = row_map[i] * width;
                        for (&s, &sj) in s_row.iter().zip(col_map) {
                            dst[base + sj] = dst[base + sj] + w * s;
                        }
                    }
                }
            }
        });
        inp
    }
}

/// Stacked convolution stages realizing a multi-channel analysis operator.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank<T> {
    layers: Vec<ConvLayer<T>>,
    constraint: KernelConstraint,
}

impl<T: Real> FilterBank<T> {
    /// Stages are applied in order (stage 1 first). Each stage's taps are
    /// projected onto `constraint`.
    pub fn new(layers: Vec<ConvLayer<T>>, constraint: KernelConstraint) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "filter bank needs at least one stage".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::ShapeMismatch(format!(
                    "stage outputs {} channels, next stage expects {}",
                    pair[0].out_channels, pair[1].in_channels
                )));
            }
        }
        let layers = layers
            .into_iter()
            .map(|l| {
                ConvLayer::new(
                    l.in_channels,
                    l.out_channels,
                    l.groups,
                    l.ksize,
                    l.taps,
                    constraint,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, constraint })
    }

    /// Single-stage bank from per-channel kernels acting on one input image.
    pub fn from_kernels(
        ksize: usize,
        kernels: &[Vec<T>],
        constraint: KernelConstraint,
    ) -> Result<Self> {
        let taps = kernels.iter().flatten().copied().collect();
        let layer = ConvLayer::new(1, kernels.len(), 1, ksize, taps, constraint)?;
        Self::new(vec![layer], constraint)
    }

    /// `channels` copies of the 1x1 unit kernel on a single input.
    pub fn identity(channels: usize) -> Self {
        let layer = ConvLayer::new(
            1,
            channels,
            1,
            1,
            vec![T::one(); channels],
            KernelConstraint::Unconstrained,
        )
        .expect("valid identity layer");
        Self {
            layers: vec![layer],
            constraint: KernelConstraint::Unconstrained,
        }
    }

    /// Periodic forward differences along columns (channel 0) and rows (channel 1).
    pub fn forward_differences() -> Self {
        let (o, m) = (T::zero(), -T::one());
        let horizontal = vec![o, o, o, o, m, T::one(), o, o, o];
        let vertical = vec![o, o, o, o, m, o, o, T::one(), o];
        Self::from_kernels(3, &[horizontal, vertical], KernelConstraint::ZeroMean)
            .expect("valid difference bank")
    }

    /// Depthwise bank applying the normalized `ksize x ksize` box filter to each channel.
    pub fn box_filter(channels: usize, ksize: usize) -> Self {
        let kk = ksize * ksize;
        let layer = ConvLayer::new(
            channels,
            channels,
            channels,
            ksize,
            vec![T::one(); channels * kk],
            KernelConstraint::PositiveNormalized,
        )
        .expect("valid box layer");
        Self {
            layers: vec![layer],
            constraint: KernelConstraint::PositiveNormalized,
        }
    }

    /// Random bank with the given stage layout `(in, out, groups)` and
    /// Gaussian taps of standard deviation `scale` before projection.
    pub fn random(
        stages: &[(usize, usize, usize)],
        ksize: usize,
        constraint: KernelConstraint,
        scale: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let layers = stages
            .iter()
            .map(|&(i, o, g)| {
                let n = o * (i / g.max(1)) * ksize * ksize;
                let taps = (0..n)
                    .map(|_| T::lit(scale * rng.next_gaussian()))
                    .collect();
                ConvLayer::new(i, o, g, ksize, taps, KernelConstraint::Unconstrained)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, constraint)
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn stages(&self) -> usize {
        self.layers.len()
    }

    pub fn constraint(&self) -> KernelConstraint {
        self.constraint
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers[self.layers.len() - 1].out_channels
    }

    pub fn apply_stack(&self, x: &ChannelStack<T>) -> Result<ChannelStack<T>> {
        if x.channels() != self.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "bank expects {} input channels, got {}",
                self.in_channels(),
                x.channels()
            )));
        }
        let (h, w) = (x.height(), x.width());
        let mut cur = x.as_slice().to_vec();
        for layer in &self.layers {
            cur = layer.apply(&cur, h, w);
        }
        ChannelStack::from_vec(self.out_channels(), h, w, cur)
    }

    pub fn adjoint_stack(&self, s: &ChannelStack<T>) -> Result<ChannelStack<T>> {
        if s.channels() != self.out_channels() {
            return Err(Error::ShapeMismatch(format!(
                "bank produces {} channels, got {}",
                self.out_channels(),
                s.channels()
            )));
        }
        let (h, w) = (s.height(), s.width());
        let mut cur = s.as_slice().to_vec();
        for layer in self.layers.iter().rev() {
            cur = layer.apply_adjoint(&cur, h, w);
        }
        ChannelStack::from_vec(self.in_channels(), h, w, cur)
    }

    /// `W x` for a single-input bank.
    pub fn forward(&self, x: &Image<T>) -> ChannelStack<T> {
        assert_eq!(self.in_channels(), 1, "forward() needs a single-input bank");
        let (h, w) = x.shape();
        let mut cur = x.as_slice().to_vec();
        for layer in &self.layers {
            cur = layer.apply(&cur, h, w);
        }
        ChannelStack::from_vec(self.out_channels(), h, w, cur).expect("consistent bank output")
    }

    /// `Wᵀ s` for a single-input bank.
    pub fn adjoint(&self, s: &ChannelStack<T>) -> Result<Image<T>> {
        if self.in_channels() != 1 {
            return Err(Error::InvalidArgument(
                "adjoint() needs a single-input bank".into(),
            ));
        }
        let out = self.adjoint_stack(s)?;
        Image::from_vec(s.height(), s.width(), out.into_vec())
    }

    /// Exact spectral norm of a single-input bank on `height x width` images.
    ///
    /// `WᵀW` is circulant with eigenvalues `sum_c |h_c(ω)|²`, `h_c` being the
    /// composite impulse response of channel `c`.
    pub fn spectral_norm(&self, height: usize, width: usize) -> Option<T> {
        if self.in_channels() != 1 {
            return None;
        }
        let mut delta = Image::zeros(height, width);
        delta.set(0, 0, T::one());
        let responses = self.forward(&delta);
        let mut power = vec![T::zero(); height * width];
        for c in 0..responses.channels() {
            let spectrum = fft2(responses.channel(c), height, width, false);
            for (p, z) in power.iter_mut().zip(&spectrum) {
                *p = *p + z.norm_sqr();
            }
        }
        let max = power.iter().fold(T::zero(), |m, &v| m.max(v));
        Some(max.sqrt())
    }
}

/// Unnormalized 2-D DFT (forward or inverse) of a real or complex plane.
pub(crate) fn fft2<T: Real>(
    data: &[T],
    height: usize,
    width: usize,
    inverse: bool,
) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = data.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft2_complex(&mut buf, height, width, inverse);
    buf
}

pub(crate) fn fft2_complex<T: Real>(
    buf: &mut [Complex<T>],
    height: usize,
    width: usize,
    inverse: bool,
) {
    let mut planner = FftPlanner::<T>::new();
    let (row_fft, col_fft) = if inverse {
        (
            planner.plan_fft_inverse(width),
            planner.plan_fft_inverse(height),
        )
    } else {
        (
            planner.plan_fft_forward(width),
            planner.plan_fft_forward(height),
        )
    };
    row_fft.process(buf);
    let mut column = vec![Complex::new(T::zero(), T::zero()); height];
    for j in 0..width {
        for i in 0..height {
            column[i] = buf[i * width + j];
        }
        col_fft.process(&mut column);
        for i in 0..height {
            buf[i * width + j] = column[i];
        }
    }
}

/// A [`FilterBank`] bound to an image size, usable as a flat [`LinearOperator`].
pub struct BankOperator<'a, T> {
    pub bank: &'a FilterBank<T>,
    pub height: usize,
    pub width: usize,
}

impl<T: Real> LinearOperator<T> for BankOperator<'_, T> {
    fn input_len(&self) -> usize {
        self.bank.in_channels() * self.height * self.width
    }

    fn output_len(&self) -> usize {
        self.bank.out_channels() * self.height * self.width
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        let s =
            ChannelStack::from_vec(self.bank.in_channels(), self.height, self.width, x.to_vec())
                .expect("input length matches bank");
        self.bank
            .apply_stack(&s)
            .expect("consistent bank")
            .into_vec()
    }

    fn apply_adjoint(&self, y: &[T]) -> Vec<T> {
        let s = ChannelStack::from_vec(
            self.bank.out_channels(),
            self.height,
            self.width,
            y.to_vec(),
        )
        .expect("output length matches bank");
        self.bank
            .adjoint_stack(&s)
            .expect("consistent bank")
            .into_vec()
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !scalar::all_finite(&data) {
            return Err(Error::NumericalFailure("dense matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    pub fn random_gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        Self {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| T::lit(rng.next_gaussian()))
                .collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == T::zero() {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] =
                        out.data[r * other.cols + c] + a * other.get(k, c);
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        self.data
            .chunks(self.cols)
            .map(|row| scalar::dot(row, x))
            .collect()
    }

    pub fn transpose_matvec(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (row, &yr) in self.data.chunks(self.cols).zip(y) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o = *o + a * yr;
            }
        }
        out
    }
}

impl<T: Real> LinearOperator<T> for DenseMatrix<T> {
    fn input_len(&self) -> usize {
        self.cols
    }

    fn output_len(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.matvec(x)
    }

    fn apply_adjoint(&self, y: &[T]) -> Vec<T> {
        self.transpose_matvec(y)
    }
}

/// Materializes `op` column by column from the standard basis.
pub fn dense_matrix_of<T: Real, Op: LinearOperator<T> + ?Sized>(op: &Op) -> Result<DenseMatrix<T>> {
    let n = op.input_len();
    let m = op.output_len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(n, DENSE_LIMIT));
    }
    let mut out = DenseMatrix::zeros(m, n);
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e[j] = T::one();
        let col = op.apply(&e);
        e[j] = T::zero();
        for (i, v) in col.into_iter().enumerate() {
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Largest singular value by power iteration on `AᵀA` from a random start.
pub fn operator_norm<T: Real, Op: LinearOperator<T> + ?Sized>(
    op: &Op,
    iters: usize,
    rng: &mut Rng,
) -> Result<T> {
    if iters == 0 {
        return Err(Error::InvalidArgument(
            "power iteration needs iters >= 1".into(),
        ));
    }
    let n = op.input_len();
    let mut v: Vec<T> = (0..n).map(|_| T::lit(rng.next_gaussian())).collect();
    let nv = scalar::norm2(&v);
    if nv == T::zero() {
        return Ok(T::zero());
    }
    v.iter_mut().for_each(|x| *x = *x / nv);
    let mut estimate = T::zero();
    for _ in 0..iters {
        let av = op.apply(&v);
        estimate = estimate.max(scalar::norm2(&av));
        let w = op.apply_adjoint(&av);
        let nw = scalar::norm2(&w);
        if nw == T::zero() {
            return Ok(estimate);
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    let av = op.apply(&v);
    Ok(estimate.max(scalar::norm2(&av)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(h: usize, w: usize, rng: &mut Rng) -> Image<f64> {
        Image::gaussian(h, w, 1.0, rng)
    }

    #[test]
    fn zero_mean_examples() {
        assert_eq!(
            project_zero_mean(&[1.0, 2.0, 3.0], 3).unwrap(),
            vec![-1.0, 0.0, 1.0]
        );
        let v = project_zero_mean(&[0.0, 1.0, -1.0, 0.0], 4).unwrap();
        assert_eq!(v, vec![0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(
            project_zero_mean(&[1.0, 2.0, 3.0], 4),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn zero_mean_random_49() {
        let mut rng = Rng::new(4);
        let taps: Vec<f64> = (0..49).map(|_| rng.next_gaussian()).collect();
        let p = project_zero_mean(&taps, 49).unwrap();
        assert!(p.iter().sum::<f64>().abs() < 1e-12);
        let pp = project_zero_mean(&p, 49).unwrap();
        assert!(scalar::max_abs_diff(&p, &pp) < 1e-15);
    }

    #[test]
    fn positive_normalized_examples() {
        assert_eq!(
            project_positive_normalized(&[-1.0, 1.0, 2.0]).unwrap(),
            vec![0.25, 0.25, 0.5]
        );
        assert_eq!(project_positive_normalized(&[5.0]).unwrap(), vec![1.0]);
        assert!(matches!(
            project_positive_normalized(&[0.0, 0.0]),
            Err(Error::DegenerateKernel)
        ));
        let mut rng = Rng::new(8);
        let taps: Vec<f64> = (0..9).map(|_| rng.next_gaussian()).collect();
        let p = project_positive_normalized(&taps).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&t| t >= 0.0));
        let pp = project_positive_normalized(&p).unwrap();
        assert!(scalar::max_abs_diff(&p, &pp) < 1e-15);
    }

    #[test]
    fn identity_bank_is_identity() {
        let mut rng = Rng::new(1);
        let x = random_image(5, 6, &mut rng);
        let bank = FilterBank::<f64>::identity(3);
        let s = bank.forward(&x);
        for c in 0..3 {
            assert_eq!(s.channel(c), x.as_slice());
        }
        let adj = bank.adjoint(&s).unwrap();
        for (a, b) in adj.as_slice().iter().zip(x.as_slice()) {
            assert!((a - 3.0 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_image_maps_to_zero() {
        let bank = FilterBank::<f64>::random(
            &[(1, 3, 1), (3, 3, 1)],
            3,
            KernelConstraint::Unconstrained,
            1.0,
            &mut Rng::new(2),
        )
        .unwrap();
        let s = bank.forward(&Image::zeros(8, 8));
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn differences_match_definition() {
        let mut rng = Rng::new(3);
        let x = random_image(4, 5, &mut rng);
        let s = FilterBank::<f64>::forward_differences().forward(&x);
        for i in 0..4 {
            for j in 0..5 {
                let dx = x.get(i, (j + 1) % 5) - x.get(i, j);
                let dy = x.get((i + 1) % 4, j) - x.get(i, j);
                assert!((s.channel(0)[i * 5 + j] - dx).abs() < 1e-14);
                assert!((s.channel(1)[i * 5 + j] - dy).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn circular_difference_dense_is_circulant() {
        let horizontal = vec![0.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0];
        let bank =
            FilterBank::<f64>::from_kernels(3, &[horizontal], KernelConstraint::ZeroMean).unwrap();
        let dense = dense_matrix_of(&BankOperator {
            bank: &bank,
            height: 1,
            width: 4,
        })
        .unwrap();
        let expected = [
            [-1.0, 1.0, 0.0, 0.0],
            [0.0, -1.0, 1.0, 0.0],
            [0.0, 0.0, -1.0, 1.0],
            [1.0, 0.0, 0.0, -1.0],
        ];
        for (r, row) in expected.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(dense.get(r, c), v);
            }
        }
    }

    #[test]
    fn dense_identity() {
        let id = DenseMatrix::<f64>::identity(4);
        assert_eq!(dense_matrix_of(&id).unwrap(), id);
    }

    #[test]
    fn dense_limit_enforced() {
        let bank = FilterBank::<f64>::identity(1);
        let op = BankOperator {
            bank: &bank,
            height: 65,
            width: 64,
        };
        assert!(matches!(dense_matrix_of(&op), Err(Error::TooLarge(..))));
    }

    #[test]
    fn grouped_stage_mixes_only_within_group() {
        let mut rng = Rng::new(12);
        let bank = FilterBank::<f64>::random(
            &[(1, 4, 1), (4, 4, 2)],
            3,
            KernelConstraint::Unconstrained,
            1.0,
            &mut rng,
        )
        .unwrap();
        let layer = &bank.layers()[1];
        // channel 0 of stage-two output must not depend on stage-one channels 2 and 3
        let mut probe = ChannelStack::<f64>::zeros(4, 6, 6);
        probe.channel_mut(2)[7] = 1.0;
        probe.channel_mut(3)[11] = 1.0;
        let out = layer.apply(probe.as_slice(), 6, 6);
        assert!(out[..36].iter().all(|&v| v == 0.0));
        assert!(out[36..72].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn power_iteration_examples() {
        let id = DenseMatrix::<f64>::identity(64);
        let n = operator_norm(&id, 10, &mut Rng::new(0)).unwrap();
        assert!((n - 1.0).abs() < 1e-8);
        let d = DenseMatrix::from_diagonal(&[1.0, 3.0, 2.0, 0.5]);
        let n: f64 = operator_norm(&d, 200, &mut Rng::new(0)).unwrap();
        assert!((n - 3.0).abs() < 1e-6);
        let z = DenseMatrix::<f64>::zeros(5, 5);
        assert_eq!(operator_norm(&z, 10, &mut Rng::new(0)).unwrap(), 0.0);
        assert!(operator_norm(&z, 0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn spectral_norm_of_differences() {
        // |e^{iω}-1|² peaks at 4 for each direction, so the stack peaks at 8
        let n = FilterBank::<f64>::forward_differences()
            .spectral_norm(8, 8)
            .unwrap();
        assert!((n * n - 8.0).abs() < 1e-12);
    }

    #[test]
    fn constraint_names_roundtrip() {
        for c in [
            KernelConstraint::Unconstrained,
            KernelConstraint::ZeroMean,
            KernelConstraint::PositiveNormalized,
        ] {
            assert_eq!(KernelConstraint::from_name(c.name()), Some(c));
        }
    }
}
