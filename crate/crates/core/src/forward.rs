//! Forward models `H`: identity (denoising) and single-coil Cartesian masked DFT (MRI).

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linops::{DenseMatrix, LinearOperator};
use crate::scalar::Real;
use crate::tensor::{Image, Rng};

/// Data `y` in the range of a [`ForwardOp`].
#[derive(Clone, Debug, PartialEq)]
pub enum Measurements<T> {
    /// Spatial-domain data of the identity model.
    Image(Image<T>),
    /// Selected k-space coefficients as interleaved `(re, im)` pairs, row by
    /// row, selected columns in increasing index order.
    Kspace(Vec<T>),
}

impl<T: Real> Measurements<T> {
    pub fn as_slice(&self) -> &[T] {
        match self {
            Measurements::Image(img) => img.as_slice(),
            Measurements::Kspace(v) => v,
        }
    }

    pub fn norm(&self) -> T {
        crate::scalar::norm2(self.as_slice())
    }

    fn map_values(&self, mut f: impl FnMut(T) -> T) -> Self {
        match self {
            Measurements::Image(img) => {
                let mut out = img.clone();
                out.as_mut_slice().iter_mut().for_each(|v| *v = f(*v));
                Measurements::Image(out)
            }
            Measurements::Kspace(v) => Measurements::Kspace(v.iter().map(|&x| f(x)).collect()),
        }
    }
}

struct DftPlans<T: Real> {
    row_fwd: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> Clone for DftPlans<T> {
    fn clone(&self) -> Self {
        Self {
            row_fwd: Arc::clone(&self.row_fwd),
            col_fwd: Arc::clone(&self.col_fwd),
            row_inv: Arc::clone(&self.row_inv),
            col_inv: Arc::clone(&self.col_inv),
        }
    }
}

/// Orthonormal 2-D DFT restricted to a set of k-space columns.
#[derive(Clone)]
pub struct MaskedDft<T: Real> {
    height: usize,
    width: usize,
    mask: Vec<bool>,
    selected: Vec<usize>,
    plans: DftPlans<T>,
}

impl<T: Real> fmt::Debug for MaskedDft<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MaskedDft")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("selected", &self.selected)
            .finish()
    }
}

impl<T: Real> MaskedDft<T> {
    pub fn new(height: usize, width: usize, mask: Vec<bool>) -> Result<Self> {
        if !height.is_power_of_two() || !width.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "masked DFT needs power-of-two dimensions, got {height}x{width}"
            )));
        }
        if mask.len() != width {
            return Err(Error::ShapeMismatch(format!(
                "mask of length {} for width {width}",
                mask.len()
            )));
        }
        let selected: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect();
        if selected.is_empty() {
            return Err(Error::InvalidArgument("mask selects no column".into()));
        }
        let mut planner = FftPlanner::new();
        let plans = DftPlans {
            row_fwd: planner.plan_fft_forward(width),
            col_fwd: planner.plan_fft_forward(height),
            row_inv: planner.plan_fft_inverse(width),
            col_inv: planner.plan_fft_inverse(height),
        };
        Ok(Self {
            height,
            width,
            mask,
            selected,
            plans,
        })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn selected_columns(&self) -> &[usize] {
        &self.selected
    }

    pub fn measurement_len(&self) -> usize {
        2 * self.height * self.selected.len()
    }

    fn transform(&self, buf: &mut [Complex<T>], inverse: bool) {
        let (row, col) = if inverse {
            (&self.plans.row_inv, &self.plans.col_inv)
        } else {
            (&self.plans.row_fwd, &self.plans.col_fwd)
        };
        row.process(buf);
        let mut column = vec![Complex::new(T::zero(), T::zero()); self.height];
        for j in 0..self.width {
            for i in 0..self.height {
                column[i] = buf[i * self.width + j];
            }
            col.process(&mut column);
            for i in 0..self.height {
                buf[i * self.width + j] = column[i];
            }
        }
        let scale = T::one() / T::from_usize_lossy(self.height * self.width).sqrt();
        buf.iter_mut().for_each(|z| *z = *z * scale);
    }

    /// Full orthonormal spectrum of a real image.
    pub fn full_spectrum(&self, x: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.transform(&mut buf, false);
        buf
    }

    fn apply_flat(&self, x: &[T]) -> Vec<T> {
        let spectrum = self.full_spectrum(x);
        let mut out = Vec::with_capacity(self.measurement_len());
        for i in 0..self.height {
            for &j in &self.selected {
                let z = spectrum[i * self.width + j];
                out.push(z.re);
                out.push(z.im);
            }
        }
        out
    }

    fn adjoint_flat(&self, y: &[T]) -> Vec<T> {
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.height * self.width];
        let mut it = y.chunks_exact(2);
        for i in 0..self.height {
            for &j in &self.selected {
                let pair = it.next().expect("measurement length checked");
                buf[i * self.width + j] = Complex::new(pair[0], pair[1]);
            }
        }
        self.transform(&mut buf, true);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// `‖H‖₂`: `HᵀH` is diagonal in the Fourier basis with entries
    /// `(m(v) + m(-v)) / 2`, so the norm is 1 when some selected column has
    /// its mirror selected and `1/√2` otherwise.
    pub fn norm(&self) -> T {
        let w = self.width;
        let paired = self.selected.iter().any(|&j| self.mask[(w - j) % w]);
        if paired {
            T::one()
        } else {
            T::lit(0.5).sqrt()
        }
    }
}

#[derive(Clone, Debug)]
pub enum ForwardOp<T: Real> {
    Identity { height: usize, width: usize },
    MaskedDft(MaskedDft<T>),
}

impl<T: Real> ForwardOp<T> {
    pub fn identity(height: usize, width: usize) -> Self {
        ForwardOp::Identity { height, width }
    }

    pub fn masked_dft(height: usize, width: usize, mask: Vec<bool>) -> Result<Self> {
        Ok(ForwardOp::MaskedDft(MaskedDft::new(height, width, mask)?))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ForwardOp::Identity { .. })
    }

    pub fn image_shape(&self) -> (usize, usize) {
        match self {
            ForwardOp::Identity { height, width } => (*height, *width),
            ForwardOp::MaskedDft(m) => (m.height, m.width),
        }
    }

    /// Smallest singular value: 1 for the identity, 0 (not invertible) for masked DFT.
    pub fn sigma_min(&self) -> T {
        match self {
            ForwardOp::Identity { .. } => T::one(),
            ForwardOp::MaskedDft(_) => T::zero(),
        }
    }

    /// Exact spectral norm `‖H‖₂`.
    pub fn norm(&self) -> T {
        match self {
            ForwardOp::Identity { .. } => T::one(),
            ForwardOp::MaskedDft(m) => m.norm(),
        }
    }

    pub fn apply(&self, x: &Image<T>) -> Result<Measurements<T>> {
        if x.shape() != self.image_shape() {
            return Err(Error::ShapeMismatch(format!(
                "image {:?} for operator on {:?}",
                x.shape(),
                self.image_shape()
            )));
        }
        Ok(match self {
            ForwardOp::Identity { .. } => Measurements::Image(x.clone()),
            ForwardOp::MaskedDft(m) => Measurements::Kspace(m.apply_flat(x.as_slice())),
        })
    }

    pub fn adjoint(&self, y: &Measurements<T>) -> Result<Image<T>> {
        let (h, w) = self.image_shape();
        match (self, y) {
            (ForwardOp::Identity { .. }, Measurements::Image(img)) if img.shape() == (h, w) => {
                Ok(img.clone())
            }
            (ForwardOp::MaskedDft(m), Measurements::Kspace(v))
                if v.len() == m.measurement_len() =>
            {
                Image::from_vec(h, w, m.adjoint_flat(v))
            }
            _ => Err(Error::ShapeMismatch(
                "measurements do not match the forward model".into(),
            )),
        }
    }

    /// Zero vector in measurement space.
    pub fn zero_measurements(&self) -> Measurements<T> {
        let (h, w) = self.image_shape();
        match self {
            ForwardOp::Identity { .. } => Measurements::Image(Image::zeros(h, w)),
            ForwardOp::MaskedDft(m) => Measurements::Kspace(vec![T::zero(); m.measurement_len()]),
        }
    }

    /// `Hᵀ(Hx − y)`
    pub fn normal_residual(&self, x: &Image<T>, y: &Measurements<T>) -> Result<Image<T>> {
        match (self, y) {
            (ForwardOp::Identity { .. }, Measurements::Image(img)) => {
                x.same_shape(img)?;
                Ok(x.add_scaled(-T::one(), img))
            }
            _ => {
                let hx = self.apply(x)?;
                let r: Vec<T> = hx
                    .as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(&a, &b)| a - b)
                    .collect();
                let r = match hx {
                    Measurements::Image(img) => {
                        Measurements::Image(Image::from_vec(img.height(), img.width(), r)?)
                    }
                    Measurements::Kspace(_) => Measurements::Kspace(r),
                };
                self.adjoint(&r)
            }
        }
    }

    /// `½‖Hx − y‖²`
    pub fn data_fidelity(&self, x: &Image<T>, y: &Measurements<T>) -> Result<T> {
        let hx = self.apply(x)?;
        if hx.as_slice().len() != y.as_slice().len() {
            return Err(Error::ShapeMismatch("measurement length".into()));
        }
        let d = crate::scalar::dist2(hx.as_slice(), y.as_slice());
        Ok(T::lit(0.5) * d * d)
    }
}

impl<T: Real> LinearOperator<T> for ForwardOp<T> {
    fn input_len(&self) -> usize {
        let (h, w) = self.image_shape();
        h * w
    }

    fn output_len(&self) -> usize {
        match self {
            ForwardOp::Identity { height, width } => height * width,
            ForwardOp::MaskedDft(m) => m.measurement_len(),
        }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        match self {
            ForwardOp::Identity { .. } => x.to_vec(),
            ForwardOp::MaskedDft(m) => m.apply_flat(x),
        }
    }

    fn apply_adjoint(&self, y: &[T]) -> Vec<T> {
        match self {
            ForwardOp::Identity { .. } => y.to_vec(),
            ForwardOp::MaskedDft(m) => m.adjoint_flat(y),
        }
    }
}

/// A linear forward model `H` acting on `height x width` images, with
/// measurements handled as flat real vectors.
pub trait ForwardModel<T: Real>: LinearOperator<T> {
    fn image_shape(&self) -> (usize, usize);

    fn is_identity(&self) -> bool {
        false
    }

    /// `‖H‖₂` when known in closed form.
    fn exact_norm(&self) -> Option<T> {
        None
    }

    /// Smallest singular value, 0 when unknown or not invertible.
    fn sigma_min(&self) -> T {
        T::zero()
    }
}

impl<T: Real> ForwardModel<T> for ForwardOp<T> {
    fn image_shape(&self) -> (usize, usize) {
        ForwardOp::image_shape(self)
    }

    fn is_identity(&self) -> bool {
        ForwardOp::is_identity(self)
    }

    fn exact_norm(&self) -> Option<T> {
        Some(self.norm())
    }

    fn sigma_min(&self) -> T {
        ForwardOp::sigma_min(self)
    }
}

/// Dense matrix forward model on flattened row-major images.
#[derive(Clone, Debug)]
pub struct DenseForward<T: Real> {
    matrix: DenseMatrix<T>,
    height: usize,
    width: usize,
}

impl<T: Real> DenseForward<T> {
    pub fn new(matrix: DenseMatrix<T>, height: usize, width: usize) -> Result<Self> {
        if matrix.cols() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} columns for a {height}x{width} image",
                matrix.cols()
            )));
        }
        Ok(Self {
            matrix,
            height,
            width,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }
}

impl<T: Real> LinearOperator<T> for DenseForward<T> {
    fn input_len(&self) -> usize {
        self.matrix.cols()
    }

    fn output_len(&self) -> usize {
        self.matrix.rows()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.matrix.matvec(x)
    }

    fn apply_adjoint(&self, y: &[T]) -> Vec<T> {
        self.matrix.transpose_matvec(y)
    }
}

impl<T: Real> ForwardModel<T> for DenseForward<T> {
    fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Low frequencies in the order `0, 1, -1, 2, -2, ...` as column indices.
fn central_order(width: usize) -> impl Iterator<Item = usize> {
    (0..width).map(move |k| {
        let f = k.div_ceil(2);
        if k % 2 == 1 {
            f % width
        } else {
            (width - f) % width
        }
    })
}

/// Cartesian undersampling pattern over k-space columns in FFT order (index 0 is DC).
///
/// Keeps `⌈width · center_fraction⌉` lowest-frequency columns and fills up to
/// `⌈width / acc⌉` columns with uniformly drawn ones.
pub fn make_cartesian_mask(
    width: usize,
    acc: usize,
    center_fraction: f64,
    rng: &mut Rng,
) -> Result<Vec<bool>> {
    if acc == 0 {
        return Err(Error::InvalidArgument("acceleration must be >= 1".into()));
    }
    if acc > width {
        return Err(Error::InvalidArgument(format!(
            "acceleration {acc} exceeds width {width}"
        )));
    }
    if !(0.0..1.0).contains(&center_fraction) {
        return Err(Error::InvalidArgument(format!(
            "center fraction {center_fraction} outside [0, 1)"
        )));
    }
    let total = width.div_ceil(acc);
    let center = ((width as f64 * center_fraction).ceil() as usize).min(width);
    let mut mask = vec![false; width];
    for j in central_order(width).take(center) {
        mask[j] = true;
    }
    let mut pool: Vec<usize> = (0..width).filter(|&j| !mask[j]).collect();
    let missing = total.saturating_sub(center).min(pool.len());
    for k in 0..missing {
        let pick = k + rng.below(pool.len() - k);
        pool.swap(k, pick);
        mask[pool[k]] = true;
    }
    Ok(mask)
}

/// Adds i.i.d. `N(0, σ²)` to every real component.
pub fn add_noise<T: Real>(y: &Measurements<T>, sigma: T, rng: &mut Rng) -> Result<Measurements<T>> {
    if sigma < T::zero() || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level {sigma}")));
    }
    if sigma == T::zero() {
        return Ok(y.clone());
    }
    Ok(y.map_values(|v| v + sigma * T::lit(rng.next_gaussian())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_apply_and_adjoint() {
        let x = Image::<f64>::gaussian(4, 4, 1.0, &mut Rng::new(1));
        let h = ForwardOp::identity(4, 4);
        let y = h.apply(&x).unwrap();
        assert_eq!(y, Measurements::Image(x.clone()));
        assert_eq!(h.adjoint(&y).unwrap(), x);
    }

    #[test]
    fn constant_image_has_single_dc_coefficient() {
        let h = ForwardOp::<f64>::masked_dft(8, 8, vec![true; 8]).unwrap();
        let y = h.apply(&Image::filled(8, 8, 0.3)).unwrap();
        let v = y.as_slice();
        assert!((v[0] - 8.0 * 0.3).abs() < 1e-12);
        assert!(v[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn non_power_of_two_rejected() {
        assert!(ForwardOp::<f64>::masked_dft(6, 8, vec![true; 8]).is_err());
        assert!(ForwardOp::<f64>::masked_dft(8, 8, vec![false; 8]).is_err());
    }

    #[test]
    fn mask_examples() {
        assert!(make_cartesian_mask(16, 1, 0.08, &mut Rng::new(0))
            .unwrap()
            .iter()
            .all(|&m| m));
        let m = make_cartesian_mask(32, 4, 0.08, &mut Rng::new(0)).unwrap();
        assert_eq!(m.iter().filter(|&&b| b).count(), 8);
        assert!(m[0] && m[1] && m[31]);
        assert_eq!(
            m,
            make_cartesian_mask(32, 4, 0.08, &mut Rng::new(0)).unwrap()
        );
        assert!(make_cartesian_mask(8, 9, 0.08, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let y = Measurements::Kspace(vec![1.0, 2.0, 3.0]);
        assert_eq!(add_noise(&y, 0.0, &mut Rng::new(1)).unwrap(), y);
        assert!(add_noise(&y, -1.0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn noise_std_matches() {
        let sigma = 25.0 / 255.0;
        let y = Measurements::Image(Image::<f64>::zeros(1000, 1000));
        let noisy = add_noise(&y, sigma, &mut Rng::new(4)).unwrap();
        let v = noisy.as_slice();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64).sqrt();
        assert!((std / sigma - 1.0).abs() < 0.01, "std {std}");
        let again = add_noise(&y, sigma, &mut Rng::new(4)).unwrap();
        assert_eq!(noisy, again);
    }

    #[test]
    fn unpaired_mask_norm() {
        // column 1 of 8 alone: its mirror 7 is missing
        let mut mask = vec![false; 8];
        mask[1] = true;
        let h = ForwardOp::<f64>::masked_dft(8, 8, mask).unwrap();
        assert!((h.norm() - 0.5f64.sqrt()).abs() < 1e-15);
        let est: f64 = crate::linops::operator_norm(&h, 200, &mut Rng::new(1)).unwrap();
        assert!((est - 0.5f64.sqrt()).abs() < 1e-8);
    }
}
