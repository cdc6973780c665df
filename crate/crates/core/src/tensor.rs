//! Dense row-major images, channel stacks, the deterministic generator and PSNR.

use crate::error::{Error, Result};
use crate::scalar::{self, Real};

/// Real 2-D signal stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::zero())
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(
                "image dimensions must be positive".into(),
            ));
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} image",
                data.len(),
                height,
                width
            )));
        }
        if !scalar::all_finite(&data) {
            return Err(Error::NumericalFailure("image construction"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Image of i.i.d. standard normal samples scaled by `sigma`.
    pub fn gaussian(height: usize, width: usize, sigma: T, rng: &mut Rng) -> Self {
        let data = (0..height * width)
            .map(|_| sigma * T::lit(rng.next_gaussian()))
            .collect();
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn norm(&self) -> T {
        scalar::norm2(&self.data)
    }

    pub fn dot(&self, other: &Self) -> T {
        scalar::dot(&self.data, &other.data)
    }

    pub fn distance(&self, other: &Self) -> T {
        scalar::dist2(&self.data, &other.data)
    }

    pub fn is_finite(&self) -> bool {
        scalar::all_finite(&self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + scale * other`
    pub fn add_scaled(&self, scale: T, other: &Self) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + scale * b)
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// `N_C` images of identical shape stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> ChannelStack<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        assert!(
            channels > 0 && height > 0 && width > 0,
            "stack dimensions must be positive"
        );
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(
                "stack dimensions must be positive".into(),
            ));
        }
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{}x{} stack",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_images(images: &[Image<T>]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty channel list".into()))?;
        let (h, w) = first.shape();
        let mut data = Vec::with_capacity(images.len() * h * w);
        for img in images {
            first.same_shape(img)?;
            data.extend_from_slice(img.as_slice());
        }
        Ok(Self {
            channels: images.len(),
            height: h,
            width: w,
            data,
        })
    }

    pub fn gaussian(channels: usize, height: usize, width: usize, sigma: T, rng: &mut Rng) -> Self {
        let data = (0..channels * height * width)
            .map(|_| sigma * T::lit(rng.next_gaussian()))
            .collect();
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn channel_image(&self, c: usize) -> Image<T> {
        Image {
            height: self.height,
            width: self.width,
            data: self.channel(c).to_vec(),
        }
    }

    pub fn norm(&self) -> T {
        scalar::norm2(&self.data)
    }

    pub fn dot(&self, other: &Self) -> T {
        scalar::dot(&self.data, &other.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLITMIX_MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
const SPLITMIX_MIX2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 generator. Same seed, same stream, on every platform.
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(SPLITMIX_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(SPLITMIX_MIX1);
        z = (z ^ (z >> 27)).wrapping_mul(SPLITMIX_MIX2);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` from the top 53 bits.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.next_uniform() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal draw by Box-Muller (cosine branch, two uniforms per call).
    pub fn next_gaussian(&mut self) -> f64 {
        // 1 - u lies in (0, 1], keeping the logarithm finite
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Peak signal-to-noise ratio in dB with unit peak. Identical inputs give `+inf`.
pub fn psnr<T: Real>(reference: &Image<T>, test: &Image<T>) -> Result<T> {
    reference.same_shape(test)?;
    let n = T::from_usize_lossy(reference.len());
    let sse = reference
        .as_slice()
        .iter()
        .zip(test.as_slice())
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    let mse = sse / n;
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (T::one() / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rng_is_deterministic() {
        let a = Rng::new(0).next_uniform();
        let b = Rng::new(0).next_uniform();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((0.0..1.0).contains(&a));
    }

    #[test]
    fn rng_seeds_differ() {
        assert_ne!(Rng::new(0).next_uniform(), Rng::new(1).next_uniform());
    }

    #[test]
    fn splitmix_reference_value() {
        // first output of SplitMix64 seeded with 0
        assert_eq!(Rng::new(0).next_u64(), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn uniform_mean() {
        let mut rng = Rng::new(3);
        let n = 1_000_000;
        let mean = (0..n).map(|_| rng.next_uniform()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(11);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 0.01, "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "variance {var}");
    }

    #[test]
    fn gaussian_stream_is_bit_identical() {
        let a = Image::<f64>::gaussian(8, 8, 1.0, &mut Rng::new(9));
        let b = Image::<f64>::gaussian(8, 8, 1.0, &mut Rng::new(9));
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = Image::<f64>::gaussian(5, 7, 1.0, &mut Rng::new(1));
        assert!(psnr(&a, &a).unwrap().is_infinite());
    }

    #[test]
    fn psnr_constant_offset() {
        let a = Image::<f64>::zeros(4, 4);
        let b = Image::<f64>::filled(4, 4, 0.5);
        assert!((psnr(&a, &b).unwrap() - 6.020_599_913_279_624).abs() < 1e-12);
    }

    #[test]
    fn psnr_matches_direct_formula() {
        let mut rng = Rng::new(5);
        let a = Image::<f64>::gaussian(6, 9, 0.3, &mut rng);
        let b = Image::<f64>::gaussian(6, 9, 0.3, &mut rng);
        let mut mse = 0.0;
        for i in 0..a.len() {
            let d = a.as_slice()[i] - b.as_slice()[i];
            mse += d * d;
        }
        mse /= a.len() as f64;
        let expected = 10.0 * (1.0 / mse).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn psnr_shape_mismatch() {
        let a = Image::<f64>::zeros(4, 4);
        let b = Image::<f64>::zeros(4, 5);
        assert!(matches!(psnr(&a, &b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn psnr_permutation_invariant() {
        let mut rng = Rng::new(21);
        let a = Image::<f64>::gaussian(4, 4, 1.0, &mut rng);
        let b = Image::<f64>::gaussian(4, 4, 1.0, &mut rng);
        let perm: Vec<usize> = (0..16).rev().collect();
        let pa = Image::from_vec(4, 4, perm.iter().map(|&i| a.as_slice()[i]).collect()).unwrap();
        let pb = Image::from_vec(4, 4, perm.iter().map(|&i| b.as_slice()[i]).collect()).unwrap();
        let d = psnr(&a, &b).unwrap() - psnr(&pa, &pb).unwrap();
        assert!(d.abs() < 1e-12);
    }
}
