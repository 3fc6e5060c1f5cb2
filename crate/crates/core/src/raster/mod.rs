//! Image representation, portable I/O and convolution.
//!
//! Samples are stored row-major and channel-interleaved. All filters in the
//! crate use the correlation convention, `out(x, y) = Σ w(u, v) · in(x + u, y + v)`,
//! with edge replication at the borders.

mod convolve;
pub(crate) mod io;
mod kernel;

pub use convolve::{convolve, convolve_bank, convolve_direct, convolve_separable};
pub use io::{
    decode_fr32, decode_pnm, encode_fr32, encode_pnm, read_fr32, read_pnm, write_fr32, write_pnm, PnmDepth,
};
pub use kernel::{gaussian_kernel, Kernel};

use crate::{Error, Result, Scalar};

/// A `width × height × channels` grid of finite samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T: Scalar = f64> {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<T>,
}

impl<T: Scalar> Raster<T> {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Contract(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels == 0 {
            return Err(Error::Contract("raster needs at least one channel".into()));
        }
        if samples.len() != width * height * channels {
            return Err(Error::Contract(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    /// Builds a raster without re-validating; callers guarantee the invariants.
    pub(crate) fn from_parts(width: usize, height: usize, channels: usize, samples: Vec<T>) -> Self {
        debug_assert_eq!(samples.len(), width * height * channels);
        debug_assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            channels,
            samples,
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        assert!(width > 0 && height > 0 && channels > 0, "empty raster");
        Self::from_parts(width, height, channels, vec![value; width * height * channels])
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 1, T::zero())
    }

    /// Single-channel raster from a function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "empty raster");
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::from_parts(width, height, 1, samples)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> T {
        self.samples[(y * self.width + x) * self.channels + c]
    }

    /// Single-channel access.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        debug_assert_eq!(self.channels, 1);
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        debug_assert_eq!(self.channels, 1);
        self.samples[y * self.width + x] = value;
    }

    #[inline]
    pub fn set_at(&mut self, x: usize, y: usize, c: usize, value: T) {
        self.samples[(y * self.width + x) * self.channels + c] = value;
    }

    /// Single-channel access with edge replication outside the grid.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.samples[cy * self.width + cx]
    }

    pub fn same_shape<U: Scalar>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn require_gray(&self, op: &str) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::Contract(format!(
                "{op} needs a single-channel raster, got {} channels",
                self.channels
            )));
        }
        Ok(())
    }

    pub(crate) fn require_same_shape<U: Scalar>(&self, other: &Raster<U>, op: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Contract(format!(
                "{op}: dimension mismatch {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Extracts one channel as a single-channel raster.
    pub fn channel(&self, c: usize) -> Raster<T> {
        assert!(c < self.channels, "channel {c} out of range");
        let samples = self
            .samples
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Self::from_parts(self.width, self.height, 1, samples)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Raster<T> {
        Self::from_parts(
            self.width,
            self.height,
            self.channels,
            self.samples.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Elementwise combination of two rasters of identical shape.
    pub fn zip_map(&self, other: &Raster<T>, f: impl Fn(T, T) -> T) -> Raster<T> {
        assert!(
            self.same_shape(other) && self.channels == other.channels,
            "zip_map shape mismatch"
        );
        Self::from_parts(
            self.width,
            self.height,
            self.channels,
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn cast<U: Scalar>(&self) -> Raster<U> {
        Raster::from_parts(
            self.width,
            self.height,
            self.channels,
            self.samples.iter().map(|&v| U::of(v.as_f64())).collect(),
        )
    }

    pub fn min_value(&self) -> T {
        self.samples.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.samples.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn mean(&self) -> T {
        let sum: f64 = self.samples.iter().map(|v| v.as_f64()).sum();
        T::of(sum / self.samples.len() as f64)
    }

    /// Sum of squared samples, accumulated in `f64`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v.as_f64().powi(2)).sum()
    }
}

/// Luma conversion with weights 0.299 / 0.587 / 0.114. Single-channel input is
/// returned unchanged.
pub fn to_gray<T: Scalar>(raster: &Raster<T>) -> Result<Raster<T>> {
    match raster.channels() {
        1 => Ok(raster.clone()),
        3 => {
            let (wr, wg, wb) = (T::of(0.299), T::of(0.587), T::of(0.114));
            let samples = raster
                .samples()
                .chunks_exact(3)
                .map(|px| wr * px[0] + wg * px[1] + wb * px[2])
                .collect();
            Ok(Raster::from_parts(raster.width(), raster.height(), 1, samples))
        }
        c => Err(Error::Contract(format!("to_gray expects 1 or 3 channels, got {c}"))),
    }
}
