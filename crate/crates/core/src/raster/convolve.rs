use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{Kernel, Raster};
use crate::{Result, Scalar};

/// Non-separable kernels with more taps than this go through the FFT path.
const DIRECT_TAP_LIMIT: usize = 21 * 21;

/// Correlates a single-channel raster with `kernel`, replicating edges.
///
/// Separable kernels run as two 1-D passes; large non-separable kernels are
/// evaluated in the frequency domain. Both agree with [`convolve_direct`] to
/// rounding error.
pub fn convolve<T: Scalar>(raster: &Raster<T>, kernel: &Kernel<T>) -> Result<Raster<T>> {
    raster.require_gray("convolve")?;
    if let Some((kx, ky)) = kernel.factors() {
        return convolve_separable(raster, kx, ky);
    }
    if kernel.weights().len() > DIRECT_TAP_LIMIT {
        return Ok(fft_bank(raster, std::slice::from_ref(kernel)).remove(0));
    }
    convolve_direct(raster, kernel)
}

/// Direct 2-D correlation. Rows are computed in parallel; every output
/// sample is the same ordered sum regardless of thread count.
pub fn convolve_direct<T: Scalar>(raster: &Raster<T>, kernel: &Kernel<T>) -> Result<Raster<T>> {
    raster.require_gray("convolve")?;
    let (w, h) = (raster.width(), raster.height());
    let (rx, ry) = (kernel.radius_x(), kernel.radius_y());
    let padded = pad_replicate(raster, rx, ry);
    let pw = w + 2 * rx;
    let kw = kernel.width();
    let weights = kernel.weights();
    let mut out = vec![T::zero(); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for kv in 0..kernel.height() {
                let src = &padded[(y + kv) * pw + x..(y + kv) * pw + x + kw];
                let wrow = &weights[kv * kw..(kv + 1) * kw];
                for (&s, &k) in src.iter().zip(wrow) {
                    acc += s * k;
                }
            }
            *o = acc;
        }
    });
    Ok(Raster::from_parts(w, h, 1, out))
}

/// Horizontal pass with `kx`, then vertical pass with `ky`.
pub fn convolve_separable<T: Scalar>(raster: &Raster<T>, kx: &[T], ky: &[T]) -> Result<Raster<T>> {
    raster.require_gray("convolve")?;
    assert!(kx.len() % 2 == 1 && ky.len() % 2 == 1);
    let (w, h) = (raster.width(), raster.height());
    let (rx, ry) = (kx.len() / 2, ky.len() / 2);
    let src = raster.samples();

    let mut tmp = vec![T::zero(); w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let line = &src[y * w..(y + 1) * w];
        let padded: Vec<T> = (0..w + 2 * rx)
            .map(|i| line[(i as isize - rx as isize).clamp(0, w as isize - 1) as usize])
            .collect();
        for (x, o) in row.iter_mut().enumerate() {
            *o = padded[x..x + kx.len()]
                .iter()
                .zip(kx)
                .fold(T::zero(), |acc, (&s, &k)| acc + s * k);
        }
    });

    let mut out = vec![T::zero(); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (t, &k) in ky.iter().enumerate() {
            let sy = (y as isize + t as isize - ry as isize).clamp(0, h as isize - 1) as usize;
            let line = &tmp[sy * w..(sy + 1) * w];
            for (o, &s) in row.iter_mut().zip(line) {
                *o += s * k;
            }
        }
    });
    Ok(Raster::from_parts(w, h, 1, out))
}

/// Correlates one raster with many kernels, sharing the image spectrum.
pub fn convolve_bank<T: Scalar>(raster: &Raster<T>, kernels: &[Kernel<T>]) -> Result<Vec<Raster<T>>> {
    raster.require_gray("convolve_bank")?;
    if kernels.is_empty() {
        return Ok(Vec::new());
    }
    Ok(fft_bank(raster, kernels))
}

fn pad_replicate<T: Scalar>(raster: &Raster<T>, rx: usize, ry: usize) -> Vec<T> {
    let (w, h) = (raster.width(), raster.height());
    let pw = w + 2 * rx;
    let ph = h + 2 * ry;
    let mut out = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        for px in 0..pw {
            out.push(raster.get_clamped(px as isize - rx as isize, py as isize - ry as isize));
        }
    }
    out
}

/// Smallest 5-smooth integer not below `n`.
fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct Plan2d {
    nx: usize,
    ny: usize,
    fx: std::sync::Arc<dyn rustfft::Fft<f64>>,
    fy: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ix: std::sync::Arc<dyn rustfft::Fft<f64>>,
    iy: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Plan2d {
    fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fx: planner.plan_fft_forward(nx),
            fy: planner.plan_fft_forward(ny),
            ix: planner.plan_fft_inverse(nx),
            iy: planner.plan_fft_inverse(ny),
        }
    }

    /// Row-major `ny × nx` input; output spectrum is stored transposed (`nx × ny`).
    fn forward(&self, data: &mut Vec<Complex<f64>>) {
        self.fx.process(data);
        *data = transpose(data, self.nx, self.ny);
        self.fy.process(data);
    }

    /// Inverse of [`Plan2d::forward`], unnormalized.
    fn inverse(&self, data: &mut Vec<Complex<f64>>) {
        self.iy.process(data);
        *data = transpose(data, self.ny, self.nx);
        self.ix.process(data);
    }
}

/// Transposes a row-major `rows × cols` matrix given as `cols`-length rows.
fn transpose(data: &[Complex<f64>], cols: usize, rows: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

fn fft_bank<T: Scalar>(raster: &Raster<T>, kernels: &[Kernel<T>]) -> Vec<Raster<T>> {
    let (w, h) = (raster.width(), raster.height());
    let rx = kernels.iter().map(Kernel::radius_x).max().unwrap_or(0);
    let ry = kernels.iter().map(Kernel::radius_y).max().unwrap_or(0);
    let (pw, ph) = (w + 2 * rx, h + 2 * ry);
    let (nx, ny) = (fast_len(pw), fast_len(ph));
    let plan = Plan2d::new(nx, ny);

    let padded = pad_replicate(raster, rx, ry);
    let mut image = vec![Complex::new(0.0, 0.0); nx * ny];
    for y in 0..ph {
        for x in 0..pw {
            image[y * nx + x] = Complex::new(padded[y * pw + x].as_f64(), 0.0);
        }
    }
    plan.forward(&mut image);
    let scale = 1.0 / (nx * ny) as f64;

    kernels
        .par_iter()
        .map(|kernel| {
            let (krx, kry) = (kernel.radius_x() as isize, kernel.radius_y() as isize);
            let mut spec = vec![Complex::new(0.0, 0.0); nx * ny];
            for v in -kry..=kry {
                for u in -krx..=krx {
                    let cx = u.rem_euclid(nx as isize) as usize;
                    let cy = v.rem_euclid(ny as isize) as usize;
                    spec[cy * nx + cx] = Complex::new(kernel.weight(u, v).as_f64(), 0.0);
                }
            }
            plan.forward(&mut spec);
            for (s, &i) in spec.iter_mut().zip(&image) {
                *s = i * s.conj();
            }
            plan.inverse(&mut spec);
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    out.push(T::of(spec[(y + ry) * nx + x + rx].re * scale));
                }
            }
            Raster::from_parts(w, h, 1, out)
        })
        .collect()
}
