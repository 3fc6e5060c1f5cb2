//! Leung-Malik filter bank (small-scale variant).
//!
//! Order of the 48 kernels:
//! - 0..18: first derivative, scale-major (σ ∈ {1, √2, 2}), 6 orientations each
//! - 18..36: second derivative, same grid
//! - 36..44: LoG at σ ∈ {1, √2, 2, 2√2} then at 3× those
//! - 44..48: Gaussians at σ ∈ {1, √2, 2, 2√2}
//!
//! Oriented filters are elongated 3:1 (σ across, 3σ along). Zero-DC filters
//! are mean-subtracted; every kernel is L1-normalized.

use std::f64::consts::{PI, SQRT_2};

use crate::raster::Kernel;
use crate::Scalar;

pub const LM_SIZE: usize = 48;
pub const LM_ORIENTATIONS: usize = 6;
pub const LM_DERIVATIVE_SCALES: [f64; 3] = [1.0, SQRT_2, 2.0];
pub const LM_BASE_SCALES: [f64; 4] = [1.0, SQRT_2, 2.0, 2.0 * SQRT_2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LmFilter {
    /// Oriented Gaussian derivative of order 1 or 2.
    Directional { order: usize, sigma: f64, orientation: usize },
    Log { sigma: f64 },
    Gaussian { sigma: f64 },
}

/// Descriptions of the 48 filters in bank order.
pub fn leung_malik_layout() -> Vec<LmFilter> {
    let mut out = Vec::with_capacity(LM_SIZE);
    for order in [1, 2] {
        for &sigma in &LM_DERIVATIVE_SCALES {
            for orientation in 0..LM_ORIENTATIONS {
                out.push(LmFilter::Directional { order, sigma, orientation });
            }
        }
    }
    for mult in [1.0, 3.0] {
        for &s in &LM_BASE_SCALES {
            out.push(LmFilter::Log { sigma: mult * s });
        }
    }
    for &sigma in &LM_BASE_SCALES {
        out.push(LmFilter::Gaussian { sigma });
    }
    out
}

fn gauss(t: f64, sigma: f64) -> f64 {
    (-t * t / (2.0 * sigma * sigma)).exp()
}

fn build(filter: LmFilter) -> (usize, Vec<f64>) {
    let (radius, f): (usize, Box<dyn Fn(f64, f64) -> f64>) = match filter {
        LmFilter::Directional { order, sigma, orientation } => {
            let theta = PI * orientation as f64 / LM_ORIENTATIONS as f64;
            let (s, c) = theta.sin_cos();
            let long = 3.0 * sigma;
            let f = move |u: f64, v: f64| {
                // `along` runs with the filter's long axis, `across` is differentiated.
                let along = u * c + v * s;
                let across = -u * s + v * c;
                let g = gauss(along, long) * gauss(across, sigma);
                match order {
                    1 => across / (sigma * sigma) * g,
                    _ => (across * across / sigma.powi(4) - 1.0 / (sigma * sigma)) * g,
                }
            };
            ((4.0 * long).ceil() as usize, Box::new(f))
        }
        LmFilter::Log { sigma } => {
            let f = move |u: f64, v: f64| {
                let r2 = u * u + v * v;
                (r2 / sigma.powi(4) - 2.0 / (sigma * sigma)) * (-r2 / (2.0 * sigma * sigma)).exp()
            };
            ((4.0 * sigma).ceil() as usize, Box::new(f))
        }
        LmFilter::Gaussian { sigma } => {
            let f = move |u: f64, v: f64| (-(u * u + v * v) / (2.0 * sigma * sigma)).exp();
            ((4.0 * sigma).ceil() as usize, Box::new(f))
        }
    };
    let r = radius as isize;
    let mut w: Vec<f64> = (-r..=r)
        .flat_map(|v| (-r..=r).map(move |u| (u, v)))
        .map(|(u, v)| f(u as f64, v as f64))
        .collect();
    if !matches!(filter, LmFilter::Gaussian { .. }) {
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|x| *x -= mean);
    }
    let l1: f64 = w.iter().map(|x| x.abs()).sum();
    w.iter_mut().for_each(|x| *x /= l1);
    (radius, w)
}

/// The 48 kernels in the documented order.
pub fn leung_malik_bank<T: Scalar>() -> Vec<Kernel<T>> {
    leung_malik_layout()
        .into_iter()
        .map(|f| {
            let (r, w) = build(f);
            Kernel::new(r, r, w.into_iter().map(T::of).collect()).expect("well-formed LM kernel")
        })
        .collect()
}
