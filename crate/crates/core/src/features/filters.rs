//! Per-pixel filters shared by the feature bank and the crude crack maps.
//!
//! Polarity: dark-on-bright cracks produce large positive responses.

use rayon::prelude::*;

use crate::raster::{convolve, gaussian_kernel, Raster};
use crate::{Error, Result, Scalar};

/// The raster shifted so its first sample is zero. Derivative kernels only
/// sum to zero up to rounding; shifting first makes constants vanish exactly.
fn level_shifted<T: Scalar>(raster: &Raster<T>) -> Raster<T> {
    let base = raster.samples()[0];
    raster.map(|v| v - base)
}

/// Second-order Gaussian derivatives `(Ixx, Ixy, Iyy)` at scale `sigma`.
pub fn hessian<T: Scalar>(raster: &Raster<T>, sigma: f64) -> Result<[Raster<T>; 3]> {
    raster.require_gray("hessian")?;
    let raster = &level_shifted(raster);
    Ok([
        convolve(raster, &gaussian_kernel(sigma, 2, 0)?)?,
        convolve(raster, &gaussian_kernel(sigma, 1, 1)?)?,
        convolve(raster, &gaussian_kernel(sigma, 0, 2)?)?,
    ])
}

/// Angle of the `i`-th of `n` orientations equally spaced on `[0, π)`.
pub fn orientation_angle(i: usize, n: usize) -> f64 {
    std::f64::consts::PI * i as f64 / n as f64
}

/// Steered second directional derivative across each orientation.
///
/// Returns the maximum response over orientations and the index of the
/// maximizing orientation (first index wins ties), both as planes.
pub fn elongated_features<T: Scalar>(
    raster: &Raster<T>,
    sigma: f64,
    orientations: usize,
) -> Result<(Raster<T>, Raster<T>)> {
    raster.require_gray("elongated_features")?;
    if orientations < 2 {
        return Err(Error::Parameter(format!(
            "elongated filter needs at least 2 orientations, got {orientations}"
        )));
    }
    let [ixx, ixy, iyy] = hessian(raster, sigma)?;
    let coeffs: Vec<(T, T, T)> = (0..orientations)
        .map(|i| {
            let (s, c) = orientation_angle(i, orientations).sin_cos();
            (T::of(c * c), T::of(2.0 * s * c), T::of(s * s))
        })
        .collect();
    let n = raster.len();
    let mut best = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for p in 0..n {
        let (a, b, d) = (ixx.samples()[p], ixy.samples()[p], iyy.samples()[p]);
        let mut top = T::neg_infinity();
        let mut top_i = 0;
        for (i, &(cc, sc, ss)) in coeffs.iter().enumerate() {
            let r = cc * a + sc * b + ss * d;
            if r > top {
                top = r;
                top_i = i;
            }
        }
        best.push(top);
        arg.push(T::of(top_i as f64));
    }
    let (w, h) = (raster.width(), raster.height());
    Ok((Raster::from_parts(w, h, 1, best), Raster::from_parts(w, h, 1, arg)))
}

/// Eigenvalues of the symmetric matrix `[[a, b], [b, d]]`, larger first.
#[inline]
pub(crate) fn sym2_eigen(a: f64, b: f64, d: f64) -> (f64, f64) {
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean + rad, mean - rad)
}

pub const FRANGI_BETA: f64 = 0.5;

/// Multiscale 2-D Frangi vesselness for dark ridges.
///
/// Hessians are σ²-normalized. The structureness constant `c` is half the
/// largest Hessian Frobenius norm over the image and all scales, so scales
/// compete on a common footing. Returns the maximum vesselness over scales
/// and the index of the winning scale.
pub fn frangi_features<T: Scalar>(raster: &Raster<T>, sigmas: &[f64]) -> Result<(Raster<T>, Raster<T>)> {
    raster.require_gray("frangi_features")?;
    if sigmas.is_empty() {
        return Err(Error::Parameter("Frangi filter needs at least one scale".into()));
    }
    let n = raster.len();
    let mut eigen: Vec<Vec<(f64, f64)>> = Vec::with_capacity(sigmas.len());
    let mut max_norm: f64 = 0.0;
    for &sigma in sigmas {
        let [ixx, ixy, iyy] = hessian(raster, sigma)?;
        let s2 = sigma * sigma;
        let ev: Vec<(f64, f64)> = (0..n)
            .map(|p| {
                let (a, b, d) = (
                    s2 * ixx.samples()[p].as_f64(),
                    s2 * ixy.samples()[p].as_f64(),
                    s2 * iyy.samples()[p].as_f64(),
                );
                let (m1, m2) = sym2_eigen(a, b, d);
                if m1.abs() <= m2.abs() {
                    (m1, m2)
                } else {
                    (m2, m1)
                }
            })
            .collect();
        max_norm = ev
            .iter()
            .map(|&(l1, l2)| (l1 * l1 + l2 * l2).sqrt())
            .fold(max_norm, f64::max);
        eigen.push(ev);
    }
    let c = 0.5 * max_norm;
    let mut best = vec![0.0f64; n];
    let mut arg = vec![0usize; n];
    // Curvature at rounding level carries no structure.
    let peak = raster.samples().iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
    let floor = 64.0 * T::epsilon().as_f64() * peak.max(f64::MIN_POSITIVE);
    if max_norm > floor {
        let two_b2 = 2.0 * FRANGI_BETA * FRANGI_BETA;
        let two_c2 = 2.0 * c * c;
        for (si, ev) in eigen.iter().enumerate() {
            for (p, &(l1, l2)) in ev.iter().enumerate() {
                let v = vesselness(l1, l2, two_b2, two_c2);
                if v > best[p] {
                    best[p] = v;
                    arg[p] = si;
                }
            }
        }
    }
    let (w, h) = (raster.width(), raster.height());
    Ok((
        Raster::from_parts(w, h, 1, best.into_iter().map(T::of).collect()),
        Raster::from_parts(w, h, 1, arg.into_iter().map(|i| T::of(i as f64)).collect()),
    ))
}

/// `l1`, `l2` ordered by magnitude (`|l1| ≤ |l2|`).
#[inline]
pub(crate) fn vesselness(l1: f64, l2: f64, two_beta2: f64, two_c2: f64) -> f64 {
    if l2 <= 0.0 {
        return 0.0;
    }
    let rb = l1 / l2;
    let s2 = l1 * l1 + l2 * l2;
    ((-rb * rb / two_beta2).exp() * (1.0 - (-s2 / two_c2).exp())).clamp(0.0, 1.0)
}

pub const COHERENCE_EPS: f64 = 1e-12;

/// Structure tensor eigen-analysis.
///
/// Returns `(L1, L2, orientation, coherence)` where `L1 ≥ L2 ≥ 0`, the
/// orientation is the angle of the dominant eigenvector in `[0, π)` and
/// coherence is `(L1 − L2) / (L1 + L2 + 1e-12)`.
pub fn structure_tensor_features<T: Scalar>(
    raster: &Raster<T>,
    grad_sigma: f64,
    window_sigma: f64,
) -> Result<[Raster<T>; 4]> {
    raster.require_gray("structure_tensor_features")?;
    let ix = convolve(raster, &gaussian_kernel(grad_sigma, 1, 0)?)?;
    let iy = convolve(raster, &gaussian_kernel(grad_sigma, 0, 1)?)?;
    let window = gaussian_kernel(window_sigma, 0, 0)?;
    let j11 = convolve(&ix.zip_map(&ix, |a, b| a * b), &window)?;
    let j12 = convolve(&ix.zip_map(&iy, |a, b| a * b), &window)?;
    let j22 = convolve(&iy.zip_map(&iy, |a, b| a * b), &window)?;
    let n = raster.len();
    let mut planes: [Vec<T>; 4] = Default::default();
    for p in 0..n {
        let (a, b, d) = (
            j11.samples()[p].as_f64(),
            j12.samples()[p].as_f64(),
            j22.samples()[p].as_f64(),
        );
        let (l1, l2) = sym2_eigen(a, b, d);
        let (l1, l2) = (l1.max(0.0), l2.max(0.0));
        let mut theta = 0.5 * (2.0 * b).atan2(a - d);
        if theta < 0.0 {
            theta += std::f64::consts::PI;
        }
        if theta >= std::f64::consts::PI {
            theta -= std::f64::consts::PI;
        }
        planes[0].push(T::of(l1));
        planes[1].push(T::of(l2));
        planes[2].push(T::of(theta));
        planes[3].push(T::of((l1 - l2) / (l1 + l2 + COHERENCE_EPS)));
    }
    let (w, h) = (raster.width(), raster.height());
    Ok(planes.map(|p| Raster::from_parts(w, h, 1, p)))
}

/// Offsets `lo..=hi` covered by an even or odd window of `size` pixels.
/// Even windows put the origin at the top-left of their central 2×2 block.
#[inline]
pub(crate) fn window_offsets(size: usize) -> (isize, isize) {
    let s = size as isize;
    if size % 2 == 1 {
        (-(s / 2), s / 2)
    } else {
        (-(s / 2 - 1), s / 2)
    }
}

/// Separable running extremum over `[x+lo, x+hi] × [y+lo, y+hi]`.
fn rank_filter<T: Scalar>(raster: &Raster<T>, lo: isize, hi: isize, take_max: bool) -> Raster<T> {
    let (w, h) = (raster.width(), raster.height());
    let pick = |a: T, b: T| if take_max { a.max(b) } else { a.min(b) };
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = raster.get_clamped(x as isize + lo, y as isize);
            for u in lo + 1..=hi {
                acc = pick(acc, raster.get_clamped(x as isize + u, y as isize));
            }
            tmp[y * w + x] = acc;
        }
    }
    let tmp = Raster::from_parts(w, h, 1, tmp);
    Raster::from_fn(w, h, |x, y| {
        let mut acc = tmp.get_clamped(x as isize, y as isize + lo);
        for v in lo + 1..=hi {
            acc = pick(acc, tmp.get_clamped(x as isize, y as isize + v));
        }
        acc
    })
}

/// Morphological closing minus the input, flat square structuring element.
///
/// The 2×2 element has its origin at its top-left pixel; dilation uses the
/// reflected element so the closing is extensive and the output nonnegative.
pub fn black_top_hat<T: Scalar>(raster: &Raster<T>, se: usize) -> Result<Raster<T>> {
    raster.require_gray("black_top_hat")?;
    let (lo, hi) = match se {
        2 => (0, 1),
        3 => (-1, 1),
        _ => {
            return Err(Error::Parameter(format!(
                "black top hat structuring element must be 2 or 3, got {se}"
            )))
        }
    };
    let dilated = rank_filter(raster, -hi, -lo, true);
    let closed = rank_filter(&dilated, lo, hi, false);
    Ok(closed.zip_map(raster, |c, f| c - f))
}

/// Window median with edge replication; even windows take the lower-middle
/// order statistic.
pub fn median_filter<T: Scalar>(raster: &Raster<T>, size: usize) -> Result<Raster<T>> {
    raster.require_gray("median_filter")?;
    if ![3, 6, 12].contains(&size) {
        return Err(Error::Parameter(format!("median size must be 3, 6 or 12, got {size}")));
    }
    let (lo, hi) = window_offsets(size);
    let (w, h) = (raster.width(), raster.height());
    let count = size * size;
    let rank = (count - 1) / 2;
    let mut out = vec![T::zero(); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut buf = Vec::with_capacity(count);
        for (x, o) in row.iter_mut().enumerate() {
            buf.clear();
            for v in lo..=hi {
                for u in lo..=hi {
                    buf.push(raster.get_clamped(x as isize + u, y as isize + v));
                }
            }
            let (_, m, _) = buf.select_nth_unstable_by(rank, |a, b| a.partial_cmp(b).expect("finite"));
            *o = *m;
        }
    });
    Ok(Raster::from_parts(w, h, 1, out))
}

/// σ²-normalized Laplacian of Gaussian, `σ²·(Ixx + Iyy)`.
pub fn log_filter<T: Scalar>(raster: &Raster<T>, sigma: f64) -> Result<Raster<T>> {
    raster.require_gray("log_filter")?;
    let raster = &level_shifted(raster);
    let ixx = convolve(raster, &gaussian_kernel(sigma, 2, 0)?)?;
    let iyy = convolve(raster, &gaussian_kernel(sigma, 0, 2)?)?;
    let s2 = T::of(sigma * sigma);
    Ok(ixx.zip_map(&iyy, |a, b| s2 * (a + b)))
}

/// HSV hue in `[0, 1)`; achromatic pixels get 0.
pub fn hue<T: Scalar>(vis: &Raster<T>) -> Result<Raster<T>> {
    if vis.channels() != 3 {
        return Err(Error::Contract(format!("hue needs 3 channels, got {}", vis.channels())));
    }
    let samples = vis
        .samples()
        .chunks_exact(3)
        .map(|px| {
            let (r, g, b) = (px[0].as_f64(), px[1].as_f64(), px[2].as_f64());
            let max = r.max(g).max(b);
            let delta = max - r.min(g).min(b);
            if delta <= 0.0 {
                return T::zero();
            }
            let h = if max == r {
                ((g - b) / delta).rem_euclid(6.0)
            } else if max == g {
                (b - r) / delta + 2.0
            } else {
                (r - g) / delta + 4.0
            };
            T::of((h / 6.0).rem_euclid(1.0))
        })
        .collect();
    Ok(Raster::from_parts(vis.width(), vis.height(), 1, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64) -> Raster<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    fn vertical_dark_line(w: usize, h: usize, x0: usize, width: usize) -> Raster<f64> {
        Raster::from_fn(w, h, |x, _| if (x0..x0 + width).contains(&x) { 0.2 } else { 0.8 })
    }

    #[test]
    fn elongated_zero_on_constant() {
        let r = Raster::filled(16, 16, 1, 0.4);
        let (max, _) = elongated_features(&r, 1.0, 12).unwrap();
        assert!(max.samples().iter().all(|v: &f64| v.abs() < 1e-12));
    }

    #[test]
    fn elongated_needs_two_orientations() {
        let r = Raster::filled(4, 4, 1, 0.4);
        assert!(matches!(elongated_features(&r, 1.0, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn elongated_argmax_is_across_vertical_line() {
        let r = vertical_dark_line(33, 33, 16, 1);
        let n = 12;
        let (max, arg) = elongated_features(&r, 1.0, n).unwrap();
        // Brute force: direct convolution with each rotated second-derivative kernel.
        let sigma: f64 = 1.0;
        let g = gaussian_kernel::<f64>(sigma, 0, 0).unwrap();
        for y in [8usize, 16, 24] {
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..n {
                let (s, c) = orientation_angle(i, n).sin_cos();
                let k = Kernel::from_fn(4, 4, |u, v| {
                    let t = u as f64 * c + v as f64 * s;
                    (t * t / sigma.powi(4) - 1.0 / sigma.powi(2)) * g.weight(u, v)
                });
                let resp = crate::raster::convolve_direct(&r, &k).unwrap().get(16, y);
                if resp > best.0 {
                    best = (resp, i);
                }
            }
            let got = arg.get(16, y) as usize;
            let circ = (got as isize - best.1 as isize).rem_euclid(n as isize);
            assert!(circ <= 1 || circ >= n as isize - 1);
            assert!(got == 0 || got == 1 || got == n - 1, "argmax {got}");
            assert!(max.get(16, y) > 0.0);
        }
    }

    #[test]
    fn steering_matches_rotated_kernel() {
        let r = random(20, 18, 5);
        let sigma: f64 = 2.0;
        let [ixx, ixy, iyy] = hessian(&r, sigma).unwrap();
        let g = gaussian_kernel::<f64>(sigma, 0, 0).unwrap();
        let kxx = gaussian_kernel::<f64>(sigma, 2, 0).unwrap();
        let kxy = gaussian_kernel::<f64>(sigma, 1, 1).unwrap();
        let kyy = gaussian_kernel::<f64>(sigma, 0, 2).unwrap();
        let rad = g.radius_x() as isize;
        for i in 0..12 {
            let (s, c) = orientation_angle(i, 12).sin_cos();
            // Same discrete profiles, combined into one non-separable kernel.
            let discrete = Kernel::from_fn(rad as usize, rad as usize, |u, v| {
                c * c * kxx.weight(u, v) + 2.0 * s * c * kxy.weight(u, v) + s * s * kyy.weight(u, v)
            });
            // Continuous rotated second derivative of the Gaussian.
            let analytic = Kernel::from_fn(rad as usize, rad as usize, |u, v| {
                let t = u as f64 * c + v as f64 * s;
                (t * t / sigma.powi(4) - 1.0 / sigma.powi(2)) * g.weight(u, v)
            });
            let a = crate::raster::convolve_direct(&r, &discrete).unwrap();
            let b = crate::raster::convolve_direct(&r, &analytic).unwrap();
            for p in 0..r.len() {
                let steered = c * c * ixx.samples()[p] + 2.0 * s * c * ixy.samples()[p] + s * s * iyy.samples()[p];
                assert!((steered - a.samples()[p]).abs() < 1e-12);
                assert!((steered - b.samples()[p]).abs() < 5e-4, "{steered} {}", b.samples()[p]);
            }
        }
    }

    #[test]
    fn frangi_zero_on_constant_and_bounded() {
        let r = Raster::filled(16, 16, 1, 0.3);
        let (v, _) = frangi_features(&r, &[1.0, 2.0, 4.0]).unwrap();
        assert!(v.samples().iter().all(|&x| x == 0.0), "{:?}", &v.samples()[..4]);
        let (v, s) = frangi_features(&random(24, 24, 2), &[1.0, 2.0, 4.0]).unwrap();
        assert!(v.samples().iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(s.samples().iter().all(|&x| x == 0.0 || x == 1.0 || x == 2.0));
        assert!(frangi_features(&r, &[]).is_err());
    }

    #[test]
    fn frangi_picks_fine_scale_for_thin_line() {
        let r = vertical_dark_line(48, 48, 23, 2);
        let sigmas = [1.0, 2.0, 4.0];
        let (v, scale) = frangi_features(&r, &sigmas).unwrap();
        for y in [10usize, 24, 37] {
            let s = scale.get(23, y) as usize;
            assert!(s < 2, "picked sigma {}", sigmas[s]);
            assert!(v.get(23, y) > 0.0);
            // Single-scale runs agree on which scale is strongest.
            let per: Vec<f64> = sigmas
                .iter()
                .map(|&sg| {
                    let [a, b, d] = hessian(&r, sg).unwrap();
                    let (m1, m2) = sym2_eigen(sg * sg * a.get(23, y), sg * sg * b.get(23, y), sg * sg * d.get(23, y));
                    m1.abs().max(m2.abs())
                })
                .collect();
            assert!(per[2] < per[0].max(per[1]));
        }
    }

    #[test]
    fn structure_tensor_of_ramp() {
        let r = Raster::from_fn(32, 32, |x, _| x as f64);
        let [l1, l2, o, coh] = structure_tensor_features(&r, 1.0, 2.0).unwrap();
        for y in 10..22 {
            for x in 10..22 {
                assert!(l2.get(x, y).abs() < 1e-8);
                // Truncated derivative kernels recover the unit slope to about 1e-4.
                assert!((l1.get(x, y) - 1.0).abs() < 1e-3, "{}", l1.get(x, y));
                let th = o.get(x, y);
                assert!(th.min(std::f64::consts::PI - th) < 1e-8);
                assert!((coh.get(x, y) - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn structure_tensor_of_constant() {
        let r = Raster::filled(12, 12, 1, 0.5);
        let [l1, l2, _, coh] = structure_tensor_features(&r, 1.0, 2.0).unwrap();
        assert!(l1.samples().iter().chain(l2.samples()).all(|v: &f64| v.abs() < 1e-20));
        assert!(coh.samples().iter().all(|v: &f64| v.abs() < 1e-6));
    }

    #[test]
    fn top_hat_of_constant_and_pit() {
        let flat = Raster::filled(9, 9, 1, 0.6);
        for se in [2, 3] {
            assert!(black_top_hat(&flat, se).unwrap().samples().iter().all(|&v| v == 0.0));
        }
        let mut pit = flat.clone();
        pit.set(4, 4, 0.25);
        let out = black_top_hat(&pit, 3).unwrap();
        assert!((out.get(4, 4) - 0.35f64).abs() < 1e-15);
        assert!(matches!(black_top_hat(&flat, 4), Err(Error::Parameter(_))));
    }

    #[test]
    fn top_hat_is_nonnegative() {
        let r = random(15, 11, 4);
        for se in [2, 3] {
            assert!(black_top_hat(&r, se).unwrap().samples().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn median_behaviour() {
        let flat = Raster::filled(10, 10, 1, 0.25);
        for s in [3, 6, 12] {
            assert_eq!(median_filter(&flat, s).unwrap(), flat);
        }
        let mut spike = flat.clone();
        spike.set(5, 5, 1.0);
        assert_eq!(median_filter(&spike, 3).unwrap(), flat);
        assert!(median_filter(&flat, 5).is_err());
    }

    #[test]
    fn log_annihilates_affine() {
        let c = Raster::filled(20, 20, 1, 0.9);
        assert!(log_filter(&c, 1.0).unwrap().samples().iter().all(|v: &f64| v.abs() < 1e-10));
        let ramp = Raster::from_fn(40, 40, |x, y| 0.01 * x as f64 - 0.02 * y as f64 + 0.3);
        for sigma in [1.0, 2.0] {
            let out = log_filter(&ramp, sigma).unwrap();
            for y in 12..28 {
                for x in 12..28 {
                    assert!(out.get(x, y).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn log_peaks_at_blob_center() {
        let sigma: f64 = 2.0;
        let r = Raster::from_fn(31, 31, |x, y| {
            let d2 = ((x as f64 - 15.0).powi(2) + (y as f64 - 15.0).powi(2)) / (2.0 * sigma * sigma);
            1.0 - 0.5 * (-d2).exp()
        });
        let out = log_filter(&r, sigma).unwrap();
        let (mut best, mut at) = (0.0, (0, 0));
        for y in 0..31 {
            for x in 0..31 {
                if out.get(x, y).abs() > best {
                    best = out.get(x, y).abs();
                    at = (x, y);
                }
            }
        }
        assert_eq!(at, (15, 15));
        assert!(out.get(15, 15) > 0.0);
    }

    #[test]
    fn hue_of_primaries() {
        let r = Raster::<f64>::new(4, 1, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1., 0.5, 0.5, 0.5]).unwrap();
        let h = hue(&r).unwrap();
        let expect = [0.0, 1.0 / 3.0, 2.0 / 3.0, 0.0];
        for (a, b) in h.samples().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn filters_work_in_f32() {
        let r: Raster<f32> = random(12, 12, 8).cast();
        let (v, _) = frangi_features(&r, &[1.0, 2.0]).unwrap();
        assert!(v.samples().iter().all(|x| x.is_finite()));
        assert!(median_filter(&r, 6).is_ok());
    }
}
