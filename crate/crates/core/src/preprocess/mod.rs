//! Conditioning of the modalities before feature extraction.

mod align;
mod clahe;
mod mca;

pub use align::{align_translation, apply_offset, crude_crack_map, AlignmentOffset, CrudeCrackMap};
pub use clahe::clahe;
pub use mca::{mca_separate, mca_separate_observed, McaParams, McaResult, McaStep};

use crate::raster::{convolve, gaussian_kernel, Raster};
use crate::{Result, Scalar};

/// Default crude-map threshold quantile and filter scale.
pub const CRUDE_QUANTILE: f64 = 0.98;
pub const CRUDE_SIGMA: f64 = 1.0;
/// Default CLAHE tiling and clip limit.
pub const CLAHE_TILES: usize = 8;
pub const CLAHE_CLIP: f64 = 3.0;

/// Removes slow X-ray background variation.
///
/// With `B` the Gaussian blur of the input, returns `input − (B − min B)`.
/// Nothing is clamped.
pub fn xray_flatten<T: Scalar>(raster: &Raster<T>, blur_sigma: f64) -> Result<Raster<T>> {
    raster.require_gray("xray_flatten")?;
    let blurred = convolve(raster, &gaussian_kernel(blur_sigma, 0, 0)?)?;
    let floor = blurred.min_value();
    Ok(raster.zip_map(&blurred, |x, b| x - (b - floor)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row_mean_variance(r: &Raster<f64>) -> f64 {
        let means: Vec<f64> = (0..r.height())
            .map(|y| (0..r.width()).map(|x| r.get(x, y)).sum::<f64>() / r.width() as f64)
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / means.len() as f64
    }

    #[test]
    fn constant_is_unchanged() {
        let c = Raster::filled(20, 20, 1, 0.4f64);
        let out = xray_flatten(&c, 3.0).unwrap();
        assert!(out.samples().iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn smooth_band_is_suppressed() {
        let band = 8.0;
        let r = Raster::from_fn(64, 256, |_, y| 0.2 + 0.5 * (-((y as f64 - 128.0) / band).powi(2) / 2.0).exp());
        let out = xray_flatten(&r, band).unwrap();
        let ratio = row_mean_variance(&out) / row_mean_variance(&r);
        assert!(ratio <= 0.1, "band variance kept {ratio}");
    }

    proptest! {
        #[test]
        fn flatten_is_shift_equivariant_and_mean_exact(seed in 0u64..1000, shift in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = Raster::from_fn(17, 13, |_, _| rng.random::<f64>());
            let a = xray_flatten(&r, 2.0).unwrap();
            let b = xray_flatten(&r.map(|v| v + shift), 2.0).unwrap();
            for (x, y) in a.samples().iter().zip(b.samples()) {
                prop_assert!((y - x - shift).abs() < 1e-10);
            }
            let blur = convolve(&r, &gaussian_kernel(2.0, 0, 0).unwrap()).unwrap();
            let lift = blur.map(|v| v - blur.min_value()).mean();
            prop_assert!((a.mean() - (r.mean() - lift)).abs() < 1e-10);
        }
    }
}
