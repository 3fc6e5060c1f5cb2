use crate::raster::Raster;
use crate::{Result, Scalar};

pub const LBP_POINTS: usize = 16;
pub const LBP_RADIUS: f64 = 3.0;
/// Uniform patterns map to 0..=16 one-bits; everything else to 17.
pub const LBP_CATEGORIES: u32 = LBP_POINTS as u32 + 2;

/// Circular sampling offsets, snapped to the grid where they land on it.
fn ring() -> [(f64, f64); LBP_POINTS] {
    let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
    std::array::from_fn(|p| {
        let a = 2.0 * std::f64::consts::PI * p as f64 / LBP_POINTS as f64;
        (snap(LBP_RADIUS * a.cos()), snap(-LBP_RADIUS * a.sin()))
    })
}

/// Bilinear sample with edge replication; exact on constant neighborhoods.
#[inline]
fn bilinear<T: Scalar>(r: &Raster<T>, x: f64, y: f64) -> T {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (T::of(x - x0), T::of(y - y0));
    let (xi, yi) = (x0 as isize, y0 as isize);
    let a = r.get_clamped(xi, yi);
    let b = r.get_clamped(xi + 1, yi);
    let c = r.get_clamped(xi, yi + 1);
    let d = r.get_clamped(xi + 1, yi + 1);
    let top = a + fx * (b - a);
    let bottom = c + fx * (d - c);
    top + fy * (bottom - top)
}

/// Rotation-invariant uniform LBP code (16 samples, radius 3).
///
/// A neighbor at least as bright as the center sets its bit. Patterns with at
/// most two circular 0/1 transitions map to their number of set bits, all
/// others to 17. Output values are categories `0..=17`.
pub fn lbp_riu<T: Scalar>(raster: &Raster<T>) -> Result<Raster<T>> {
    raster.require_gray("lbp_riu")?;
    let offsets = ring();
    Ok(Raster::from_fn(raster.width(), raster.height(), |x, y| {
        let center = raster.get(x, y);
        let bits: [bool; LBP_POINTS] =
            std::array::from_fn(|p| bilinear(raster, x as f64 + offsets[p].0, y as f64 + offsets[p].1) >= center);
        let transitions = (0..LBP_POINTS)
            .filter(|&p| bits[p] != bits[(p + 1) % LBP_POINTS])
            .count();
        let category = if transitions <= 2 {
            bits.iter().filter(|&&b| b).count()
        } else {
            LBP_POINTS + 1
        };
        T::of(category as f64)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Packs the comparison bits into a u16 and classifies with popcount.
    fn oracle(r: &Raster<f64>, x: usize, y: usize) -> u32 {
        let mut code: u16 = 0;
        for p in 0..16 {
            let a = std::f64::consts::TAU * p as f64 / 16.0;
            let (dx, dy) = (3.0 * a.cos(), -3.0 * a.sin());
            let (sx, sy) = (x as f64 + dx, y as f64 + dy);
            let (sx, sy) = (
                if (sx - sx.round()).abs() < 1e-9 { sx.round() } else { sx },
                if (sy - sy.round()).abs() < 1e-9 { sy.round() } else { sy },
            );
            let (x0, y0) = (sx.floor() as isize, sy.floor() as isize);
            let (fx, fy) = (sx - sx.floor(), sy - sy.floor());
            let g = |i: isize, j: isize| r.get_clamped(i, j);
            let top = g(x0, y0) + fx * (g(x0 + 1, y0) - g(x0, y0));
            let bot = g(x0, y0 + 1) + fx * (g(x0 + 1, y0 + 1) - g(x0, y0 + 1));
            if top + fy * (bot - top) >= r.get(x, y) {
                code |= 1 << p;
            }
        }
        let transitions = (code ^ code.rotate_left(1)).count_ones();
        if transitions <= 2 {
            code.count_ones()
        } else {
            17
        }
    }

    #[test]
    fn constant_image_is_all_ones() {
        let r = Raster::filled(9, 9, 1, 0.37);
        assert!(lbp_riu(&r).unwrap().samples().iter().all(|&v| v == 16.0));
    }

    #[test]
    fn bright_peak_is_category_zero() {
        let mut r = Raster::filled(11, 11, 1, 0.1);
        r.set(5, 5, 0.9);
        assert_eq!(lbp_riu(&r).unwrap().get(5, 5), 0.0);
    }

    #[test]
    fn matches_bit_oracle_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = Raster::from_fn(14, 12, |_, _| rng.random::<f64>());
        let out = lbp_riu(&r).unwrap();
        for y in 0..12 {
            for x in 0..14 {
                assert_eq!(out.get(x, y) as u32, oracle(&r, x, y), "at ({x},{y})");
            }
        }
    }

    #[test]
    fn invariant_under_positive_affine_remap() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let r = Raster::from_fn(16, 16, |_, _| rng.random::<f64>());
        let remapped = r.map(|v| 4.0 * v + 0.5);
        assert_eq!(lbp_riu(&r).unwrap(), lbp_riu(&remapped).unwrap());
    }
}
