use crate::raster::Raster;
use crate::{Error, Result, Scalar};

const BINS: usize = 256;

/// Contrast-limited adaptive histogram equalization.
///
/// The input range is rescaled onto 256 bins. Each tile's histogram is
/// clipped at `clip_limit` times the uniform bin height, the excess is spread
/// evenly over all bins, and the tile maps a bin to its normalized cumulative
/// count. Per-pixel output interpolates bilinearly between the mappings of
/// the four nearest tile centers. A constant input is returned clamped to
/// `[0, 1]`.
pub fn clahe<T: Scalar>(raster: &Raster<T>, tiles_x: usize, tiles_y: usize, clip_limit: f64) -> Result<Raster<T>> {
    raster.require_gray("clahe")?;
    let (w, h) = (raster.width(), raster.height());
    if tiles_x == 0 || tiles_y == 0 || tiles_x > w || tiles_y > h {
        return Err(Error::Parameter(format!(
            "{tiles_x}x{tiles_y} tiles do not fit a {w}x{h} image"
        )));
    }
    if !(clip_limit > 1.0) {
        return Err(Error::Parameter(format!("clip limit {clip_limit} must exceed 1")));
    }
    let (lo, hi) = (raster.min_value().as_f64(), raster.max_value().as_f64());
    if !(hi > lo) {
        return Ok(raster.map(|v| v.max(T::zero()).min(T::one())));
    }
    let bin_of = |v: T| (((v.as_f64() - lo) / (hi - lo) * BINS as f64) as usize).min(BINS - 1);
    let bins: Vec<usize> = raster.samples().iter().map(|&v| bin_of(v)).collect();

    let span = |i: usize, n: usize, total: usize| (i * total / n, (i + 1) * total / n);
    let mut maps = vec![[0.0f64; BINS]; tiles_x * tiles_y];
    for ty in 0..tiles_y {
        let (y0, y1) = span(ty, tiles_y, h);
        for tx in 0..tiles_x {
            let (x0, x1) = span(tx, tiles_x, w);
            let mut hist = [0.0f64; BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bins[y * w + x]] += 1.0;
                }
            }
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            let limit = clip_limit * count / BINS as f64;
            let mut excess = 0.0;
            for b in hist.iter_mut() {
                if *b > limit {
                    excess += *b - limit;
                    *b = limit;
                }
            }
            let share = excess / BINS as f64;
            let map = &mut maps[ty * tiles_x + tx];
            let mut cdf = 0.0;
            for (m, b) in map.iter_mut().zip(hist) {
                cdf += b + share;
                *m = (cdf / count).min(1.0);
            }
        }
    }

    // Fractional tile coordinate of a pixel, relative to tile centers.
    let locate = |p: usize, n: usize, total: usize| {
        let t = (p as f64 + 0.5) * n as f64 / total as f64 - 0.5;
        let i0 = (t.floor().max(0.0) as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, (t - i0 as f64).clamp(0.0, 1.0))
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (j0, j1, fy) = locate(y, tiles_y, h);
        for x in 0..w {
            let (i0, i1, fx) = locate(x, tiles_x, w);
            let b = bins[y * w + x];
            let m = |i: usize, j: usize| maps[j * tiles_x + i][b];
            let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
            let top = lerp(m(i0, j0), m(i1, j0), fx);
            let bottom = lerp(m(i0, j1), m(i1, j1), fx);
            out.push(T::of(lerp(top, bottom, fy).clamp(0.0, 1.0)));
        }
    }
    Ok(Raster::from_parts(w, h, 1, out))
}
