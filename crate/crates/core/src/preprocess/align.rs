use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{elongated_features, Modality, ELONGATED_ORIENTATIONS};
use crate::raster::Raster;
use crate::{Error, Result, Scalar};

/// Binary first guess at crack locations, used only for alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct CrudeCrackMap<T: Scalar = f64> {
    /// 1 marks a candidate crack pixel, 0 background.
    pub mask: Raster<T>,
    pub source: Option<Modality>,
    /// Set when the input had no usable response and the mask is empty.
    pub degenerate: bool,
}

impl<T: Scalar> CrudeCrackMap<T> {
    pub fn marked(&self) -> usize {
        self.mask.samples().iter().filter(|v| **v > T::zero()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.marked() == 0
    }
}

/// Thresholds the maximal elongated-filter response at a quantile.
///
/// Pixels at or above the `quantile` order statistic of the response are
/// marked, provided the response there is strictly positive.
pub fn crude_crack_map<T: Scalar>(raster: &Raster<T>, sigma: f64, quantile: f64) -> Result<CrudeCrackMap<T>> {
    raster.require_gray("crude_crack_map")?;
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::Parameter(format!("quantile {quantile} outside (0, 1)")));
    }
    let empty = |degenerate| CrudeCrackMap {
        mask: Raster::zeros(raster.width(), raster.height()),
        source: None,
        degenerate,
    };
    if raster.min_value() == raster.max_value() {
        return Ok(empty(true));
    }
    let (response, _) = elongated_features(raster, sigma, ELONGATED_ORIENTATIONS)?;
    let values: Vec<f64> = response.samples().iter().map(|v| v.as_f64()).collect();
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Responses within rounding of zero are treated as no response.
    let floor = 1e-9 * peak;
    if !(peak > 0.0) {
        return Ok(empty(true));
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let q = sorted[(quantile * (sorted.len() - 1) as f64).floor() as usize];
    let mask = Raster::from_parts(
        raster.width(),
        raster.height(),
        1,
        values
            .iter()
            .map(|&v| if v >= q && v > floor { T::one() } else { T::zero() })
            .collect(),
    );
    Ok(CrudeCrackMap {
        mask,
        source: None,
        degenerate: false,
    })
}

/// Integer translation between two modalities.
///
/// `moving(x, y)` corresponds to `reference(x - dx, y - dy)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentOffset {
    pub dx: i64,
    pub dy: i64,
    /// Normalized cross-correlation of the masks at this offset.
    pub score: f64,
}

impl AlignmentOffset {
    pub fn identity() -> Self {
        Self { dx: 0, dy: 0, score: 1.0 }
    }
}

fn ncc<T: Scalar>(reference: &Raster<T>, moving: &Raster<T>, dx: i64, dy: i64) -> f64 {
    let (w, h) = (reference.width() as i64, reference.height() as i64);
    let (x0, x1) = (dx.max(0), (w + dx).min(w));
    let (y0, y1) = (dy.max(0), (h + dy).min(h));
    if x0 >= x1 || y0 >= y1 {
        return 0.0;
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let a = reference.get((x - dx) as usize, (y - dy) as usize).as_f64();
            let b = moving.get(x as usize, y as usize).as_f64();
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    ((sab - sa * sb / n) / (va * vb).sqrt()).clamp(-1.0, 1.0)
}

/// Exhaustive search for the translation maximizing mask correlation.
///
/// Correlation is taken over the overlap of the two masks. Scores within
/// 1e-12 count as ties, which go to the smallest `|dx| + |dy|`, then the
/// smallest `dy`, then the smallest `dx`.
pub fn align_translation<T: Scalar>(
    reference: &CrudeCrackMap<T>,
    moving: &CrudeCrackMap<T>,
    radius: usize,
) -> Result<AlignmentOffset> {
    reference.mask.require_same_shape(&moving.mask, "align_translation")?;
    if reference.is_empty() || moving.is_empty() {
        return Err(Error::Contract("no crack structure to align".into()));
    }
    let r = radius as i64;
    let candidates: Vec<(i64, i64)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|&(dx, dy)| ncc(&reference.mask, &moving.mask, dx, dy))
        .collect();
    let rank = |i: usize| {
        let (dx, dy) = candidates[i];
        (dx.abs() + dy.abs(), dy, dx)
    };
    let mut best = 0;
    for i in 1..candidates.len() {
        let better = scores[i] > scores[best] + 1e-12
            || ((scores[i] - scores[best]).abs() <= 1e-12 && rank(i) < rank(best));
        if better {
            best = i;
        }
    }
    let (dx, dy) = candidates[best];
    Ok(AlignmentOffset { dx, dy, score: scores[best] })
}

/// Moves `raster` onto the reference grid: `out(x, y) = raster(x + dx, y + dy)`.
///
/// Samples falling outside are filled from the nearest edge.
pub fn apply_offset<T: Scalar>(raster: &Raster<T>, offset: &AlignmentOffset) -> Raster<T> {
    let (w, h, c) = (raster.width(), raster.height(), raster.channels());
    let mut samples = Vec::with_capacity(raster.len());
    for y in 0..h {
        let sy = (y as i64 + offset.dy).clamp(0, h as i64 - 1) as usize;
        for x in 0..w {
            let sx = (x as i64 + offset.dx).clamp(0, w as i64 - 1) as usize;
            samples.extend((0..c).map(|k| raster.at(sx, sy, k)));
        }
    }
    Raster::from_parts(w, h, c, samples)
}
