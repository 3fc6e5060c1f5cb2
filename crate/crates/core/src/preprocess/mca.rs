use rayon::prelude::*;

use crate::raster::Raster;
use crate::{Error, Result, Scalar};

/// Cartoon and texture layers of an image.
#[derive(Clone, Debug, PartialEq)]
pub struct McaResult<T: Scalar = f64> {
    pub cartoon: Raster<T>,
    pub texture: Raster<T>,
    /// `‖input − cartoon − texture‖² / ‖input‖²`, zero for a zero input.
    pub residual_energy: f64,
    /// Relative residual energy after each iteration.
    pub energy_trace: Vec<f64>,
}

/// Parameters of the two-dictionary separation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McaParams {
    pub iterations: usize,
    /// Side of the local DCT blocks; blocks overlap by half.
    pub block: usize,
    /// Detail levels of the undecimated wavelet frame.
    pub levels: usize,
}

impl Default for McaParams {
    fn default() -> Self {
        Self { iterations: 30, block: 32, levels: 3 }
    }
}

/// State handed to an observer after every iteration.
pub struct McaStep<'a> {
    pub iteration: usize,
    pub threshold: f64,
    pub cartoon: &'a [f64],
    pub texture: &'a [f64],
    pub residual: &'a [f64],
}

fn block_starts(len: usize, block: usize) -> Vec<usize> {
    let step = (block / 2).max(1);
    let mut starts: Vec<usize> = (0..).map(|i| i * step).take_while(|s| s + block <= len).collect();
    if starts.last().is_some_and(|&s| s + block < len) {
        starts.push(len - block);
    }
    starts
}

/// Overlapping orthonormal block DCT.
struct LocalDct {
    w: usize,
    h: usize,
    b: usize,
    basis: Vec<f64>,
    blocks: Vec<(usize, usize)>,
    coverage: Vec<f64>,
}

impl LocalDct {
    fn new(w: usize, h: usize, b: usize) -> Self {
        let mut basis = vec![0.0; b * b];
        for k in 0..b {
            let a = if k == 0 { (1.0 / b as f64).sqrt() } else { (2.0 / b as f64).sqrt() };
            for n in 0..b {
                basis[k * b + n] = a * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * b) as f64).cos();
            }
        }
        let (xs, ys) = (block_starts(w, b), block_starts(h, b));
        let blocks: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
        let mut coverage = vec![0.0; w * h];
        for &(x0, y0) in &blocks {
            for y in y0..y0 + b {
                for c in &mut coverage[y * w + x0..y * w + x0 + b] {
                    *c += 1.0;
                }
            }
        }
        Self { w, h, b, basis, blocks, coverage }
    }

    /// `out = M · a` or `Mᵀ · a` applied along rows then columns of a b×b block.
    fn transform(&self, a: &[f64], inverse: bool) -> Vec<f64> {
        let b = self.b;
        let m = |k: usize, n: usize| if inverse { self.basis[n * b + k] } else { self.basis[k * b + n] };
        let mut tmp = vec![0.0; b * b];
        for r in 0..b {
            for k in 0..b {
                tmp[r * b + k] = (0..b).map(|n| m(k, n) * a[r * b + n]).sum();
            }
        }
        let mut out = vec![0.0; b * b];
        for k in 0..b {
            for c in 0..b {
                out[k * b + c] = (0..b).map(|n| m(k, n) * tmp[n * b + c]).sum();
            }
        }
        out
    }

    fn analyze(&self, img: &[f64]) -> Vec<Vec<f64>> {
        let (w, b) = (self.w, self.b);
        self.blocks
            .par_iter()
            .map(|&(x0, y0)| {
                let patch: Vec<f64> = (y0..y0 + b).flat_map(|y| img[y * w + x0..y * w + x0 + b].iter().copied()).collect();
                let mut c = self.transform(&patch, false);
                // The block mean belongs to the cartoon layer.
                c[0] = 0.0;
                c
            })
            .collect()
    }

    fn synthesize(&self, coefs: &[Vec<f64>]) -> Vec<f64> {
        let (w, b) = (self.w, self.b);
        let patches: Vec<Vec<f64>> = coefs.par_iter().map(|c| self.transform(c, true)).collect();
        let mut out = vec![0.0; w * self.h];
        for (&(x0, y0), p) in self.blocks.iter().zip(&patches) {
            for y in 0..b {
                for x in 0..b {
                    out[(y0 + y) * w + x0 + x] += p[y * b + x];
                }
            }
        }
        for (o, c) in out.iter_mut().zip(&self.coverage) {
            *o /= c;
        }
        out
    }
}

const SMOOTH: [f64; 4] = [0.125, 0.375, 0.375, 0.125];

/// Undecimated ("à trous") wavelet frame with the 4-tap binomial filter.
struct AtrousFrame {
    w: usize,
    h: usize,
    levels: usize,
}

impl AtrousFrame {
    fn smooth(&self, img: &[f64], level: usize) -> Vec<f64> {
        let (w, h) = (self.w as isize, self.h as isize);
        let step = 1isize << level;
        let taps = [-step, 0, step, 2 * step];
        let mut rows = vec![0.0; img.len()];
        for y in 0..h {
            for x in 0..w {
                rows[(y * w + x) as usize] = taps
                    .iter()
                    .zip(SMOOTH)
                    .map(|(t, k)| k * img[(y * w + (x + t).clamp(0, w - 1)) as usize])
                    .sum();
            }
        }
        let mut out = vec![0.0; img.len()];
        for y in 0..h {
            for x in 0..w {
                out[(y * w + x) as usize] = taps
                    .iter()
                    .zip(SMOOTH)
                    .map(|(t, k)| k * rows[((y + t).clamp(0, h - 1) * w + x) as usize])
                    .sum();
            }
        }
        out
    }

    /// Detail planes followed by the coarse approximation.
    fn analyze(&self, img: &[f64]) -> Vec<Vec<f64>> {
        let mut planes = Vec::with_capacity(self.levels + 1);
        let mut c = img.to_vec();
        for j in 0..self.levels {
            let next = self.smooth(&c, j);
            planes.push(c.iter().zip(&next).map(|(a, b)| a - b).collect());
            c = next;
        }
        planes.push(c);
        planes
    }

    fn synthesize(planes: &[Vec<f64>]) -> Vec<f64> {
        let mut out = planes[0].clone();
        for p in &planes[1..] {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }
}

fn hard_threshold(v: &mut [f64], t: f64) {
    for x in v {
        if x.abs() <= t {
            *x = 0.0;
        }
    }
}

fn max_abs<'a>(planes: impl IntoIterator<Item = &'a Vec<f64>>) -> f64 {
    planes
        .into_iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Splits an image into a smooth cartoon and an oscillating texture.
pub fn mca_separate<T: Scalar>(raster: &Raster<T>, params: McaParams) -> Result<McaResult<T>> {
    mca_separate_observed(raster, params, |_| {})
}

/// [`mca_separate`] with a callback after every iteration.
///
/// Each iteration re-estimates the texture from the local DCT of
/// `input − cartoon`, then the cartoon from the wavelet frame of
/// `input − texture`, keeping coefficients above a threshold that falls
/// linearly from the largest initial coefficient to zero on the last
/// iteration. The DCT block means and the wavelet coarse plane are never
/// thresholded away from the cartoon.
pub fn mca_separate_observed<T: Scalar>(
    raster: &Raster<T>,
    params: McaParams,
    mut observe: impl FnMut(&McaStep),
) -> Result<McaResult<T>> {
    raster.require_gray("mca_separate")?;
    let McaParams { iterations, block, levels } = params;
    let (w, h) = (raster.width(), raster.height());
    if iterations == 0 || levels == 0 || block < 2 {
        return Err(Error::Parameter("MCA needs iterations, levels >= 1 and block >= 2".into()));
    }
    if w < block || h < block {
        return Err(Error::Contract(format!("{w}x{h} image is smaller than the {block}-pixel DCT block")));
    }
    let input: Vec<f64> = raster.samples().iter().map(|v| v.as_f64()).collect();
    let input_energy: f64 = input.iter().map(|v| v * v).sum();
    let dct = LocalDct::new(w, h, block);
    let frame = AtrousFrame { w, h, levels };

    let start = max_abs(&dct.analyze(&input)).max(max_abs(&frame.analyze(&input)[..levels]));
    let mut cartoon = vec![0.0; w * h];
    let mut texture = vec![0.0; w * h];
    let mut residual = input.clone();
    let mut trace = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let threshold = if iterations == 1 {
            0.0
        } else {
            start * (iterations - 1 - it) as f64 / (iterations - 1) as f64
        };
        let target: Vec<f64> = input.iter().zip(&cartoon).map(|(x, c)| x - c).collect();
        let mut coefs = dct.analyze(&target);
        coefs.par_iter_mut().for_each(|c| hard_threshold(c, threshold));
        texture = dct.synthesize(&coefs);

        let target: Vec<f64> = input.iter().zip(&texture).map(|(x, t)| x - t).collect();
        let mut planes = frame.analyze(&target);
        for p in &mut planes[..levels] {
            hard_threshold(p, threshold);
        }
        cartoon = AtrousFrame::synthesize(&planes);

        for ((r, x), (c, t)) in residual.iter_mut().zip(&input).zip(cartoon.iter().zip(&texture)) {
            *r = x - c - t;
        }
        let energy: f64 = residual.iter().map(|v| v * v).sum();
        if !energy.is_finite() || energy > 2.0 * input_energy + f64::MIN_POSITIVE {
            return Err(Error::Numeric(format!(
                "MCA residual energy diverged at iteration {it}: {energy:e} vs input {input_energy:e}"
            )));
        }
        trace.push(if input_energy > 0.0 { energy / input_energy } else { 0.0 });
        observe(&McaStep {
            iteration: it,
            threshold,
            cartoon: &cartoon,
            texture: &texture,
            residual: &residual,
        });
    }
    let to_raster = |v: Vec<f64>| Raster::from_parts(w, h, 1, v.into_iter().map(T::of).collect());
    Ok(McaResult {
        residual_energy: *trace.last().expect("at least one iteration"),
        energy_trace: trace,
        cartoon: to_raster(cartoon),
        texture: to_raster(texture),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_layout_covers_every_pixel() {
        assert_eq!(block_starts(32, 32), vec![0]);
        assert_eq!(block_starts(64, 32), vec![0, 16, 32]);
        assert_eq!(block_starts(70, 32), vec![0, 16, 32, 38]);
        let d = LocalDct::new(70, 45, 32);
        assert!(d.coverage.iter().all(|&c| c >= 1.0));
    }

    #[test]
    fn dct_basis_is_orthonormal() {
        let d = LocalDct::new(8, 8, 8);
        for i in 0..8 {
            for j in 0..8 {
                let dot: f64 = (0..8).map(|n| d.basis[i * 8 + n] * d.basis[j * 8 + n]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wavelet_frame_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img: Vec<f64> = (0..40 * 33).map(|_| rng.random()).collect();
        let f = AtrousFrame { w: 40, h: 33, levels: 3 };
        let back = AtrousFrame::synthesize(&f.analyze(&img));
        for (a, b) in img.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let z = Raster::<f64>::zeros(40, 40);
        let r = mca_separate(&z, McaParams::default()).unwrap();
        assert_eq!(r.residual_energy, 0.0);
        assert!(r.cartoon.samples().iter().chain(r.texture.samples()).all(|&v| v == 0.0));
    }

    #[test]
    fn too_small_or_bad_params() {
        let r = Raster::<f64>::zeros(20, 40);
        assert!(matches!(mca_separate(&r, McaParams::default()), Err(Error::Contract(_))));
        let p = McaParams { iterations: 0, ..McaParams::default() };
        assert!(matches!(mca_separate(&Raster::<f64>::zeros(40, 40), p), Err(Error::Parameter(_))));
    }

    #[test]
    fn grating_lands_in_texture() {
        let n = 128;
        let cartoon = Raster::from_fn(n, n, |x, y| {
            let inside = (30..90).contains(&x) && (20..100).contains(&y);
            let disk = ((x as f64 - 95.0).powi(2) + (y as f64 - 40.0).powi(2)) < 400.0;
            0.3 + if inside { 0.4 } else { 0.0 } + if disk { 0.2 } else { 0.0 }
        });
        let grating = Raster::from_fn(n, n, |_, y| 0.1 * (2.0 * std::f64::consts::PI * y as f64 / 8.0).sin());
        let input = cartoon.zip_map(&grating, |a, b| a + b);
        let r = mca_separate(&input, McaParams::default()).unwrap();
        let dot = |a: &Raster<f64>, b: &Raster<f64>| -> f64 { a.samples().iter().zip(b.samples()).map(|(x, y)| x * y).sum() };
        let share = dot(&r.texture, &grating) / dot(&grating, &grating);
        assert!(share * share >= 0.8, "texture holds {share} of the grating");
        assert!(r.residual_energy <= 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn layers_always_sum_to_input(seed in 0u64..10_000, iterations in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = Raster::from_fn(34, 37, |_, _| rng.random_range(-1.0..2.0));
            let mut worst: f64 = 0.0;
            let r = mca_separate_observed(&img, McaParams { iterations, block: 16, levels: 2 }, |s| {
                for (p, x) in img.samples().iter().enumerate() {
                    worst = worst.max((s.cartoon[p] + s.texture[p] + s.residual[p] - x).abs());
                }
            })
            .unwrap();
            prop_assert!(worst < 1e-9);
            prop_assert!(r.residual_energy <= 1e-3);
        }
    }
}
