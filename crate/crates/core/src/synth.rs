//! Synthetic multimodal crack scenes for end-to-end testing.
//!
//! A scene has a smooth background per modality, random-walk cracks that are
//! darkest and sharpest in the X-ray and faint in IR, and letter-like strokes
//! painted only in VIS.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::ModalitySet;
use crate::quantize::{Label, LabelMask};
use crate::raster::{to_gray, Raster};
use crate::{Error, Result, Scalar};

/// Radius of the unlabeled band around crack centerlines.
pub const HALO_RADIUS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub cracks: usize,
    /// Inclusive crack width range in pixels, within 1..=3.
    pub crack_width: (u8, u8),
    /// Letter-like glyphs painted in VIS only.
    pub distractors: usize,
    /// Gaussian noise σ for IR, VIS and X-ray.
    pub noise: [f64; 3],
    /// Amplitude of the wood-grain pattern in the X-ray.
    pub grain: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            cracks: 8,
            crack_width: (1, 3),
            distractors: 6,
            noise: [0.02, 0.02, 0.02],
            grain: 0.03,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crack_width;
        if !(1..=3).contains(&lo) || !(1..=3).contains(&hi) || lo > hi {
            return Err(Error::Parameter(format!("crack width range {lo}..={hi} must lie within 1..=3")));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::Parameter(format!("scene {}x{} is smaller than 16x16", self.width, self.height)));
        }
        if self.noise.iter().any(|s| !s.is_finite() || *s < 0.0) || !self.grain.is_finite() || self.grain < 0.0 {
            return Err(Error::Parameter("noise and grain must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// A generated scene with the ground truth that the label mask does not carry.
#[derive(Clone, Debug)]
pub struct SynthScene {
    pub modalities: ModalitySet<f64>,
    pub labels: LabelMask,
    /// Pixels covered by a distractor stroke and labeled background.
    pub distractor: Vec<bool>,
    /// Pixels covered by a crack body, including its width.
    pub crack_body: Vec<bool>,
}

pub fn synth_generate(spec: &SynthSpec) -> Result<(ModalitySet<f64>, LabelMask)> {
    let scene = synth_scene(spec)?;
    Ok((scene.modalities, scene.labels))
}

type Point = (f64, f64);

pub fn synth_scene(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let ir_bg = smooth_field(&mut rng, w, h);
    let vis_bg = smooth_field(&mut rng, w, h);
    let xray_bg = smooth_field(&mut rng, w, h);
    let grain_freq = rng.random_range(0.25..0.4);
    let grain_phase = rng.random_range(0.0..std::f64::consts::TAU);

    // Coverage in [0, 1] per pixel.
    let mut crack_sharp = vec![0.0f64; w * h];
    let mut crack_soft = vec![0.0f64; w * h];
    let mut centerline = vec![false; w * h];
    for _ in 0..spec.cracks {
        let width = f64::from(rng.random_range(spec.crack_width.0..=spec.crack_width.1));
        let path = random_walk(&mut rng, w, h);
        for seg in path.windows(2) {
            paint_segment(&mut crack_sharp, w, h, seg[0], seg[1], width);
            paint_segment(&mut crack_soft, w, h, seg[0], seg[1], width + 2.0);
        }
        for &(x, y) in &path {
            let (px, py) = (x.round(), y.round());
            if px >= 0.0 && py >= 0.0 && (px as usize) < w && (py as usize) < h {
                centerline[py as usize * w + px as usize] = true;
            }
        }
    }

    let mut stroke = vec![0.0f64; w * h];
    for _ in 0..spec.distractors {
        paint_glyph(&mut rng, &mut stroke, w, h);
    }

    let halo = dilate(&centerline, w, h, HALO_RADIUS);
    let labels: Vec<Label> = (0..w * h)
        .map(|i| {
            if centerline[i] {
                Label::Crack
            } else if halo[i] {
                Label::Unlabeled
            } else {
                Label::Background
            }
        })
        .collect();
    let distractor: Vec<bool> = (0..w * h).map(|i| stroke[i] > 0.5 && labels[i] == Label::Background).collect();
    let crack_body: Vec<bool> = crack_sharp.iter().map(|&c| c > 0.5).collect();

    let [ir_sigma, vis_sigma, xray_sigma] = spec.noise;
    let mut noise = |sigma: f64| -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng)
        }
    };

    let ir = Raster::from_fn(w, h, |x, y| {
        let i = y * w + x;
        (0.55 + 0.08 * ir_bg[i]) * (1.0 - 0.12 * crack_soft[i]) + noise(ir_sigma)
    });
    let xray = Raster::from_fn(w, h, |x, y| {
        let i = y * w + x;
        let grain = spec.grain * (grain_freq * y as f64 + 0.2 * (x as f64 * 0.05).sin() + grain_phase).sin();
        (0.7 + 0.08 * xray_bg[i] + grain) * (1.0 - 0.6 * crack_sharp[i]) + noise(xray_sigma)
    });
    let base = [0.78, 0.64, 0.46];
    let ink = [0.30, 0.22, 0.16];
    let mut vis_samples = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        // Cracks and letters share one dark pigment in VIS.
        let cover = (0.7 * crack_soft[i].max(crack_sharp[i])).max(stroke[i]);
        for c in 0..3 {
            let paint = base[c] * (1.0 + 0.08 * vis_bg[i]);
            let v = paint + cover * (ink[c] - paint) + noise(vis_sigma);
            vis_samples.push(v.clamp(0.0, 1.0));
        }
    }
    let clamp = |r: Raster<f64>| r.map(|v| v.clamp(0.0, 1.0));
    let vis = Raster::new(w, h, 3, vis_samples)?;
    Ok(SynthScene {
        modalities: ModalitySet::new(clamp(ir), vis, clamp(xray))?,
        labels: LabelMask::new(w, h, labels)?,
        distractor,
        crack_body,
    })
}

/// Sum of a few random low-frequency cosines, roughly in [-1, 1].
fn smooth_field(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let period = rng.random_range(64.0..256.0);
            let k = std::f64::consts::TAU / period;
            (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            waves.iter().map(|(kx, ky, ph)| (kx * x + ky * y + ph).cos()).sum::<f64>() / 2.0
        })
        .collect()
}

/// Half-pixel steps with a slowly drifting heading, stopped at the border.
fn random_walk(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<Point> {
    let margin = 4.0;
    let mut p = (rng.random_range(margin..w as f64 - margin), rng.random_range(margin..h as f64 - margin));
    let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
    let turn = Normal::new(0.0, 0.08).expect("valid sigma");
    let steps = rng.random_range(160..360);
    let mut path = vec![p];
    for _ in 0..steps {
        heading += turn.sample(rng);
        p = (p.0 + 0.5 * heading.cos(), p.1 + 0.5 * heading.sin());
        if p.0 < 1.0 || p.1 < 1.0 || p.0 > w as f64 - 2.0 || p.1 > h as f64 - 2.0 {
            break;
        }
        path.push(p);
    }
    path
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Antialiased stroke of the given width; coverage combines by maximum.
fn paint_segment(cover: &mut [f64], w: usize, h: usize, a: Point, b: Point, width: f64) {
    let reach = width / 2.0 + 1.0;
    let x0 = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
    let y0 = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
    let x1 = ((a.0.max(b.0) + reach).ceil() as usize).min(w - 1);
    let y1 = ((a.1.max(b.1) + reach).ceil() as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = segment_distance((x as f64, y as f64), a, b);
            let c = (width / 2.0 + 0.5 - d).clamp(0.0, 1.0);
            let slot = &mut cover[y * w + x];
            *slot = slot.max(c);
        }
    }
}

/// Glyph outlines in a unit box, as polylines.
const GLYPHS: &[&[&[Point]]] = &[
    &[&[(0.0, 0.0), (0.0, 1.0), (0.7, 1.0)]],
    &[&[(0.0, 0.0), (0.8, 0.0)], &[(0.4, 0.0), (0.4, 1.0)]],
    &[&[(0.0, 1.0), (0.0, 0.0), (0.7, 1.0), (0.7, 0.0)]],
    &[&[(0.0, 1.0), (0.4, 0.0), (0.8, 1.0)], &[(0.2, 0.55), (0.6, 0.55)]],
    &[&[(0.7, 0.0), (0.0, 0.0), (0.0, 1.0), (0.7, 1.0)], &[(0.0, 0.5), (0.5, 0.5)]],
    &[&[(0.0, 0.0), (0.0, 1.0)], &[(0.7, 0.0), (0.7, 1.0)], &[(0.0, 0.5), (0.7, 0.5)]],
];

fn paint_glyph(rng: &mut ChaCha8Rng, cover: &mut [f64], w: usize, h: usize) {
    let size = rng.random_range(14.0..24.0);
    let ox = rng.random_range(2.0..w as f64 - size - 2.0);
    let oy = rng.random_range(2.0..h as f64 - size - 2.0);
    let glyph = GLYPHS[rng.random_range(0..GLYPHS.len())];
    let place = |(u, v): Point| (ox + u * size, oy + v * size);
    if rng.random_bool(0.5) {
        // Letters often come with a bowl; draw a small ellipse.
        let (cx, cy, r) = (ox + 0.35 * size, oy + 0.5 * size, 0.35 * size);
        let pts: Vec<Point> = (0..=24)
            .map(|t| {
                let a = t as f64 / 24.0 * std::f64::consts::TAU;
                (cx + r * a.cos(), cy + 1.2 * r * a.sin())
            })
            .collect();
        for seg in pts.windows(2) {
            paint_segment(cover, w, h, seg[0], seg[1], 2.0);
        }
    } else {
        for line in glyph {
            for seg in line.windows(2) {
                paint_segment(cover, w, h, place(seg[0]), place(seg[1]), 2.0);
            }
        }
    }
}

fn dilate(mask: &[bool], w: usize, h: usize, radius: f64) -> Vec<bool> {
    let r = radius.ceil() as isize;
    let mut out = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            if !mask[y as usize * w + x as usize] {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if ((dx * dx + dy * dy) as f64) <= radius * radius
                        && nx >= 0
                        && ny >= 0
                        && (nx as usize) < w
                        && (ny as usize) < h
                    {
                        out[ny as usize * w + nx as usize] = true;
                    }
                }
            }
        }
    }
    out
}

/// Grayscale VIS in three channels with crack pixels painted pure red.
pub fn overlay<T: Scalar>(vis: &Raster<T>, crack: &[bool]) -> Result<Raster<T>> {
    if crack.len() != vis.width() * vis.height() {
        return Err(Error::Contract(format!(
            "crack map has {} pixels, image is {}x{}",
            crack.len(),
            vis.width(),
            vis.height()
        )));
    }
    let gray = to_gray(vis)?;
    let mut samples = Vec::with_capacity(crack.len() * 3);
    for (&g, &c) in gray.samples().iter().zip(crack) {
        if c {
            samples.extend([T::one(), T::zero(), T::zero()]);
        } else {
            samples.extend([g, g, g]);
        }
    }
    Raster::new(vis.width(), vis.height(), 3, samples)
}
