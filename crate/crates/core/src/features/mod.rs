//! The multimodal per-pixel filter bank.
//!
//! [`default_manifest`] lists 68 features for each of IR, VIS and X-ray plus
//! four VIS color features (R, G, B, hue), 208 in total. [`extract_features`]
//! evaluates any manifest against a [`ModalitySet`] and returns one plane per
//! entry, in manifest order.

mod filters;
mod lbp;
mod lm;
mod manifest;

use std::collections::HashMap;

use rayon::prelude::*;

pub use filters::{
    black_top_hat, elongated_features, frangi_features, hessian, hue, log_filter, median_filter,
    orientation_angle, structure_tensor_features, COHERENCE_EPS, FRANGI_BETA,
};
pub use lbp::{lbp_riu, LBP_CATEGORIES};
pub use lm::{leung_malik_bank, leung_malik_layout, LmFilter, LM_SIZE};
pub use manifest::{
    default_manifest, fmt_param, FeatureEntry, FeatureKind, FeatureManifest, Modality,
    ELONGATED_ORIENTATIONS, ELONGATED_SIGMAS, FRANGI_SIGMAS, LOG_SIGMAS, MEDIAN_SIZES,
    STRUCTURE_GRAD_SIGMA, STRUCTURE_WINDOW_SIGMA, TOP_HAT_SIZES,
};

#[allow(unused_imports)]
pub(crate) use filters::sym2_eigen;

use crate::raster::{convolve_bank, io, to_gray, Raster};
use crate::{Error, Result, Scalar};

/// Mutually aligned IR (gray), VIS (color) and X-ray (gray) rasters.
#[derive(Clone, Debug)]
pub struct ModalitySet<T: Scalar = f64> {
    pub ir: Raster<T>,
    pub vis: Raster<T>,
    pub xray: Raster<T>,
}

impl<T: Scalar> ModalitySet<T> {
    /// Validates shapes; IR and X-ray are converted to gray if given in color.
    pub fn new(ir: Raster<T>, vis: Raster<T>, xray: Raster<T>) -> Result<Self> {
        ir.require_same_shape(&vis, "modality set")?;
        ir.require_same_shape(&xray, "modality set")?;
        Ok(Self {
            ir: to_gray(&ir)?,
            vis,
            xray: to_gray(&xray)?,
        })
    }

    pub fn width(&self) -> usize {
        self.ir.width()
    }

    pub fn height(&self) -> usize {
        self.ir.height()
    }

    fn gray(&self, m: Modality) -> Result<Raster<T>> {
        match m {
            Modality::Ir => Ok(self.ir.clone()),
            Modality::Vis => to_gray(&self.vis),
            Modality::Xray => Ok(self.xray.clone()),
        }
    }
}

/// One real-valued plane per manifest entry.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack<T: Scalar = f64> {
    width: usize,
    height: usize,
    manifest: FeatureManifest,
    planes: Vec<Raster<T>>,
}

impl<T: Scalar> FeatureStack<T> {
    pub fn new(manifest: FeatureManifest, planes: Vec<Raster<T>>) -> Result<Self> {
        if planes.len() != manifest.len() {
            return Err(Error::Contract(format!(
                "{} planes for a manifest of {} entries",
                planes.len(),
                manifest.len()
            )));
        }
        let first = planes
            .first()
            .ok_or_else(|| Error::Contract("feature stack needs at least one plane".into()))?;
        let (width, height) = (first.width(), first.height());
        for p in &planes {
            p.require_gray("feature plane")?;
            p.require_same_shape(first, "feature stack")?;
        }
        Ok(Self {
            width,
            height,
            manifest,
            planes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn manifest(&self) -> &FeatureManifest {
        &self.manifest
    }

    pub fn planes(&self) -> &[Raster<T>] {
        &self.planes
    }

    pub fn plane(&self, j: usize) -> &Raster<T> {
        &self.planes[j]
    }

    /// FR32 encoding with one channel per plane.
    pub fn to_fr32(&self) -> Vec<u8> {
        let p = self.planes.len();
        let mut samples = Vec::with_capacity(self.pixels() * p);
        for i in 0..self.pixels() {
            samples.extend(self.planes.iter().map(|pl| pl.samples()[i]));
        }
        io::encode_fr32_parts(self.width, self.height, p, &samples)
    }

    pub fn from_fr32(bytes: &[u8], manifest: FeatureManifest) -> Result<Self> {
        let (w, h, c, samples) = io::decode_fr32_parts::<T>(bytes)?;
        if c != manifest.len() {
            return Err(Error::Contract(format!(
                "FR32 stack has {c} planes, manifest lists {}",
                manifest.len()
            )));
        }
        let planes = (0..c)
            .map(|j| Raster::from_parts(w, h, 1, samples.iter().skip(j).step_by(c).copied().collect()))
            .collect();
        Self::new(manifest, planes)
    }
}

/// What to compute for a group of manifest entries sharing one filter run.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Recipe {
    Intensity(Modality),
    Color(usize),
    Hue,
    Elongated(Modality, String, usize),
    Frangi(Modality),
    Structure(Modality, String, String),
    TopHat(Modality, usize),
    Lbp(Modality),
    Median(Modality, usize),
    Log(Modality, String),
    LeungMalik(Modality),
}

fn param<'a>(e: &'a FeatureEntry, key: &str) -> Result<&'a str> {
    e.param(key)
        .ok_or_else(|| Error::Contract(format!("{}: missing parameter {key}", e.feature_id)))
}

fn parse<V: std::str::FromStr>(e: &FeatureEntry, key: &str) -> Result<V> {
    param(e, key)?
        .parse()
        .map_err(|_| Error::Contract(format!("{}: bad value for {key}", e.feature_id)))
}

fn output_index(e: &FeatureEntry, names: &[&str]) -> Result<usize> {
    let out = param(e, "output")?;
    names
        .iter()
        .position(|n| *n == out)
        .ok_or_else(|| Error::Contract(format!("{}: unknown output {out}", e.feature_id)))
}

fn recipe(e: &FeatureEntry) -> Result<(Recipe, usize)> {
    let m = e.modality;
    Ok(match e.filter.as_str() {
        "intensity" => (Recipe::Intensity(m), 0),
        "color" => match param(e, "channel")? {
            "R" => (Recipe::Color(0), 0),
            "G" => (Recipe::Color(1), 0),
            "B" => (Recipe::Color(2), 0),
            "hue" => (Recipe::Hue, 0),
            c => return Err(Error::Contract(format!("{}: unknown channel {c}", e.feature_id))),
        },
        "elongated" => (
            Recipe::Elongated(
                m,
                param(e, "sigma")?.to_string(),
                e.param("orientations").map_or(Ok(ELONGATED_ORIENTATIONS), |_| parse(e, "orientations"))?,
            ),
            output_index(e, &["max", "argmax"])?,
        ),
        "frangi" => (Recipe::Frangi(m), output_index(e, &["measure", "scale"])?),
        "structure_tensor" => (
            Recipe::Structure(
                m,
                param(e, "grad_sigma")?.to_string(),
                param(e, "window_sigma")?.to_string(),
            ),
            output_index(e, &["l1", "l2", "orientation", "coherence"])?,
        ),
        "black_top_hat" => (Recipe::TopHat(m, parse(e, "se")?), 0),
        "lbp" => (Recipe::Lbp(m), 0),
        "median" => (Recipe::Median(m, parse(e, "size")?), 0),
        "log" => (Recipe::Log(m, param(e, "sigma")?.to_string()), 0),
        "leung_malik" => {
            let i: usize = parse(e, "index")?;
            if i >= LM_SIZE {
                return Err(Error::Contract(format!("{}: LM index {i} out of range", e.feature_id)));
            }
            (Recipe::LeungMalik(m), i)
        }
        f => return Err(Error::Contract(format!("{}: unknown filter {f}", e.feature_id))),
    })
}

fn sigma_of(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Contract(format!("bad sigma {s}")))
}

fn compute<T: Scalar>(recipe: &Recipe, set: &ModalitySet<T>) -> Result<Vec<Raster<T>>> {
    Ok(match recipe {
        Recipe::Intensity(m) => vec![set.gray(*m)?],
        Recipe::Color(c) => {
            if set.vis.channels() != 3 {
                return Err(Error::Contract("color features need a 3-channel VIS raster".into()));
            }
            vec![set.vis.channel(*c)]
        }
        Recipe::Hue => vec![hue(&set.vis)?],
        Recipe::Elongated(m, s, n) => {
            let (a, b) = elongated_features(&set.gray(*m)?, sigma_of(s)?, *n)?;
            vec![a, b]
        }
        Recipe::Frangi(m) => {
            let (a, b) = frangi_features(&set.gray(*m)?, &FRANGI_SIGMAS)?;
            vec![a, b]
        }
        Recipe::Structure(m, g, w) => structure_tensor_features(&set.gray(*m)?, sigma_of(g)?, sigma_of(w)?)?.to_vec(),
        Recipe::TopHat(m, se) => vec![black_top_hat(&set.gray(*m)?, *se)?],
        Recipe::Lbp(m) => vec![lbp_riu(&set.gray(*m)?)?],
        Recipe::Median(m, size) => vec![median_filter(&set.gray(*m)?, *size)?],
        Recipe::Log(m, s) => vec![log_filter(&set.gray(*m)?, sigma_of(s)?)?],
        Recipe::LeungMalik(m) => convolve_bank(&set.gray(*m)?, &leung_malik_bank())?,
    })
}

/// Evaluates every manifest entry on the aligned modalities.
///
/// Entries sharing a filter run (both elongated outputs, the 48 LM planes,
/// ...) are computed once. Groups run in parallel; the result is identical
/// to a sequential evaluation.
pub fn extract_features<T: Scalar>(set: &ModalitySet<T>, manifest: &FeatureManifest) -> Result<FeatureStack<T>> {
    set.ir.require_same_shape(&set.vis, "extract_features")?;
    set.ir.require_same_shape(&set.xray, "extract_features")?;
    manifest.validate()?;
    let mut groups: Vec<Recipe> = Vec::new();
    let mut index: HashMap<Recipe, usize> = HashMap::new();
    let mut wiring = Vec::with_capacity(manifest.len());
    for e in &manifest.entries {
        let (r, out) = recipe(e)?;
        let g = *index.entry(r.clone()).or_insert_with(|| {
            groups.push(r);
            groups.len() - 1
        });
        wiring.push((g, out));
    }
    let results: Vec<Vec<Raster<T>>> = groups
        .par_iter()
        .map(|r| compute(r, set))
        .collect::<Result<_>>()?;
    let planes = wiring
        .into_iter()
        .map(|(g, out)| results[g][out].clone())
        .collect();
    FeatureStack::new(manifest.clone(), planes)
}
