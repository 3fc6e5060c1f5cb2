use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::lbp::LBP_CATEGORIES;
use super::lm::{leung_malik_layout, LmFilter};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "IR")]
    Ir,
    #[serde(rename = "VIS")]
    Vis,
    #[serde(rename = "XRAY")]
    Xray,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Ir, Modality::Vis, Modality::Xray];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::Ir => "ir",
            Modality::Vis => "vis",
            Modality::Xray => "xray",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Modality::Ir => "IR",
            Modality::Vis => "VIS",
            Modality::Xray => "X-ray",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub feature_id: String,
    pub modality: Modality,
    pub filter: String,
    pub params: BTreeMap<String, String>,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<u32>,
}

impl FeatureEntry {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    /// Human-readable description in the style of a selection report row.
    pub fn describe(&self) -> String {
        let p = |k: &str| self.param(k).unwrap_or("?");
        let body = match self.filter.as_str() {
            "intensity" => "Grayscale intensity".to_string(),
            "color" => format!("Color intensity ({})", p("channel")),
            "elongated" => format!("Elongated filter (σ = {}, {})", p("sigma"), p("output")),
            "frangi" => format!("Frangi vesselness filter (vessel {})", p("output")),
            "structure_tensor" => format!("Structure tensor ({})", p("output")),
            "black_top_hat" => format!("Black Top Hat (size structuring element: {0}×{0})", p("se")),
            "lbp" => "Local Binary Patterns (riu2, P = 16, R = 3)".to_string(),
            "median" => format!("Median filter (size filter: {0}×{0})", p("size")),
            "log" => format!("LoG (σ = {})", p("sigma")),
            "leung_malik" => match p("family") {
                "directional" => format!(
                    "Leung-Malik filter: directional (order {}, σ = {}, orientation {})",
                    p("order"),
                    p("sigma"),
                    p("orientation")
                ),
                "log" => format!("Leung-Malik filter: LoG (σ = {})", p("sigma")),
                fam => format!("Leung-Malik filter: {fam} (σ = {})", p("sigma")),
            },
            other => other.to_string(),
        };
        format!("{}: {body}", self.modality.label())
    }
}

/// Ordered feature layout; plane `j` of a stack is entry `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub entries: Vec<FeatureEntry>,
}

/// Shortest decimal rendering used for parameter values (`1`, `1.414214`).
pub fn fmt_param(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').to_string()
    }
}

pub const ELONGATED_SIGMAS: [f64; 2] = [1.0, 2.0];
pub const ELONGATED_ORIENTATIONS: usize = 12;
pub const FRANGI_SIGMAS: [f64; 3] = [1.0, 2.0, 4.0];
pub const STRUCTURE_GRAD_SIGMA: f64 = 1.0;
pub const STRUCTURE_WINDOW_SIGMA: f64 = 2.0;
pub const TOP_HAT_SIZES: [usize; 2] = [2, 3];
pub const MEDIAN_SIZES: [usize; 3] = [3, 6, 12];
pub const LOG_SIGMAS: [f64; 3] = [1.0, 2.0, 5.0];

struct Builder {
    entries: Vec<FeatureEntry>,
}

impl Builder {
    fn push(&mut self, modality: Modality, filter: &str, suffix: &str, params: &[(&str, String)]) {
        let mut id = format!("{}.{filter}", modality.tag());
        if !suffix.is_empty() {
            id.push('.');
            id.push_str(suffix);
        }
        self.entries.push(FeatureEntry {
            feature_id: id,
            modality,
            filter: filter.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            kind: FeatureKind::Continuous,
            categories: None,
        });
    }

    fn modality_block(&mut self, m: Modality) {
        self.push(m, "intensity", "", &[]);
        for &s in &ELONGATED_SIGMAS {
            for out in ["max", "argmax"] {
                self.push(
                    m,
                    "elongated",
                    &format!("s{}.{out}", fmt_param(s)),
                    &[
                        ("sigma", fmt_param(s)),
                        ("orientations", ELONGATED_ORIENTATIONS.to_string()),
                        ("output", out.to_string()),
                    ],
                );
            }
        }
        for out in ["measure", "scale"] {
            self.push(m, "frangi", out, &[("output", out.to_string())]);
        }
        for out in ["l1", "l2", "orientation", "coherence"] {
            self.push(
                m,
                "structure_tensor",
                out,
                &[
                    ("grad_sigma", fmt_param(STRUCTURE_GRAD_SIGMA)),
                    ("window_sigma", fmt_param(STRUCTURE_WINDOW_SIGMA)),
                    ("output", out.to_string()),
                ],
            );
        }
        for se in TOP_HAT_SIZES {
            self.push(m, "black_top_hat", &format!("se{se}"), &[("se", se.to_string())]);
        }
        self.push(m, "lbp", "riu2", &[("points", "16".into()), ("radius", "3".into())]);
        let last = self.entries.last_mut().unwrap();
        last.kind = FeatureKind::Categorical;
        last.categories = Some(LBP_CATEGORIES);
        for size in MEDIAN_SIZES {
            self.push(m, "median", &format!("k{size}"), &[("size", size.to_string())]);
        }
        for &s in &LOG_SIGMAS {
            self.push(m, "log", &format!("s{}", fmt_param(s)), &[("sigma", fmt_param(s))]);
        }
        for (i, f) in leung_malik_layout().into_iter().enumerate() {
            let mut params = vec![("index", i.to_string())];
            match f {
                LmFilter::Directional { order, sigma, orientation } => {
                    params.push(("family", "directional".into()));
                    params.push(("order", order.to_string()));
                    params.push(("sigma", fmt_param(sigma)));
                    params.push(("orientation", orientation.to_string()));
                }
                LmFilter::Log { sigma } => {
                    params.push(("family", "log".into()));
                    params.push(("sigma", fmt_param(sigma)));
                }
                LmFilter::Gaussian { sigma } => {
                    params.push(("family", "gaussian".into()));
                    params.push(("sigma", fmt_param(sigma)));
                }
            }
            self.push(m, "leung_malik", &format!("f{i:02}"), &params);
        }
        if m == Modality::Vis {
            for ch in ["R", "G", "B"] {
                self.push(m, "color", &ch.to_lowercase(), &[("channel", ch.to_string())]);
            }
            self.push(m, "color", "hue", &[("channel", "hue".to_string())]);
        }
    }
}

/// The 208-entry manifest: 68 filters per modality plus R, G, B and hue for VIS.
pub fn default_manifest() -> FeatureManifest {
    let mut b = Builder { entries: Vec::new() };
    for m in Modality::ALL {
        b.modality_block(m);
    }
    FeatureManifest { entries: b.entries }
}

impl FeatureManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks id uniqueness and modality grouping order.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.feature_id.as_str()) {
                return Err(Error::Contract(format!("duplicate feature id {}", e.feature_id)));
            }
            if e.kind == FeatureKind::Categorical && e.categories.is_none() {
                return Err(Error::Contract(format!("{} is categorical without a count", e.feature_id)));
            }
        }
        if !self.entries.windows(2).all(|w| w[0].modality <= w[1].modality) {
            return Err(Error::Contract("manifest entries must be grouped IR, VIS, XRAY".into()));
        }
        Ok(())
    }

    /// Entries matching a modality, filter name and a subset of parameters.
    pub fn find(&self, modality: Modality, filter: &str, params: &[(&str, &str)]) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                e.modality == modality
                    && e.filter == filter
                    && params.iter().all(|(k, v)| e.param(k) == Some(v))
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Sub-manifest keeping entries that satisfy `keep`, in order.
    pub fn subset(&self, keep: impl Fn(&FeatureEntry) -> bool) -> FeatureManifest {
        FeatureManifest {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: FeatureManifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}
