//! Equal-frequency quantization of feature planes into categorical
//! predictors, and training-set assembly from partial label masks.

mod labels;
mod matrix;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use labels::{assemble_training, Label, LabelMask, TrainingSet};
pub use matrix::FeatureMatrix;

use crate::features::{FeatureKind, FeatureStack};
use crate::{Error, Result, Scalar};

/// Bins used for continuous features unless configured otherwise.
pub const DEFAULT_BINS: usize = 11;

/// How one feature plane becomes a categorical predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureQuantizer {
    /// Category = 1 + number of edges strictly below the value.
    Continuous { feature_id: String, edges: Vec<f64> },
    /// Native 0-based categories shifted to 1-based.
    Categorical { feature_id: String, categories: u16 },
}

impl FeatureQuantizer {
    pub fn feature_id(&self) -> &str {
        match self {
            FeatureQuantizer::Continuous { feature_id, .. } | FeatureQuantizer::Categorical { feature_id, .. } => {
                feature_id
            }
        }
    }

    /// Number of categories `d_j`.
    pub fn categories(&self) -> u16 {
        match self {
            FeatureQuantizer::Continuous { edges, .. } => edges.len() as u16 + 1,
            FeatureQuantizer::Categorical { categories, .. } => *categories,
        }
    }

    /// A single-category predictor carries no information.
    pub fn is_degenerate(&self) -> bool {
        self.categories() == 1
    }

    pub fn category(&self, value: f64) -> Result<u16> {
        match self {
            FeatureQuantizer::Continuous { edges, .. } => Ok(1 + edges.partition_point(|&e| e < value) as u16),
            FeatureQuantizer::Categorical { feature_id, categories } => {
                let v = value.round();
                if (value - v).abs() > 1e-6 || v < 0.0 || v >= f64::from(*categories) {
                    return Err(Error::Contract(format!(
                        "{feature_id}: value {value} is not a category in 0..{categories}"
                    )));
                }
                Ok(v as u16 + 1)
            }
        }
    }
}

/// Per-feature binning fitted on one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub d_default: usize,
    pub features: Vec<FeatureQuantizer>,
}

/// Equal-frequency edges: the values at ranks `ceil(k n / d)` for
/// `k = 1..d`, with duplicates and edges at the maximum dropped.
pub fn quantile_edges(values: &[f64], d: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let Some(&top) = sorted.last() else {
        return Vec::new();
    };
    let mut edges: Vec<f64> = (1..d).map(|k| sorted[(k * n).div_ceil(d).max(1) - 1]).collect();
    edges.dedup();
    edges.retain(|&e| e < top);
    edges
}

impl QuantizerSpec {
    pub fn fit<T: Scalar>(stack: &FeatureStack<T>, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Parameter(format!("need at least 2 bins, got {d}")));
        }
        if d > usize::from(u16::MAX) {
            return Err(Error::Parameter(format!("{d} bins exceed the BFM1 range")));
        }
        if stack.pixels() == 0 || stack.planes().is_empty() {
            return Err(Error::Contract("cannot fit a quantizer on an empty stack".into()));
        }
        let features = stack
            .manifest()
            .entries
            .par_iter()
            .zip(stack.planes())
            .map(|(entry, plane)| match entry.kind {
                FeatureKind::Categorical => Ok(FeatureQuantizer::Categorical {
                    feature_id: entry.feature_id.clone(),
                    categories: entry
                        .categories
                        .and_then(|c| u16::try_from(c).ok())
                        .ok_or_else(|| Error::Contract(format!("{}: bad category count", entry.feature_id)))?,
                }),
                FeatureKind::Continuous => {
                    let values: Vec<f64> = plane.samples().iter().map(|v| v.as_f64()).collect();
                    Ok(FeatureQuantizer::Continuous {
                        feature_id: entry.feature_id.clone(),
                        edges: quantile_edges(&values, d),
                    })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { d_default: d, features })
    }

    /// Quantizes every pixel; rows follow row-major pixel order.
    pub fn apply<T: Scalar>(&self, stack: &FeatureStack<T>) -> Result<FeatureMatrix> {
        let ids: Vec<&str> = stack.manifest().entries.iter().map(|e| e.feature_id.as_str()).collect();
        let mine: Vec<&str> = self.features.iter().map(FeatureQuantizer::feature_id).collect();
        if ids != mine {
            return Err(Error::Contract("quantizer was fitted on a different manifest".into()));
        }
        let (n, p) = (stack.pixels(), self.features.len());
        let columns: Vec<Vec<u16>> = self
            .features
            .par_iter()
            .zip(stack.planes())
            .map(|(q, plane)| plane.samples().iter().map(|v| q.category(v.as_f64())).collect())
            .collect::<Result<_>>()?;
        let mut values = vec![0u16; n * p];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[i * p + j] = v;
            }
        }
        FeatureMatrix::new(n, self.features.iter().map(FeatureQuantizer::categories).collect(), values)
    }

    pub fn degenerate(&self) -> Vec<&str> {
        self.features.iter().filter(|q| q.is_degenerate()).map(FeatureQuantizer::feature_id).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        for q in &spec.features {
            if let FeatureQuantizer::Continuous { feature_id, edges } = q {
                if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
                    return Err(Error::Contract(format!("{feature_id}: bin edges not strictly ascending")));
                }
            }
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{default_manifest, FeatureManifest, Modality};
    use crate::raster::Raster;
    use proptest::prelude::*;

    fn stack_of(planes: Vec<Vec<f64>>, w: usize, h: usize, lbp_last: bool) -> FeatureStack<f64> {
        let mut entries = default_manifest()
            .entries
            .into_iter()
            .filter(|e| e.modality == Modality::Ir && e.kind == FeatureKind::Continuous)
            .take(planes.len() - usize::from(lbp_last))
            .collect::<Vec<_>>();
        if lbp_last {
            entries.extend(default_manifest().entries.into_iter().find(|e| e.kind == FeatureKind::Categorical));
        }
        let rasters = planes.into_iter().map(|v| Raster::new(w, h, 1, v).unwrap()).collect();
        FeatureStack::new(FeatureManifest { entries }, rasters).unwrap()
    }

    /// Oracle: sort, cut into `d` groups by rank, read off group maxima.
    fn rank_oracle(values: &[f64], d: usize) -> Vec<u16> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = values.len();
        values
            .iter()
            .map(|v| {
                // Bin of the first occurrence of v in the sorted order.
                let r = sorted.iter().position(|s| s == v).unwrap();
                (r * d / n) as u16 + 1
            })
            .collect()
    }

    #[test]
    fn hundred_ten_values_into_eleven_bins() {
        let v: Vec<f64> = (1..=110).map(f64::from).collect();
        let s = stack_of(vec![v.clone()], 11, 10, false);
        let spec = QuantizerSpec::fit(&s, 11).unwrap();
        let m = spec.apply(&s).unwrap();
        assert_eq!(m.d(), &[11]);
        let mut hist = [0; 12];
        for c in m.column(0) {
            hist[c as usize] += 1;
        }
        assert_eq!(&hist[1..], &[10; 11]);
        assert_eq!(m.column(0).collect::<Vec<_>>(), rank_oracle(&v, 11));
    }

    #[test]
    fn constant_feature_is_degenerate_and_lbp_passes_through() {
        let lbp: Vec<f64> = (0..20).map(|i| f64::from(i % 18)).collect();
        let s = stack_of(vec![vec![0.5; 20], lbp], 5, 4, true);
        let spec = QuantizerSpec::fit(&s, 11).unwrap();
        assert_eq!(spec.features[0].categories(), 1);
        assert_eq!(spec.degenerate(), vec![spec.features[0].feature_id()]);
        assert_eq!(spec.features[1].categories(), 18);
        let m = spec.apply(&s).unwrap();
        assert!(m.column(0).all(|v| v == 1));
        assert_eq!(m.get(17, 1), 18);
        assert_eq!(m.get(0, 1), 1);
    }

    #[test]
    fn boundary_categories() {
        let q = FeatureQuantizer::Continuous { feature_id: "f".into(), edges: vec![0.0, 1.0, 2.0] };
        assert_eq!(q.category(-5.0).unwrap(), 1);
        assert_eq!(q.category(0.0).unwrap(), 1);
        assert_eq!(q.category(0.5).unwrap(), 2);
        assert_eq!(q.category(9.0).unwrap(), 4);
        let c = FeatureQuantizer::Categorical { feature_id: "l".into(), categories: 18 };
        assert!(c.category(18.0).is_err() && c.category(2.5).is_err());
    }

    #[test]
    fn manifest_mismatch_and_json() {
        let a = stack_of(vec![vec![0.1, 0.2, 0.3, 0.4]], 2, 2, false);
        let b = stack_of(vec![vec![0.1, 0.2, 0.3, 0.4]; 2], 2, 2, false);
        let spec = QuantizerSpec::fit(&a, 3).unwrap();
        assert!(matches!(spec.apply(&b), Err(Error::Contract(_))));
        assert_eq!(QuantizerSpec::from_json(&spec.to_json().unwrap()).unwrap(), spec);
        let bad = r#"{"d_default": 3, "features": [{"kind": "continuous", "feature_id": "f", "edges": [0.5, 0.2]}]}"#;
        assert!(matches!(QuantizerSpec::from_json(bad), Err(Error::Contract(_))));
        assert!(QuantizerSpec::fit(&a, 1).is_err());
    }

    proptest! {
        #[test]
        fn columns_in_bounds_monotone_and_balanced(values in proptest::collection::vec(-1e3f64..1e3, 30..200), d in 2usize..15) {
            let n = values.len();
            let s = stack_of(vec![values.clone()], n, 1, false);
            let spec = QuantizerSpec::fit(&s, d).unwrap();
            let m = spec.apply(&s).unwrap();
            prop_assert_eq!(m.clone(), spec.apply(&s).unwrap());
            let col: Vec<u16> = m.column(0).collect();
            let dj = m.d()[0];
            prop_assert!(col.iter().all(|&c| c >= 1 && c <= dj));
            for i in 0..n {
                for k in 0..n {
                    if values[i] <= values[k] {
                        prop_assert!(col[i] <= col[k]);
                    }
                }
            }
            // Distinct values: exact agreement with the rank oracle.
            let mut uniq = values.clone();
            uniq.sort_by(f64::total_cmp);
            uniq.dedup();
            if uniq.len() == n {
                prop_assert_eq!(col, rank_oracle(&values, d));
            }
        }

        #[test]
        fn strictly_increasing_transform_is_invisible(values in proptest::collection::vec(-5f64..5.0, 10..80), d in 2usize..12) {
            let n = values.len();
            let warped: Vec<f64> = values.iter().map(|v| v.powi(3) + 2.0 * v.exp()).collect();
            let a = stack_of(vec![values], n, 1, false);
            let b = stack_of(vec![warped], n, 1, false);
            let ma = QuantizerSpec::fit(&a, d).unwrap().apply(&a).unwrap();
            let mb = QuantizerSpec::fit(&b, d).unwrap().apply(&b).unwrap();
            prop_assert_eq!(ma, mb);
        }
    }
}
