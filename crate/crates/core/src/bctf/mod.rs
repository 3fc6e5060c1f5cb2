//! Bayesian conditional tensor factorization classifier.
//!
//! The crack probability of a categorical predictor vector is
//!
//! ```text
//! P(Y = y | x) = Σ_{h_1..h_p} λ_{h_1..h_p}(y) ∏_j π^{(j)}_{h_j}(x_j)
//! ```
//!
//! with `h_j ∈ 1..k_j`. Predictors with `k_j = 1` drop out of the model. The
//! posterior over `k`, `λ` and `π` is explored by a data-augmented Gibbs
//! sampler with Metropolis-Hastings moves on `k`. An exact enumeration
//! oracle covers tiny instances.

mod dirichlet;
mod model;
mod oracle;
mod predict;
mod sampler;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use model::{
    eval_conditional, eval_pair, log_prior_k, log_prior_kj, Allocation, Dataset, Hyper, KVector, Lambda, PiMatrix,
    PiSet,
};
pub use oracle::{exact_posterior_oracle, OracleResult, ORACLE_MAX_D, ORACLE_MAX_N, ORACLE_MAX_P};
pub use predict::{format_selection, inclusion_probabilities, predict, selection_report, threshold_map, SelectedPredictor};
pub use sampler::{collapsed_log_lik, fit, gibbs_sweep, init_state, log_posterior, update_k, ChainState};

use crate::{Error, Result};

/// Format tag written into serialized posteriors.
pub const FORMAT: &str = "bctf-1";

/// One retained state of the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSample {
    pub k: KVector,
    pub lambda: Lambda,
    pub pi: PiSet,
    /// Unnormalized log posterior density of the state.
    pub log_post: f64,
}

/// Retained samples of one chain with the settings that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct BctfPosterior {
    pub hyper: Hyper,
    pub d: Vec<u16>,
    pub samples: Vec<PosteriorSample>,
}

#[derive(Serialize, Deserialize)]
struct SampleDoc {
    k: Vec<u16>,
    /// 1-based predictor index → rows of `π`.
    pi: BTreeMap<String, Vec<Vec<f64>>>,
    /// `"h1,h2,..."` → `[λ(0), λ(1)]`.
    lambda: BTreeMap<String, [f64; 2]>,
    log_post: f64,
}

#[derive(Serialize, Deserialize)]
struct PosteriorDoc {
    format: String,
    hyper: Hyper,
    d: Vec<u16>,
    samples: Vec<SampleDoc>,
}

impl BctfPosterior {
    pub fn to_json(&self) -> Result<String> {
        let samples = self
            .samples
            .iter()
            .map(|s| SampleDoc {
                k: s.k.0.clone(),
                pi: s
                    .pi
                    .mats
                    .iter()
                    .map(|(&j, m)| ((j + 1).to_string(), (0..m.d).map(|x| m.row(x).to_vec()).collect()))
                    .collect(),
                lambda: (0..s.lambda.cells.len()).map(|c| (s.lambda.key(c), s.lambda.cells[c])).collect(),
                log_post: s.log_post,
            })
            .collect();
        let doc = PosteriorDoc { format: FORMAT.into(), hyper: self.hyper.clone(), d: self.d.clone(), samples };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PosteriorDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT {
            return Err(Error::format(0, format!("posterior format {:?}, expected {FORMAT:?}", doc.format)));
        }
        let samples = doc
            .samples
            .into_iter()
            .enumerate()
            .map(|(s, doc_sample)| sample_from_doc(s, doc_sample, &doc.d, doc.hyper.r_bar))
            .collect::<Result<_>>()?;
        Ok(BctfPosterior { hyper: doc.hyper, d: doc.d, samples })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn sample_from_doc(s: usize, doc: SampleDoc, d: &[u16], r_bar: usize) -> Result<PosteriorSample> {
    let bad = |what: String| Error::Contract(format!("sample {s}: {what}"));
    let k = KVector(doc.k);
    k.check(d, r_bar).map_err(|e| bad(e.to_string()))?;
    let active = k.active();
    let dims: Vec<usize> = active.iter().map(|&j| k.get(j)).collect();
    let mut lambda = Lambda { active: active.clone(), dims, cells: vec![[f64::NAN; 2]; k.cells()] };
    if doc.lambda.len() != lambda.cells.len() {
        return Err(bad(format!("{} lambda cells, expected {}", doc.lambda.len(), lambda.cells.len())));
    }
    for (key, pair) in doc.lambda {
        let c = lambda.parse_key(&key).ok_or_else(|| bad(format!("bad lambda key {key:?}")))?;
        if pair.iter().any(|v| !(*v >= 0.0)) || (pair[0] + pair[1] - 1.0).abs() > 1e-9 {
            return Err(bad(format!("lambda cell {key:?} is not a probability pair")));
        }
        lambda.cells[c] = pair;
    }
    let mut pi = PiSet::default();
    for (key, rows) in doc.pi {
        let j = key
            .parse::<usize>()
            .ok()
            .and_then(|j| j.checked_sub(1))
            .filter(|j| active.contains(j))
            .ok_or_else(|| bad(format!("pi key {key:?} is not an active predictor")))?;
        let (dj, kj) = (usize::from(d[j]), k.get(j));
        if rows.len() != dj || rows.iter().any(|r| r.len() != kj) {
            return Err(bad(format!("pi matrix of predictor {key} is not {dj}x{kj}")));
        }
        if rows.iter().any(|r| r.iter().any(|v| !(*v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9) {
            return Err(bad(format!("pi matrix of predictor {key} has a row off the simplex")));
        }
        pi.mats.insert(j, PiMatrix { d: dj, k: kj, values: rows.concat() });
    }
    if pi.mats.len() != active.len() {
        return Err(bad("missing pi matrices".into()));
    }
    Ok(PosteriorSample { k, lambda, pi, log_post: doc.log_post })
}
