use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::quantize::FeatureMatrix;
use crate::{Error, Result};

/// Latent class counts `k_j`; `k_j = 1` excludes predictor `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KVector(pub Vec<u16>);

impl KVector {
    pub fn ones(p: usize) -> Self {
        KVector(vec![1; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> usize {
        usize::from(self.0[j])
    }

    /// Predictors with `k_j > 1`, ascending.
    pub fn active(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&j| self.0[j] > 1).collect()
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&k| k > 1).count()
    }

    /// Number of latent cells, the product of all `k_j`.
    pub fn cells(&self) -> usize {
        self.0.iter().map(|&k| usize::from(k)).product()
    }

    pub fn check(&self, d: &[u16], r_bar: usize) -> Result<()> {
        if self.0.len() != d.len() {
            return Err(Error::Contract(format!("k has {} entries for {} predictors", self.0.len(), d.len())));
        }
        if let Some(j) = (0..d.len()).find(|&j| self.0[j] == 0 || self.0[j] > d[j]) {
            return Err(Error::Contract(format!("k_{} = {} outside 1..={}", j + 1, self.0[j], d[j])));
        }
        if self.active_count() > r_bar {
            return Err(Error::Contract(format!("{} active predictors exceed the limit {r_bar}", self.active_count())));
        }
        Ok(())
    }
}

/// Soft allocation of the categories of one predictor over its latent classes.
#[derive(Clone, Debug, PartialEq)]
pub struct PiMatrix {
    pub d: usize,
    pub k: usize,
    /// `d × k`, row `x` holds the class weights of category `x` (0-based).
    pub values: Vec<f64>,
}

impl PiMatrix {
    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.k..(x + 1) * self.k]
    }

    pub fn row_mut(&mut self, x: usize) -> &mut [f64] {
        &mut self.values[x * self.k..(x + 1) * self.k]
    }
}

/// One `PiMatrix` per active predictor; inactive predictors carry none.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PiSet {
    pub mats: BTreeMap<usize, PiMatrix>,
}

impl PiSet {
    pub fn get(&self, j: usize) -> Option<&PiMatrix> {
        self.mats.get(&j)
    }
}

/// Response probabilities of the latent cells of the active predictors.
///
/// Cells are laid out row-major over `active` (first predictor most
/// significant); `cells[c] = [λ_c(0), λ_c(1)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lambda {
    pub active: Vec<usize>,
    pub dims: Vec<usize>,
    pub cells: Vec<[f64; 2]>,
}

impl Lambda {
    pub fn single(pair: [f64; 2]) -> Self {
        Lambda { active: Vec::new(), dims: Vec::new(), cells: vec![pair] }
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.dims)
    }

    /// Comma-separated 1-based latent indices of a cell, empty with no
    /// active predictors.
    pub fn key(&self, cell: usize) -> String {
        let mut rest = cell;
        self.strides()
            .iter()
            .map(|s| {
                let h = rest / s;
                rest %= s;
                (h + 1).to_string()
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_key(&self, key: &str) -> Option<usize> {
        let parts: Vec<&str> = if key.is_empty() { Vec::new() } else { key.split(',').collect() };
        if parts.len() != self.dims.len() {
            return None;
        }
        let mut cell = 0;
        for ((part, &dim), s) in parts.iter().zip(&self.dims).zip(self.strides()) {
            let h: usize = part.parse().ok()?;
            if h == 0 || h > dim {
                return None;
            }
            cell += (h - 1) * s;
        }
        Some(cell)
    }
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for t in (0..dims.len().saturating_sub(1)).rev() {
        s[t] = s[t + 1] * dims[t + 1];
    }
    s
}

/// Latent class `z_{i,j}` (0-based) of every observation for each active
/// predictor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Allocation {
    pub columns: BTreeMap<usize, Vec<u16>>,
}

/// Sampler settings and the `k` prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Expected number of active predictors.
    pub r: f64,
    /// Hard limit on active predictors.
    pub r_bar: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Joint birth/death proposals on predictor pairs per sweep.
    #[serde(default = "default_pair_moves")]
    pub pair_moves: usize,
    /// Upper bound on the number of latent cells.
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

fn default_pair_moves() -> usize {
    10
}

fn default_max_cells() -> usize {
    1 << 14
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            r: 5.0,
            r_bar: 20,
            iterations: 5000,
            burn_in: 2000,
            thin: 5,
            seed: 0,
            pair_moves: default_pair_moves(),
            max_cells: default_max_cells(),
        }
    }
}

impl Hyper {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.r >= 1.0 && self.r <= self.r_bar as f64 && self.r_bar <= p) {
            return Err(Error::Parameter(format!(
                "need 1 <= r <= r_bar <= p, got r = {}, r_bar = {}, p = {p}",
                self.r, self.r_bar
            )));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Parameter(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Parameter("thin must be at least 1".into()));
        }
        if self.max_cells == 0 {
            return Err(Error::Parameter("max_cells must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of states `fit` keeps.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Training observations, stored by column with 0-based categories.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub n: usize,
    pub d: Vec<u16>,
    pub cols: Vec<Vec<u16>>,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn new(x: &FeatureMatrix, y: &[u8]) -> Result<Self> {
        if x.n() != y.len() {
            return Err(Error::Contract(format!("{} rows but {} labels", x.n(), y.len())));
        }
        if let Some(v) = y.iter().find(|&&v| v > 1) {
            return Err(Error::Contract(format!("label {v} is not binary")));
        }
        let cols = (0..x.p()).map(|j| x.column(j).map(|v| v - 1).collect()).collect();
        Ok(Dataset { n: x.n(), d: x.d().to_vec(), cols, y: y.to_vec() })
    }

    pub fn p(&self) -> usize {
        self.d.len()
    }
}

/// `log P(k_j)` up to the truncation constant, `None` when the probability
/// is zero.
pub fn log_prior_kj(kj: usize, dj: usize, r: f64, p: usize) -> Option<f64> {
    let pr = if kj == 1 {
        1.0 - r / p as f64
    } else if kj <= dj {
        r / ((dj - 1) as f64 * p as f64)
    } else {
        0.0
    };
    (pr > 0.0).then(|| pr.ln())
}

/// Unnormalized log prior of `k`; `None` marks an excluded configuration
/// (more than `r_bar` active predictors, too many cells, or a zero factor).
pub fn log_prior_k(k: &KVector, hyper: &Hyper, d: &[u16]) -> Result<Option<f64>> {
    let p = d.len();
    if hyper.r > p as f64 {
        return Err(Error::Parameter(format!("r = {} exceeds p = {p}", hyper.r)));
    }
    if k.len() != p {
        return Err(Error::Contract(format!("k has {} entries for {p} predictors", k.len())));
    }
    if k.active_count() > hyper.r_bar || k.cells() > hyper.max_cells {
        return Ok(None);
    }
    let mut total = 0.0;
    for j in 0..p {
        match log_prior_kj(k.get(j), usize::from(d[j]), hyper.r, p) {
            Some(v) => total += v,
            None => return Ok(None),
        }
    }
    Ok(Some(total))
}

/// `P(Y = 1 | x)` for 1-based categories `x`.
///
/// Sums over the cells of the active predictors only; inactive predictors
/// contribute a factor of one.
pub fn eval_conditional(lambda: &Lambda, pi: &PiSet, k: &KVector, x: &[u16]) -> Result<f64> {
    Ok(eval_pair(lambda, pi, k, x)?[1])
}

/// `[P(Y = 0 | x), P(Y = 1 | x)]`.
pub fn eval_pair(lambda: &Lambda, pi: &PiSet, k: &KVector, x: &[u16]) -> Result<[f64; 2]> {
    if x.len() != k.len() {
        return Err(Error::Contract(format!("x has {} entries for {} predictors", x.len(), k.len())));
    }
    let active = k.active();
    if active != lambda.active {
        return Err(Error::Contract("lambda layout does not match k".into()));
    }
    let mut rows = Vec::with_capacity(active.len());
    for &j in &active {
        let m = pi
            .get(j)
            .ok_or_else(|| Error::Contract(format!("predictor {} is active but has no pi matrix", j + 1)))?;
        let xj = usize::from(x[j]);
        if xj == 0 || xj > m.d {
            return Err(Error::Contract(format!("x_{} = {xj} outside 1..={}", j + 1, m.d)));
        }
        rows.push(m.row(xj - 1));
    }
    let strides = lambda.strides();
    let mut out = [0.0; 2];
    for (c, pair) in lambda.cells.iter().enumerate() {
        let mut w = 1.0;
        for (t, row) in rows.iter().enumerate() {
            w *= row[(c / strides[t]) % lambda.dims[t]];
        }
        out[0] += w * pair[0];
        out[1] += w * pair[1];
    }
    Ok(out)
}
