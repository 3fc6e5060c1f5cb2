use std::collections::BTreeMap;

use rayon::prelude::*;

use super::model::{Lambda, PiSet};
use super::BctfPosterior;
use crate::features::FeatureManifest;
use crate::quantize::FeatureMatrix;
use crate::{Error, Result};

/// `P(Y = 1 | x_i)` under one parameter draw for every row.
///
/// `cols` holds 0-based categories by predictor. Rows are visited in
/// lexicographic order of their active categories and the `λ` tensor is
/// contracted one predictor at a time, so work on a shared prefix of
/// categories is done once.
pub(crate) fn sample_conditionals(lambda: &Lambda, pi: &PiSet, cols: &[Vec<u16>], n: usize) -> Vec<f64> {
    let order = pattern_order(&lambda.active, cols, n);
    let mut out = vec![0.0; n];
    contract_into(lambda, pi, cols, &order, |i, v| out[i] = v);
    out
}

fn pattern_order(active: &[usize], cols: &[Vec<u16>], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if !active.is_empty() {
        order.sort_by(|&a, &b| active.iter().map(|&j| cols[j][a].cmp(&cols[j][b])).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    }
    order
}

fn contract_into(lambda: &Lambda, pi: &PiSet, cols: &[Vec<u16>], order: &[usize], mut emit: impl FnMut(usize, f64)) {
    let m = lambda.active.len();
    let mut sizes = vec![lambda.cells.len()];
    for &dim in &lambda.dims {
        sizes.push(sizes.last().expect("nonempty") / dim);
    }
    let mut levels: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    for (c, pair) in lambda.cells.iter().enumerate() {
        levels[0][c] = pair[1];
    }
    let mats: Vec<_> = lambda.active.iter().map(|j| &pi.mats[j]).collect();
    let mut prev: Option<usize> = None;
    for &i in order {
        let start = match prev {
            None => 0,
            Some(q) => (0..m).find(|&t| cols[lambda.active[t]][q] != cols[lambda.active[t]][i]).unwrap_or(m),
        };
        for t in start..m {
            let row = mats[t].row(usize::from(cols[lambda.active[t]][i]));
            let (lower, upper) = levels.split_at_mut(t + 1);
            let (src, dst) = (&lower[t], &mut upper[0]);
            let size = sizes[t + 1];
            dst.fill(0.0);
            for (h, &w) in row.iter().enumerate() {
                for (d, s) in dst.iter_mut().zip(&src[h * size..(h + 1) * size]) {
                    *d += w * s;
                }
            }
        }
        emit(i, levels[m][0]);
        prev = Some(i);
    }
}

/// Samples handled by one parallel task; fixed so the summation order does
/// not depend on the thread count.
const CHUNK: usize = 8;

/// Posterior-mean crack probability of every row.
pub fn predict(posterior: &BctfPosterior, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    if posterior.samples.is_empty() {
        return Err(Error::Contract("posterior has no samples".into()));
    }
    if matrix.p() != posterior.d.len() {
        return Err(Error::Contract(format!(
            "matrix has {} predictors, posterior was trained on {}",
            matrix.p(),
            posterior.d.len()
        )));
    }
    for (j, &dj) in posterior.d.iter().enumerate() {
        if let Some(v) = matrix.column(j).find(|&v| v > dj) {
            return Err(Error::Contract(format!("predictor {} has category {v} beyond trained d = {dj}", j + 1)));
        }
    }
    let n = matrix.n();
    let cols: Vec<Vec<u16>> = (0..matrix.p()).map(|j| matrix.column(j).map(|v| v - 1).collect()).collect();
    let mut groups: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
    for (s, sample) in posterior.samples.iter().enumerate() {
        groups.entry(&sample.lambda.active).or_default().push(s);
    }
    let mut total = vec![0.0; n];
    for (active, members) in groups {
        let order = pattern_order(active, &cols, n);
        let partial: Vec<Vec<f64>> = members
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = vec![0.0; n];
                for &s in chunk {
                    let sample = &posterior.samples[s];
                    contract_into(&sample.lambda, &sample.pi, &cols, &order, |i, v| acc[i] += v);
                }
                acc
            })
            .collect();
        for acc in partial {
            for (t, a) in total.iter_mut().zip(acc) {
                *t += a;
            }
        }
    }
    let count = posterior.samples.len() as f64;
    Ok(total.into_iter().map(|v| (v / count).clamp(0.0, 1.0)).collect())
}

/// Pixels with probability at least `t` are cracks.
pub fn threshold_map(probabilities: &[f64], t: f64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter(format!("threshold {t} outside [0, 1]")));
    }
    Ok(probabilities.iter().map(|&p| p >= t).collect())
}

/// Fraction of retained samples in which each predictor is active.
pub fn inclusion_probabilities(posterior: &BctfPosterior) -> Vec<f64> {
    let s = posterior.samples.len().max(1) as f64;
    (0..posterior.d.len())
        .map(|j| posterior.samples.iter().filter(|x| x.k.get(j) > 1).count() as f64 / s)
        .collect()
}

/// One row of the selection report.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SelectedPredictor {
    /// 1-based predictor index.
    pub index: usize,
    pub inclusion: f64,
    /// Most frequent `k_j` among samples where the predictor is active.
    pub k_mode: usize,
    pub description: String,
}

/// Predictors included in more than half of the samples.
pub fn selection_report(posterior: &BctfPosterior, manifest: Option<&FeatureManifest>) -> Vec<SelectedPredictor> {
    inclusion_probabilities(posterior)
        .into_iter()
        .enumerate()
        .filter(|&(_, q)| q > 0.5)
        .map(|(j, inclusion)| {
            let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
            for s in &posterior.samples {
                if s.k.get(j) > 1 {
                    *freq.entry(s.k.get(j)).or_default() += 1;
                }
            }
            let k_mode = freq.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map_or(1, |(&k, _)| k);
            let description = manifest
                .and_then(|m| m.entries.get(j))
                .map_or_else(|| format!("predictor {}", j + 1), |e| e.describe());
            SelectedPredictor { index: j + 1, inclusion, k_mode, description }
        })
        .collect()
}

/// Table rendering: `X_j  k_j  Description`.
pub fn format_selection(rows: &[SelectedPredictor]) -> String {
    let mut out = format!("{:<8}{:<6}{}\n", "X_j", "k_j", "Description");
    for r in rows {
        out.push_str(&format!("{:<8}{:<6}{}\n", format!("X_{}", r.index), r.k_mode, r.description));
    }
    out
}
