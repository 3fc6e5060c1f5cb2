use std::collections::BTreeMap;

use super::dirichlet::ln_beta;
use super::model::{log_prior_k, strides, Hyper, KVector};
use crate::quantize::FeatureMatrix;
use crate::{Error, Result};

/// Largest instance the oracle enumerates.
pub const ORACLE_MAX_P: usize = 2;
pub const ORACLE_MAX_D: u16 = 2;
pub const ORACLE_MAX_N: usize = 12;

/// Exact posterior over `k` and exact predictive for every `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub k_posterior: Vec<(KVector, f64)>,
    /// All `x` in lexicographic order (1-based) with `P(Y = 1 | x, data)`.
    pub predictive: Vec<(Vec<u16>, f64)>,
}

/// Running log-sum-exp of weighted vectors.
struct Accumulator {
    max: f64,
    mass: f64,
    sums: Vec<f64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Accumulator { max: f64::NEG_INFINITY, mass: 0.0, sums: vec![0.0; len] }
    }

    fn add(&mut self, log_w: f64, values: &[f64]) {
        if log_w > self.max {
            let scale = (self.max - log_w).exp();
            self.mass *= scale;
            self.sums.iter_mut().for_each(|s| *s *= scale);
            self.max = log_w;
        }
        let w = (log_w - self.max).exp();
        self.mass += w;
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += w * v;
        }
    }

    /// `ln Σ w`.
    fn log_mass(&self) -> f64 {
        self.max + self.mass.ln()
    }
}

pub(crate) struct Instance {
    pub p: usize,
    pub d: Vec<usize>,
    pub grid: Vec<Vec<u16>>,
    /// Distinct `(x, y)` pairs (0-based `x`) with multiplicities.
    pub groups: Vec<(Vec<u16>, u8, usize)>,
}

impl Instance {
    pub(crate) fn new(x: &FeatureMatrix, y: &[u8]) -> Self {
        let d: Vec<usize> = x.d().iter().map(|&v| usize::from(v)).collect();
        let mut grid = vec![Vec::new()];
        for &dj in &d {
            grid = grid
                .into_iter()
                .flat_map(|g: Vec<u16>| (1..=dj as u16).map(move |v| [g.clone(), vec![v]].concat()))
                .collect();
        }
        let mut groups: BTreeMap<(Vec<u16>, u8), usize> = BTreeMap::new();
        for i in 0..x.n() {
            *groups.entry((x.row(i).iter().map(|v| v - 1).collect(), y[i])).or_default() += 1;
        }
        Instance {
            p: d.len(),
            d,
            grid,
            groups: groups.into_iter().map(|((x, y), c)| (x, y, c)).collect(),
        }
    }

    pub(crate) fn k_configs(&self) -> Vec<KVector> {
        let mut ks = vec![Vec::new()];
        for &dj in &self.d {
            ks = ks
                .into_iter()
                .flat_map(|k: Vec<u16>| (1..=dj.min(2) as u16).map(move |v| [k.clone(), vec![v]].concat()))
                .collect();
        }
        ks.into_iter().map(KVector).collect()
    }
}

/// Sufficient statistics of an allocation: label counts per cell and
/// class counts per predictor and category.
pub(crate) struct Counts {
    pub cells: Vec<[u32; 2]>,
    pub classes: Vec<Vec<u32>>,
}

impl Counts {
    pub(crate) fn new(inst: &Instance, k: &KVector) -> Self {
        Counts {
            cells: vec![[0; 2]; k.cells()],
            classes: (0..inst.p).map(|j| vec![0; inst.d[j] * k.get(j)]).collect(),
        }
    }

    /// Collapsed log likelihood plus the Dirichlet-multinomial log marginal
    /// of the allocation.
    pub(crate) fn log_marginal(&self, inst: &Instance, k: &KVector) -> f64 {
        let base = ln_beta(0.5, 0.5);
        let mut total: f64 = self
            .cells
            .iter()
            .filter(|c| c[0] + c[1] > 0)
            .map(|c| ln_beta(0.5 + f64::from(c[0]), 0.5 + f64::from(c[1])) - base)
            .sum();
        for j in 0..inst.p {
            let kj = k.get(j);
            let alpha = 1.0 / kj as f64;
            for x in 0..inst.d[j] {
                let row = &self.classes[j][x * kj..(x + 1) * kj];
                let nx: u32 = row.iter().sum();
                total -= libm::lgamma(1.0 + f64::from(nx));
                total += row.iter().map(|&c| libm::lgamma(alpha + f64::from(c)) - libm::lgamma(alpha)).sum::<f64>();
            }
        }
        total
    }

    /// Predictive at each grid point from posterior means of `λ` and `π`.
    pub(crate) fn predictive(&self, inst: &Instance, k: &KVector) -> Vec<f64> {
        let dims: Vec<usize> = (0..inst.p).map(|j| k.get(j)).collect();
        let st = strides(&dims);
        inst.grid
            .iter()
            .map(|x| {
                self.cells
                    .iter()
                    .enumerate()
                    .map(|(c, n)| {
                        let mut w = (0.5 + f64::from(n[1])) / (1.0 + f64::from(n[0] + n[1]));
                        for j in 0..inst.p {
                            let (kj, xj) = (dims[j], usize::from(x[j] - 1));
                            let row = &self.classes[j][xj * kj..(xj + 1) * kj];
                            let h = (c / st[j]) % kj;
                            w *= (1.0 / kj as f64 + f64::from(row[h])) / (1.0 + f64::from(row.iter().sum::<u32>()));
                        }
                        w
                    })
                    .sum()
            })
            .collect()
    }

    pub(crate) fn place(&mut self, inst: &Instance, k: &KVector, x: &[u16], y: u8, cell: usize, count: u32, add: bool) {
        let dims: Vec<usize> = (0..inst.p).map(|j| k.get(j)).collect();
        let st = strides(&dims);
        let delta = |v: &mut u32| if add { *v += count } else { *v -= count };
        delta(&mut self.cells[cell][usize::from(y)]);
        for j in 0..inst.p {
            let h = (cell / st[j]) % dims[j];
            delta(&mut self.classes[j][usize::from(x[j]) * dims[j] + h]);
        }
    }
}

fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// Recursively splits each group's count over the cells.
fn enumerate(
    inst: &Instance,
    k: &KVector,
    g: usize,
    counts: &mut Counts,
    log_coef: f64,
    leaf: &mut dyn FnMut(&Counts, f64),
) {
    if g == inst.groups.len() {
        leaf(counts, log_coef);
        return;
    }
    let (x, y, n) = &inst.groups[g];
    let cells = counts.cells.len();
    let mut parts = vec![0usize; cells];
    compositions(*n, 0, &mut parts, &mut |parts| {
        let coef = ln_factorial(*n) - parts.iter().map(|&a| ln_factorial(a)).sum::<f64>();
        for (c, &a) in parts.iter().enumerate() {
            if a > 0 {
                counts.place(inst, k, x, *y, c, a as u32, true);
            }
        }
        enumerate(inst, k, g + 1, counts, log_coef + coef, leaf);
        for (c, &a) in parts.iter().enumerate() {
            if a > 0 {
                counts.place(inst, k, x, *y, c, a as u32, false);
            }
        }
    });
}

fn compositions(left: usize, at: usize, parts: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if at + 1 == parts.len() {
        parts[at] = left;
        visit(parts);
        return;
    }
    for a in 0..=left {
        parts[at] = a;
        compositions(left - a, at + 1, parts, visit);
    }
}

/// Exact model posterior by enumeration of `k` and of all allocations.
///
/// Allocations are enumerated per distinct `(x, y)` pair as splits of its
/// count over the latent cells, weighted by multinomial coefficients, which
/// sums the same terms as enumerating every `z` individually.
pub fn exact_posterior_oracle(x: &FeatureMatrix, y: &[u8], hyper: &Hyper) -> Result<OracleResult> {
    if x.p() == 0 || x.p() > ORACLE_MAX_P || x.n() > ORACLE_MAX_N || x.d().iter().any(|&d| d > ORACLE_MAX_D) {
        return Err(Error::Contract(format!(
            "oracle refuses n = {}, p = {}, d = {:?} (limits n <= {ORACLE_MAX_N}, p <= {ORACLE_MAX_P}, d_j <= {ORACLE_MAX_D})",
            x.n(),
            x.p(),
            x.d()
        )));
    }
    if x.n() != y.len() || y.iter().any(|&v| v > 1) {
        return Err(Error::Contract("labels must be binary, one per row".into()));
    }
    let inst = Instance::new(x, y);
    let mut all = Accumulator::new(inst.grid.len());
    let mut per_k = Vec::new();
    for k in inst.k_configs() {
        let Some(lp) = log_prior_k(&k, hyper, x.d())? else {
            continue;
        };
        let mut acc = Accumulator::new(inst.grid.len());
        let mut counts = Counts::new(&inst, &k);
        enumerate(&inst, &k, 0, &mut counts, 0.0, &mut |c, coef| {
            acc.add(lp + coef + c.log_marginal(&inst, &k), &c.predictive(&inst, &k));
        });
        let log_mass = acc.log_mass();
        let mean: Vec<f64> = acc.sums.iter().map(|s| s / acc.mass).collect();
        all.add(log_mass, &mean);
        per_k.push((k, log_mass));
    }
    let total = all.log_mass();
    Ok(OracleResult {
        k_posterior: per_k.into_iter().map(|(k, lm)| (k, (lm - total).exp())).collect(),
        predictive: inst.grid.into_iter().zip(all.sums.iter().map(|s| s / all.mass)).collect(),
    })
}
