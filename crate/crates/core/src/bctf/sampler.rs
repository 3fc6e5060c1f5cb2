use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dirichlet::{beta_pair, categorical, dirichlet_into, ln_beta};
use super::model::{
    log_prior_k, log_prior_kj, strides, Allocation, Dataset, Hyper, KVector, Lambda, PiMatrix, PiSet,
};
use super::predict::sample_conditionals;
use super::{BctfPosterior, PosteriorSample};
use crate::{Error, Result};

/// Complete sampler state: `k`, the two parameter blocks and the latent
/// allocations.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub k: KVector,
    pub lambda: Lambda,
    pub pi: PiSet,
    pub z: Allocation,
}

/// Empty model with `λ` drawn from its Beta(1/2, 1/2) prior.
pub fn init_state<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> ChainState {
    ChainState {
        k: KVector::ones(data.p()),
        lambda: Lambda::single(beta_pair(0.5, 0.5, rng)),
        pi: PiSet::default(),
        z: Allocation::default(),
    }
}

fn cell_indices(state: &ChainState, n: usize) -> Vec<usize> {
    let mut cells = vec![0usize; n];
    for (&j, s) in state.lambda.active.iter().zip(state.lambda.strides()) {
        for (c, &h) in cells.iter_mut().zip(&state.z.columns[&j]) {
            *c += usize::from(h) * s;
        }
    }
    cells
}

fn label_counts(cells: &[usize], y: &[u8], count: usize) -> Vec<[u32; 2]> {
    let mut n = vec![[0u32; 2]; count];
    for (&c, &yi) in cells.iter().zip(y) {
        n[c][usize::from(yi)] += 1;
    }
    n
}

/// `λ` from its full conditional given the allocation; also resets the
/// cell layout to the current `k`.
fn redraw_lambda<R: Rng + ?Sized>(state: &mut ChainState, data: &Dataset, rng: &mut R) {
    let active = state.k.active();
    let dims: Vec<usize> = active.iter().map(|&j| state.k.get(j)).collect();
    let count = dims.iter().product();
    state.lambda = Lambda { active, dims, cells: vec![[0.5, 0.5]; count] };
    let cells = cell_indices(state, data.n);
    let counts = label_counts(&cells, &data.y, count);
    for (pair, c) in state.lambda.cells.iter_mut().zip(counts) {
        *pair = beta_pair(0.5 + f64::from(c[0]), 0.5 + f64::from(c[1]), rng);
    }
}

/// `π^{(j)}` from its full conditional given `z_j`.
fn redraw_pi<R: Rng + ?Sized>(state: &mut ChainState, data: &Dataset, j: usize, rng: &mut R) {
    let (d, k) = (usize::from(data.d[j]), state.k.get(j));
    let mut counts = vec![0u32; d * k];
    for (&x, &h) in data.cols[j].iter().zip(&state.z.columns[&j]) {
        counts[usize::from(x) * k + usize::from(h)] += 1;
    }
    let mut m = PiMatrix { d, k, values: vec![0.0; d * k] };
    let mut alpha = vec![0.0; k];
    for x in 0..d {
        for (a, &c) in alpha.iter_mut().zip(&counts[x * k..(x + 1) * k]) {
            *a = 1.0 / k as f64 + f64::from(c);
        }
        dirichlet_into(&alpha, m.row_mut(x), rng);
    }
    state.pi.mats.insert(j, m);
}

/// One Gibbs sweep over `z`, `λ` and `π` with `k` fixed.
pub fn gibbs_sweep<R: Rng + ?Sized>(state: &mut ChainState, data: &Dataset, rng: &mut R) {
    let active = state.lambda.active.clone();
    let strides = state.lambda.strides();
    let mut cells = cell_indices(state, data.n);
    let mut weights = Vec::new();
    for (t, &j) in active.iter().enumerate() {
        let (k, s) = (state.k.get(j), strides[t]);
        let pi = &state.pi.mats[&j];
        let col = state.z.columns.get_mut(&j).expect("active predictor has a column");
        weights.resize(k, 0.0);
        for i in 0..data.n {
            let base = cells[i] - usize::from(col[i]) * s;
            let row = pi.row(usize::from(data.cols[j][i]));
            let y = usize::from(data.y[i]);
            let mut total = 0.0;
            for (h, w) in weights.iter_mut().enumerate() {
                *w = row[h] * state.lambda.cells[base + h * s][y];
                total += *w;
            }
            let h = categorical(&weights, total, rng);
            col[i] = h as u16;
            cells[i] = base + h * s;
        }
    }
    let counts = label_counts(&cells, &data.y, state.lambda.cells.len());
    for (pair, c) in state.lambda.cells.iter_mut().zip(counts) {
        *pair = beta_pair(0.5 + f64::from(c[0]), 0.5 + f64::from(c[1]), rng);
    }
    for &j in &active {
        redraw_pi(state, data, j, rng);
    }
}

/// Log marginal likelihood of `y` given the allocation, `λ` integrated out.
pub fn collapsed_log_lik(z: &Allocation, y: &[u8], k: &KVector) -> Result<f64> {
    let active = k.active();
    if !z.columns.keys().copied().eq(active.iter().copied()) {
        return Err(Error::Contract("allocation columns do not match the active predictors".into()));
    }
    let dims: Vec<usize> = active.iter().map(|&j| k.get(j)).collect();
    let mut cells = vec![0usize; y.len()];
    for ((&j, s), &dim) in active.iter().zip(strides(&dims)).zip(&dims) {
        let col = &z.columns[&j];
        if col.len() != y.len() || col.iter().any(|&h| usize::from(h) >= dim) {
            return Err(Error::Contract(format!("allocation of predictor {} is inconsistent", j + 1)));
        }
        for (c, &h) in cells.iter_mut().zip(col) {
            *c += usize::from(h) * s;
        }
    }
    let counts = label_counts(&cells, y, dims.iter().product());
    let base = ln_beta(0.5, 0.5);
    Ok(counts
        .iter()
        .filter(|c| c[0] + c[1] > 0)
        .map(|c| ln_beta(0.5 + f64::from(c[0]), 0.5 + f64::from(c[1])) - base)
        .sum())
}

/// Cell index over the active predictors other than `exclude`, per
/// observation, and the number of such cells.
fn other_cells(state: &ChainState, n: usize, exclude: &[usize]) -> (Vec<usize>, usize) {
    let others: Vec<usize> = state.lambda.active.iter().copied().filter(|j| !exclude.contains(j)).collect();
    let dims: Vec<usize> = others.iter().map(|&j| state.k.get(j)).collect();
    let mut cells = vec![0usize; n];
    for (&j, s) in others.iter().zip(strides(&dims)) {
        for (c, &h) in cells.iter_mut().zip(&state.z.columns[&j]) {
            *c += usize::from(h) * s;
        }
    }
    (cells, dims.iter().product())
}

struct Proposal {
    log_q: f64,
    log_target: f64,
    cols: Vec<Vec<u16>>,
}

/// Running product of factors in (0, 1], rescaled before it underflows.
struct LogProduct {
    value: f64,
    shifts: u32,
}

impl LogProduct {
    const SHIFT: f64 = 1e200;

    fn new() -> Self {
        Self { value: 1.0, shifts: 0 }
    }

    #[inline]
    fn mul(&mut self, v: f64) {
        self.value *= v;
        if self.value < 1e-100 {
            self.value *= Self::SHIFT;
            self.shifts += 1;
        }
    }

    fn ln(&self) -> f64 {
        self.value.ln() - f64::from(self.shifts) * Self::SHIFT.ln()
    }
}

/// Sequential proposal for the allocation columns of the `moving`
/// predictors, each with a given class count.
///
/// Observation `i` (in `order`) picks its classes with weight
/// `∏_t (1/k_t + c_t) × (1/2 + n_{cell,y}) / (1 + n_cell)`, counting only
/// observations already placed. This also accumulates, by the chain rule,
/// the collapsed log likelihood plus the Dirichlet-multinomial log marginal
/// of the new columns. With `forced`, the given columns are scored instead of
/// sampled.
fn sequential<R: Rng + ?Sized>(
    data: &Dataset,
    moving: &[(usize, usize)],
    other: &[usize],
    other_count: usize,
    order: &[usize],
    forced: Option<&[&[u16]]>,
    rng: &mut R,
) -> Proposal {
    assert!(matches!(moving.len(), 1 | 2), "moves touch one or two predictors");
    let dims: Vec<usize> = moving.iter().map(|&(_, k)| k).collect();
    let span: usize = dims.iter().product();
    let inner = strides(&dims);
    // Per cell: label counts and the predictive probability of each label.
    let mut cells = vec![CellState::default(); other_count * span];
    // Per predictor and category: `1/k + count` for every class.
    let mut class_weights: Vec<Vec<f64>> =
        moving.iter().map(|&(j, k)| vec![1.0 / k as f64; usize::from(data.d[j]) * k]).collect();
    let mut category_totals: Vec<Vec<f64>> = moving.iter().map(|&(j, _)| vec![1.0; usize::from(data.d[j])]).collect();
    let mut cols = vec![vec![0u16; data.n]; moving.len()];
    let mut weights = vec![0.0; span];
    let (mut q, mut target) = (LogProduct::new(), LogProduct::new());
    let category = |t: usize, i: usize| moving.get(t).map_or(0, |&(j, _)| usize::from(data.cols[j][i]));
    let kb = dims.get(1).copied().unwrap_or(1);
    for &i in order {
        let y = usize::from(data.y[i]);
        let first = other[i] * span;
        let block = &cells[first..first + span];
        let (xa, xb) = (category(0, i), category(1, i));
        let w0 = &class_weights[0][xa * dims[0]..(xa + 1) * dims[0]];
        let mut total = 0.0;
        if moving.len() == 1 {
            for ((w, &a), c) in weights.iter_mut().zip(w0).zip(block) {
                *w = a * c.predictive[y];
                total += *w;
            }
        } else {
            let w1 = &class_weights[1][xb * kb..(xb + 1) * kb];
            for ((row, &a), cell_row) in weights.chunks_exact_mut(kb).zip(w0).zip(block.chunks_exact(kb)) {
                for ((w, &b), c) in row.iter_mut().zip(w1).zip(cell_row) {
                    *w = a * b * c.predictive[y];
                    total += *w;
                }
            }
        }
        let h = match forced {
            Some(f) => (0..moving.len()).map(|t| usize::from(f[t][i]) * inner[t]).sum(),
            None => categorical(&weights, total, rng),
        };
        q.mul(weights[h] / total);
        let cell = &mut cells[first + h];
        target.mul(cell.predictive[y]);
        cell.add(y);
        for (t, x) in [xa, xb].into_iter().take(moving.len()).enumerate() {
            let k = dims[t];
            let ht = (h / inner[t]) % k;
            let slot = &mut class_weights[t][x * k + ht];
            let n = &mut category_totals[t][x];
            target.mul(*slot / *n);
            *slot += 1.0;
            *n += 1.0;
            cols[t][i] = ht as u16;
        }
    }
    Proposal { log_q: q.ln(), log_target: target.ln(), cols }
}

#[derive(Clone, Copy, Debug)]
struct CellState {
    counts: [f64; 2],
    predictive: [f64; 2],
}

impl Default for CellState {
    fn default() -> Self {
        Self { counts: [0.0; 2], predictive: [0.5; 2] }
    }
}

impl CellState {
    #[inline]
    fn add(&mut self, y: usize) {
        self.counts[y] += 1.0;
        let total = 1.0 + self.counts[0] + self.counts[1];
        self.predictive = [(0.5 + self.counts[0]) / total, (0.5 + self.counts[1]) / total];
    }
}

fn current_column(state: &ChainState, j: usize, n: usize) -> Vec<u16> {
    state.z.columns.get(&j).cloned().unwrap_or_else(|| vec![0; n])
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    log_ratio >= 0.0 || (1.0 - rng.random::<f64>()).ln() < log_ratio
}

/// Commits new `k_j` and columns, then redraws `λ` and the touched `π`.
fn apply_move<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &Dataset,
    moves: Vec<(usize, usize, Vec<u16>)>,
    rng: &mut R,
) {
    for (j, k, col) in &moves {
        state.k.0[*j] = *k as u16;
        if *k == 1 {
            state.z.columns.remove(j);
            state.pi.mats.remove(j);
        } else {
            state.z.columns.insert(*j, col.clone());
        }
    }
    redraw_lambda(state, data, rng);
    for (j, k, _) in moves {
        if k > 1 {
            redraw_pi(state, data, j, rng);
        }
    }
}

fn shuffled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Metropolis-Hastings move on `(k_j, z_j)` with `λ` and `π^{(j)}`
/// integrated out.
fn single_site<R: Rng + ?Sized>(state: &mut ChainState, data: &Dataset, hyper: &Hyper, j: usize, rng: &mut R) {
    let (p, dj) = (data.p(), usize::from(data.d[j]));
    if dj < 2 {
        return;
    }
    let kj = state.k.get(j);
    let u = rng.random_range(0..dj - 1);
    let kn = if u + 1 < kj { u + 1 } else { u + 2 };
    if kj == 1 && state.k.active_count() + 1 > hyper.r_bar {
        return;
    }
    let (other, m) = other_cells(state, data.n, &[j]);
    if m * kn > hyper.max_cells {
        return;
    }
    let (Some(lp_new), Some(lp_old)) = (log_prior_kj(kn, dj, hyper.r, p), log_prior_kj(kj, dj, hyper.r, p)) else {
        return;
    };
    let order = shuffled(data.n, rng);
    let fwd = sequential(data, &[(j, kn)], &other, m, &order, None, rng);
    let old = current_column(state, j, data.n);
    let rev = sequential(data, &[(j, kj)], &other, m, &order, Some(&[&old]), rng);
    let log_ratio = lp_new + fwd.log_target - lp_old - rev.log_target + rev.log_q - fwd.log_q;
    if accept(log_ratio, rng) {
        let col = fwd.cols.into_iter().next().expect("one column");
        apply_move(state, data, vec![(j, kn, col)], rng);
    }
}

/// Joint birth or death of two predictors, so that interactions without
/// marginal signal can enter the model.
fn pair_move<R: Rng + ?Sized>(state: &mut ChainState, data: &Dataset, hyper: &Hyper, eligible: &[usize], rng: &mut R) {
    if eligible.len() < 2 {
        return;
    }
    let p = data.p();
    let ia = rng.random_range(0..eligible.len());
    let mut ib = rng.random_range(0..eligible.len() - 1);
    if ib >= ia {
        ib += 1;
    }
    let (a, b) = (eligible[ia.min(ib)], eligible[ia.max(ib)]);
    let (da, db) = (usize::from(data.d[a]), usize::from(data.d[b]));
    let (ka, kb) = (state.k.get(a), state.k.get(b));
    let choices = ((da - 1) * (db - 1)) as f64;
    let prior = |k1: usize, k2: usize| {
        Some(log_prior_kj(k1, da, hyper.r, p)? + log_prior_kj(k2, db, hyper.r, p)?)
    };
    let (other, m) = other_cells(state, data.n, &[a, b]);
    if ka == 1 && kb == 1 {
        if state.k.active_count() + 2 > hyper.r_bar {
            return;
        }
        let (na, nb) = (rng.random_range(2..=da), rng.random_range(2..=db));
        if m * na * nb > hyper.max_cells {
            return;
        }
        let (Some(lp_new), Some(lp_old)) = (prior(na, nb), prior(1, 1)) else {
            return;
        };
        let order = shuffled(data.n, rng);
        let fwd = sequential(data, &[(a, na), (b, nb)], &other, m, &order, None, rng);
        let zeros = vec![0u16; data.n];
        let rev = sequential(data, &[(a, 1), (b, 1)], &other, m, &order, Some(&[&zeros, &zeros]), rng);
        let log_ratio = lp_new + fwd.log_target - lp_old - rev.log_target - fwd.log_q + choices.ln();
        if accept(log_ratio, rng) {
            let mut cols = fwd.cols.into_iter();
            let (ca, cb) = (cols.next().expect("two columns"), cols.next().expect("two columns"));
            apply_move(state, data, vec![(a, na, ca), (b, nb, cb)], rng);
        }
    } else if ka > 1 && kb > 1 {
        let (Some(lp_new), Some(lp_old)) = (prior(1, 1), prior(ka, kb)) else {
            return;
        };
        let order = shuffled(data.n, rng);
        let zeros = vec![0u16; data.n];
        let fwd = sequential(data, &[(a, 1), (b, 1)], &other, m, &order, Some(&[&zeros, &zeros]), rng);
        let (za, zb) = (current_column(state, a, data.n), current_column(state, b, data.n));
        let rev = sequential(data, &[(a, ka), (b, kb)], &other, m, &order, Some(&[&za, &zb]), rng);
        let log_ratio = lp_new + fwd.log_target - lp_old - rev.log_target + rev.log_q - choices.ln();
        if accept(log_ratio, rng) {
            apply_move(state, data, vec![(a, 1, zeros.clone()), (b, 1, zeros)], rng);
        }
    }
}

/// Variable-selection moves: one single-site proposal per predictor in
/// random order, then `hyper.pair_moves` pair birth/death proposals.
pub fn update_k<R: Rng + ?Sized>(state: &mut ChainState, data: &Dataset, hyper: &Hyper, rng: &mut R) {
    for j in shuffled(data.p(), rng) {
        single_site(state, data, hyper, j, rng);
    }
    let eligible: Vec<usize> = (0..data.p()).filter(|&j| data.d[j] >= 2).collect();
    for _ in 0..hyper.pair_moves {
        pair_move(state, data, hyper, &eligible, rng);
    }
}

fn ln_density(values: &[f64], alpha: f64) -> f64 {
    let k = values.len() as f64;
    libm::lgamma(alpha * k) - k * libm::lgamma(alpha)
        + values.iter().map(|v| (alpha - 1.0) * v.max(f64::MIN_POSITIVE).ln()).sum::<f64>()
}

/// Unnormalized log posterior density of `(k, λ, π)`.
pub fn log_posterior(state: &ChainState, data: &Dataset, hyper: &Hyper) -> f64 {
    let Ok(Some(mut total)) = log_prior_k(&state.k, hyper, &data.d) else {
        return f64::NEG_INFINITY;
    };
    for (&j, m) in &state.pi.mats {
        let alpha = 1.0 / state.k.get(j) as f64;
        total += (0..m.d).map(|x| ln_density(m.row(x), alpha)).sum::<f64>();
    }
    total += state.lambda.cells.iter().map(|c| ln_density(c, 0.5)).sum::<f64>();
    let p1 = sample_conditionals(&state.lambda, &state.pi, &data.cols, data.n);
    total
        + p1
            .iter()
            .zip(&data.y)
            .map(|(&q, &y)| (if y == 1 { q } else { 1.0 - q }).max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
}

/// Runs one chain and keeps every `thin`-th state after burn-in.
pub fn fit(data: &Dataset, hyper: &Hyper) -> Result<BctfPosterior> {
    hyper.validate(data.p())?;
    let ones = data.y.iter().filter(|&&v| v == 1).count();
    if data.n < 2 || ones == 0 || ones == data.n {
        return Err(Error::Contract("training needs at least two observations and both classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut state = init_state(data, &mut rng);
    let mut samples = Vec::with_capacity(hyper.retained());
    for it in 0..hyper.iterations {
        gibbs_sweep(&mut state, data, &mut rng);
        update_k(&mut state, data, hyper, &mut rng);
        assert!(state.k.active_count() <= hyper.r_bar, "sparsity bound violated");
        if it >= hyper.burn_in && (it - hyper.burn_in + 1).is_multiple_of(hyper.thin) {
            samples.push(PosteriorSample {
                log_post: log_posterior(&state, data, hyper),
                k: state.k.clone(),
                lambda: state.lambda.clone(),
                pi: state.pi.clone(),
            });
        }
    }
    Ok(BctfPosterior { hyper: hyper.clone(), d: data.d.clone(), samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bctf::eval_pair;
    use crate::quantize::FeatureMatrix;
    use std::collections::BTreeMap;

    fn toy(n: usize, p: usize, d: u16, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<u16> = (0..n * p).map(|_| rng.random_range(1..=d)).collect();
        let x = FeatureMatrix::new(n, vec![d; p], values).unwrap();
        let y: Vec<u8> = (0..n).map(|i| u8::from(x.get(i, 0) == 1) ^ u8::from(rng.random::<f64>() < 0.1)).collect();
        Dataset::new(&x, &y).unwrap()
    }

    fn check_state(s: &ChainState, data: &Dataset, r_bar: usize) {
        s.k.check(&data.d, r_bar).unwrap();
        assert_eq!(s.lambda.active, s.k.active());
        assert_eq!(s.lambda.cells.len(), s.k.cells());
        for c in &s.lambda.cells {
            assert!(c[0] >= 0.0 && c[1] >= 0.0 && (c[0] + c[1] - 1.0).abs() < 1e-12);
        }
        assert_eq!(s.pi.mats.keys().copied().collect::<Vec<_>>(), s.k.active());
        for (&j, m) in &s.pi.mats {
            assert_eq!((m.d, m.k), (usize::from(data.d[j]), s.k.get(j)));
            for x in 0..m.d {
                assert!((m.row(x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        for (&j, col) in &s.z.columns {
            assert!(col.iter().all(|&h| usize::from(h) < s.k.get(j)));
        }
    }

    #[test]
    fn init_is_empty_and_deterministic() {
        let data = toy(10, 3, 3, 1);
        let a = init_state(&data, &mut ChaCha8Rng::seed_from_u64(5));
        let b = init_state(&data, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert_eq!(a.k.active_count(), 0);
        assert!((a.lambda.cells[0][0] + a.lambda.cells[0][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_model_sweep_is_a_beta_draw() {
        let data = toy(40, 2, 3, 2);
        let n1 = data.y.iter().filter(|&&v| v == 1).count() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = init_state(&data, &mut rng);
        let reps = 20_000;
        let mut mean = 0.0;
        for _ in 0..reps {
            gibbs_sweep(&mut s, &data, &mut rng);
            mean += s.lambda.cells[0][1] / reps as f64;
        }
        let want = (0.5 + n1) / (1.0 + 40.0);
        assert!((mean - want).abs() < 0.005, "{mean} vs {want}");
    }

    #[test]
    fn single_observation_z_conditional() {
        // n = 1, p = 1, k = (2): z ∝ (π_1 λ_1(y), π_2 λ_2(y)).
        let x = FeatureMatrix::new(1, vec![2], vec![2]).unwrap();
        let data = Dataset::new(&x, &[1]).unwrap();
        let pi = PiMatrix { d: 2, k: 2, values: vec![0.5, 0.5, 0.3, 0.7] };
        let lambda = Lambda { active: vec![0], dims: vec![2], cells: vec![[0.2, 0.8], [0.6, 0.4]] };
        let want = 0.3 * 0.8 / (0.3 * 0.8 + 0.7 * 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 40_000;
        let mut first = 0;
        for _ in 0..reps {
            let mut s = ChainState {
                k: KVector(vec![2]),
                lambda: lambda.clone(),
                pi: PiSet { mats: BTreeMap::from([(0, pi.clone())]) },
                z: Allocation { columns: BTreeMap::from([(0, vec![1])]) },
            };
            gibbs_sweep(&mut s, &data, &mut rng);
            first += usize::from(s.z.columns[&0][0] == 0);
        }
        assert!((first as f64 / reps as f64 - want).abs() < 0.01);
    }

    #[test]
    fn lambda_conditional_uses_prior_plus_counts() {
        // With z fixed, E[λ_c(1)] = (1/2 + n_c1) / (1 + n_c).
        let x = FeatureMatrix::new(5, vec![2], vec![1, 1, 2, 2, 2]).unwrap();
        let data = Dataset::new(&x, &[1, 1, 0, 1, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = ChainState {
            k: KVector(vec![2]),
            lambda: Lambda { active: vec![0], dims: vec![2], cells: vec![[0.5, 0.5]; 2] },
            pi: PiSet::default(),
            z: Allocation { columns: BTreeMap::from([(0, vec![0, 0, 1, 1, 1])]) },
        };
        let reps = 40_000;
        let mut mean = [0.0; 2];
        for _ in 0..reps {
            redraw_lambda(&mut s, &data, &mut rng);
            for c in 0..2 {
                mean[c] += s.lambda.cells[c][1] / reps as f64;
            }
        }
        assert!((mean[0] - 2.5 / 3.0).abs() < 0.005);
        assert!((mean[1] - 1.5 / 4.0).abs() < 0.005);
    }

    #[test]
    fn collapsed_likelihood_examples() {
        let k = KVector::ones(1);
        assert_eq!(collapsed_log_lik(&Allocation::default(), &[], &k).unwrap(), 0.0);
        let v = collapsed_log_lik(&Allocation::default(), &[1], &k).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-12);
        // Two pure cells beat their merge.
        let k2 = KVector(vec![2]);
        let split = Allocation { columns: BTreeMap::from([(0, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1])]) };
        let y = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let merged = collapsed_log_lik(&Allocation::default(), &y, &k).unwrap();
        assert!(collapsed_log_lik(&split, &y, &k2).unwrap() > merged);
        let bad = Allocation { columns: BTreeMap::from([(0, vec![2; 10])]) };
        assert!(collapsed_log_lik(&bad, &y, &k2).is_err());
    }

    #[test]
    fn sequential_target_matches_closed_form() {
        let data = toy(30, 2, 3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let other = vec![0usize; data.n];
        let order = shuffled(data.n, &mut rng);
        let prop = sequential(&data, &[(0, 3)], &other, 1, &order, None, &mut rng);
        let z = Allocation { columns: BTreeMap::from([(0, prop.cols[0].clone())]) };
        let k = KVector(vec![3, 1]);
        let mut dm = 0.0;
        for x in 0..3u16 {
            let mut c = [0.0; 3];
            for i in 0..data.n {
                if data.cols[0][i] == x {
                    c[usize::from(prop.cols[0][i])] += 1.0;
                }
            }
            let nx: f64 = c.iter().sum();
            dm += libm::lgamma(1.0) - libm::lgamma(1.0 + nx)
                + c.iter().map(|&v| libm::lgamma(1.0 / 3.0 + v) - libm::lgamma(1.0 / 3.0)).sum::<f64>();
        }
        let want = collapsed_log_lik(&z, &data.y, &k).unwrap() + dm;
        assert!((prop.log_target - want).abs() < 1e-9);
        let again = sequential(&data, &[(0, 3)], &other, 1, &order, Some(&[&prop.cols[0]]), &mut rng);
        assert!((again.log_q - prop.log_q).abs() < 1e-12 && (again.log_target - prop.log_target).abs() < 1e-12);
    }

    #[test]
    fn states_stay_valid_and_sparse() {
        let data = toy(60, 6, 4, 9);
        let hyper = Hyper { r: 2.0, r_bar: 2, iterations: 200, burn_in: 100, thin: 1, ..Hyper::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut s = init_state(&data, &mut rng);
        let mut seen_active = false;
        for _ in 0..200 {
            gibbs_sweep(&mut s, &data, &mut rng);
            update_k(&mut s, &data, &hyper, &mut rng);
            check_state(&s, &data, 2);
            seen_active |= s.k.active_count() > 0;
            for x in [[1u16, 2, 3, 4, 1, 2], [4, 4, 4, 4, 4, 4]] {
                let pr = eval_pair(&s.lambda, &s.pi, &s.k, &x).unwrap();
                assert!((pr[0] + pr[1] - 1.0).abs() < 1e-12);
            }
        }
        assert!(seen_active);
    }

    #[test]
    fn unit_category_predictor_never_moves() {
        let x = FeatureMatrix::new(4, vec![1, 2], vec![1, 1, 1, 2, 1, 1, 1, 2]).unwrap();
        let data = Dataset::new(&x, &[0, 1, 0, 1]).unwrap();
        let hyper = Hyper { r: 1.0, r_bar: 2, iterations: 300, burn_in: 0, thin: 1, ..Hyper::default() };
        let post = fit(&data, &hyper).unwrap();
        assert!(post.samples.iter().all(|s| s.k.get(0) == 1));
    }

    #[test]
    fn fit_bookkeeping_and_determinism() {
        let data = toy(50, 4, 3, 11);
        let hyper = Hyper { r: 1.0, r_bar: 2, iterations: 103, burn_in: 20, thin: 4, seed: 3, ..Hyper::default() };
        let a = fit(&data, &hyper).unwrap();
        assert_eq!(a.samples.len(), (103 - 20) / 4);
        assert_eq!(a, fit(&data, &hyper).unwrap());
        for s in &a.samples {
            assert!(s.k.active_count() <= 2 && s.log_post.is_finite());
        }
        let one_class = Dataset::new(&FeatureMatrix::new(2, vec![2], vec![1, 2]).unwrap(), &[1, 1]).unwrap();
        assert!(fit(&one_class, &Hyper { r: 1.0, r_bar: 1, ..hyper.clone() }).is_err());
        assert!(matches!(fit(&data, &Hyper { r_bar: 9, ..hyper }), Err(Error::Parameter(_))));
    }
}
