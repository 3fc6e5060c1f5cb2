use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Log of a Gamma(shape, 1) draw, stable for tiny shapes.
///
/// Shapes below one use `G_a = G_{a+1} · U^{1/a}` in log space so that draws
/// far below the smallest positive double still order correctly.
pub(crate) fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("positive shape").sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng).ln();
        let u: f64 = 1.0 - rng.random::<f64>();
        g + u.ln() / shape
    }
}

/// Fills `out` with a Dirichlet(`alpha`) draw.
pub(crate) fn dirichlet_into<R: Rng + ?Sized>(alpha: &[f64], out: &mut [f64], rng: &mut R) {
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = log_gamma_draw(a, rng);
    }
    let top = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - top).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// `(λ(0), λ(1))` from Beta(`a0`, `a1`).
pub(crate) fn beta_pair<R: Rng + ?Sized>(a0: f64, a1: f64, rng: &mut R) -> [f64; 2] {
    let mut out = [0.0; 2];
    dirichlet_into(&[a0, a1], &mut out, rng);
    out
}

/// Index drawn proportionally to nonnegative `weights`; uniform if all vanish.
pub(crate) fn categorical<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    if !(total > 0.0) || !total.is_finite() {
        return rng.random_range(0..weights.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (h, &w) in weights.iter().enumerate() {
        if u < w {
            return h;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirichlet_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let alpha = [0.2, 1.5, 3.3];
        let total: f64 = alpha.iter().sum();
        let n = 40_000;
        let mut mean = [0.0; 3];
        let mut out = [0.0; 3];
        for _ in 0..n {
            dirichlet_into(&alpha, &mut out, &mut rng);
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (m, o) in mean.iter_mut().zip(out) {
                *m += o / n as f64;
            }
        }
        for (m, a) in mean.iter().zip(alpha) {
            assert!((m - a / total).abs() < 0.01, "{m} vs {}", a / total);
        }
    }

    #[test]
    fn tiny_shapes_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut out = [0.0; 11];
        for _ in 0..1000 {
            dirichlet_into(&[1.0 / 11.0; 11], &mut out, &mut rng);
            assert!(out.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_function_values() {
        // B(1/2, 3/2) / B(1/2, 1/2) = 1/2.
        assert!((ln_beta(0.5, 1.5) - ln_beta(0.5, 0.5) - 0.5f64.ln()).abs() < 1e-12);
        assert!((ln_beta(1.0, 1.0)).abs() < 1e-14);
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = [0.1, 0.0, 0.3];
        let mut hits = [0usize; 3];
        for _ in 0..40_000 {
            hits[categorical(&w, 0.4, &mut rng)] += 1;
        }
        assert_eq!(hits[1], 0);
        assert!((hits[0] as f64 / 40_000.0 - 0.25).abs() < 0.01);
    }
}
