use crate::{Error, Result, Scalar};

/// A `(2·radius_y + 1) × (2·radius_x + 1)` correlation kernel, row-major.
///
/// Kernels built from separable profiles keep the two 1-D factors so that
/// [`convolve`](super::convolve) can run two 1-D passes instead of a 2-D one.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel<T: Scalar = f64> {
    radius_x: usize,
    radius_y: usize,
    weights: Vec<T>,
    factors: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(radius_x: usize, radius_y: usize, weights: Vec<T>) -> Result<Self> {
        let expected = (2 * radius_x + 1) * (2 * radius_y + 1);
        if weights.len() != expected {
            return Err(Error::Contract(format!(
                "kernel with radii ({radius_x}, {radius_y}) needs {expected} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("non-finite kernel weight".into()));
        }
        Ok(Self {
            radius_x,
            radius_y,
            weights,
            factors: None,
        })
    }

    /// Kernel from a function of the offset `(u, v)`.
    pub fn from_fn(radius_x: usize, radius_y: usize, mut f: impl FnMut(isize, isize) -> T) -> Self {
        let (rx, ry) = (radius_x as isize, radius_y as isize);
        let mut weights = Vec::with_capacity((2 * radius_x + 1) * (2 * radius_y + 1));
        for v in -ry..=ry {
            for u in -rx..=rx {
                weights.push(f(u, v));
            }
        }
        Self {
            radius_x,
            radius_y,
            weights,
            factors: None,
        }
    }

    /// Outer product `kx(u) · ky(v)`; both profiles must have odd length.
    pub fn separable(kx: Vec<T>, ky: Vec<T>) -> Self {
        assert!(kx.len() % 2 == 1 && ky.len() % 2 == 1, "profiles must have odd length");
        let (rx, ry) = (kx.len() / 2, ky.len() / 2);
        let mut k = Self::from_fn(rx, ry, |u, v| {
            kx[(u + rx as isize) as usize] * ky[(v + ry as isize) as usize]
        });
        k.factors = Some((kx, ky));
        k
    }

    pub fn identity() -> Self {
        Self::separable(vec![T::one()], vec![T::one()])
    }

    #[inline]
    pub fn radius_x(&self) -> usize {
        self.radius_x
    }

    #[inline]
    pub fn radius_y(&self) -> usize {
        self.radius_y
    }

    #[inline]
    pub fn width(&self) -> usize {
        2 * self.radius_x + 1
    }

    #[inline]
    pub fn height(&self) -> usize {
        2 * self.radius_y + 1
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn factors(&self) -> Option<(&[T], &[T])> {
        self.factors.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()))
    }

    /// Weight at offset `(u, v)` from the center.
    #[inline]
    pub fn weight(&self, u: isize, v: isize) -> T {
        let col = (u + self.radius_x as isize) as usize;
        let row = (v + self.radius_y as isize) as usize;
        self.weights[row * self.width() + col]
    }

    pub fn sum(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// Linear combination `Σ cᵢ·Kᵢ` of equally sized kernels.
    pub fn combine(terms: &[(T, &Kernel<T>)]) -> Self {
        let (_, first) = terms[0];
        assert!(
            terms
                .iter()
                .all(|(_, k)| k.radius_x == first.radius_x && k.radius_y == first.radius_y),
            "combined kernels must share radii"
        );
        let mut weights = vec![T::zero(); first.weights.len()];
        for &(c, k) in terms {
            for (w, &kw) in weights.iter_mut().zip(&k.weights) {
                *w += c * kw;
            }
        }
        Self {
            radius_x: first.radius_x,
            radius_y: first.radius_y,
            weights,
            factors: None,
        }
    }
}

/// Sampled 1-D Gaussian derivative profile of the given order on `[-radius, radius]`.
///
/// Order 0 is normalized to sum to one. Order 1 is mirrored so that
/// correlating with it yields `+d/dt` of the smoothed signal. Order 2 has its
/// mean removed so it annihilates constants exactly.
pub(crate) fn gaussian_profile(sigma: f64, order: usize, radius: usize) -> Vec<f64> {
    let s2 = sigma * sigma;
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|t| (-((t * t) as f64) / (2.0 * s2)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let g0: Vec<f64> = raw.iter().map(|v| v / total).collect();
    match order {
        0 => g0,
        1 => (-r..=r)
            .zip(&g0)
            .map(|(t, g)| t as f64 / s2 * g)
            .collect(),
        2 => {
            let mut g2: Vec<f64> = (-r..=r)
                .zip(&g0)
                .map(|(t, g)| ((t * t) as f64 / (s2 * s2) - 1.0 / s2) * g)
                .collect();
            let mean = g2.iter().sum::<f64>() / g2.len() as f64;
            g2.iter_mut().for_each(|v| *v -= mean);
            g2
        }
        _ => unreachable!("derivative order above 2"),
    }
}

pub(crate) fn gaussian_radius(sigma: f64) -> usize {
    (4.0 * sigma).ceil() as usize
}

/// Gaussian kernel or one of its partial derivatives `∂^dx_x ∂^dy_y G_σ`.
///
/// Radius is `ceil(4σ)` on both axes. Correlating an image with the result
/// gives the corresponding derivative of the Gaussian-smoothed image (first
/// derivatives are sampled mirrored to honor the correlation convention).
pub fn gaussian_kernel<T: Scalar>(sigma: f64, dx: usize, dy: usize) -> Result<Kernel<T>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if dx + dy > 2 {
        return Err(Error::Parameter(format!(
            "derivative orders ({dx}, {dy}) exceed total order 2"
        )));
    }
    let radius = gaussian_radius(sigma);
    let conv = |p: Vec<f64>| p.into_iter().map(T::of).collect::<Vec<T>>();
    let kx = conv(gaussian_profile(sigma, dx, radius));
    let ky = conv(gaussian_profile(sigma, dy, radius));
    Ok(Kernel::separable(kx, ky))
}
