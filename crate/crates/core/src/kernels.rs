//! Compactly supported convolution kernels of order `s` and their dyadic
//! rescalings `K_L(x, y) = 2^L K(2^L (x - y))`.
//!
//! The kernel is `K(u) = (1 - u^2) p(u)` on `[-1, 1]` where `p` has degree
//! `l = ceil(s) - 1` and is fixed by the moment conditions
//! `int u^j K(u) du = [j == 0]` for `j = 0..=l`. The weight `1 - u^2` is the
//! Gegenbauer weight with parameter 3/2; it makes `K` Lipschitz and zero at
//! both ends of the support. With `l = 0` this is the Epanechnikov kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{EmissionModel, Measure};
use crate::quadrature;

/// Default absolute tolerance of [`smooth`].
pub const SMOOTH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    smoothness: f64,
    order: usize,
    /// Monomial coefficients of `K` on `[-1, 1]`, lowest degree first.
    coeffs: Vec<f64>,
    lipschitz_bound: f64,
    sup_bound: f64,
}

/// Moment `int_{-1}^{1} u^n (1 - u^2) du`.
fn weight_moment(n: usize) -> f64 {
    if n % 2 == 1 {
        0.0
    } else {
        let n = n as f64;
        2.0 / (n + 1.0) - 2.0 / (n + 3.0)
    }
}

/// Kernel of order `s`: `ceil(s) - 1` vanishing moments beyond the zeroth.
pub fn build_kernel(s: f64) -> Kernel {
    assert!(s > 0.0 && s.is_finite(), "smoothness must be positive");
    let order = (s.ceil() as usize).saturating_sub(1);
    let d = order + 1;
    let gram = DMatrix::from_fn(d, d, |j, k| weight_moment(j + k));
    let mut rhs = DVector::zeros(d);
    rhs[0] = 1.0;
    // The Hankel moment matrix of a positive weight is positive definite.
    let p = gram
        .cholesky()
        .expect("moment matrix is positive definite")
        .solve(&rhs);
    let mut coeffs = vec![0.0; d + 2];
    for (k, &c) in p.iter().enumerate() {
        coeffs[k] += c;
        coeffs[k + 2] -= c;
    }
    let sup_bound = coeffs.iter().map(|c| c.abs()).sum();
    let lipschitz_bound = coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| k as f64 * c.abs())
        .sum();
    Kernel {
        smoothness: s,
        order,
        coeffs,
        lipschitz_bound,
        sup_bound,
    }
}

impl Kernel {
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Number of vanishing moments beyond the zeroth.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(u.abs() < 1.0) {
            return 0.0;
        }
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }
}

/// Dyadic bandwidth level `L`; the kernel bandwidth is `2^-L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BandwidthLevel(pub u32);

impl BandwidthLevel {
    pub fn scale(self) -> f64 {
        (self.0 as f64).exp2()
    }

    pub fn bandwidth(self) -> f64 {
        (-(self.0 as f64)).exp2()
    }
}

/// `L = round(log2((N / ln N)^(1/(1+2s))))`, floored at zero.
pub fn choose_level(n: usize, s: f64) -> BandwidthLevel {
    choose_level_scaled(n, s, 1.0)
}

/// As [`choose_level`] with `2^L` targeting `multiplier * (N / ln N)^(1/(1+2s))`.
pub fn choose_level_scaled(n: usize, s: f64, multiplier: f64) -> BandwidthLevel {
    assert!(n >= 3, "bandwidth rule needs N >= 3");
    let nf = n as f64;
    let target = multiplier * (nf / nf.ln()).powf(1.0 / (1.0 + 2.0 * s));
    let l = target.log2().round();
    BandwidthLevel(if l > 0.0 { l as u32 } else { 0 })
}

/// `K_L(x, y) = 2^L K(2^L (x - y))`.
#[inline]
pub fn eval_kl(kernel: &Kernel, level: BandwidthLevel, x: f64, y: f64) -> f64 {
    let scale = level.scale();
    scale * kernel.eval(scale * (x - y))
}

/// `K_L[f](x) = int K_L(x, y) f(y) dy` for an arbitrary integrand.
pub fn smooth_fn<F: Fn(f64) -> f64>(
    kernel: &Kernel,
    level: BandwidthLevel,
    f: F,
    breaks: &[f64],
    x: f64,
    tol: f64,
) -> Result<f64> {
    let h = level.bandwidth();
    quadrature::integrate_with_breaks(
        |y| eval_kl(kernel, level, x, y) * f(y),
        x - h,
        x + h,
        breaks,
        tol,
    )
}

/// `x -> K_L[f](x)` for a continuous emission density.
///
/// Quadrature-based; intended as a reference for tests and diagnostics.
pub fn smooth<'a>(
    kernel: &'a Kernel,
    level: BandwidthLevel,
    f: &'a EmissionModel,
) -> Result<impl Fn(f64) -> Result<f64> + 'a> {
    if f.measure() != Measure::Continuous {
        return Err(Error::InvalidParams(
            "smoothing needs a density with respect to Lebesgue measure".into(),
        ));
    }
    let breaks = f.breakpoints();
    Ok(move |x: f64| smooth_fn(kernel, level, |y| f.density_at(y), &breaks, x, SMOOTH_TOL))
}
