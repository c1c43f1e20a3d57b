//! Smooth compactly supported bumps used to build locally perturbed
//! Gaussian densities (minimax stress instances).

use std::f64::consts::E;

/// Standard smooth bump `exp(-1/(1-v^2))` on (-1, 1), zero elsewhere.
pub fn bump(v: f64) -> f64 {
    if v.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - v * v)).exp()
    }
}

/// Zero-mean perturbation `psi(u) = e * (b(4u+1) - b(4u-1))`.
///
/// Support is (-1/2, 1/2), `sup |psi| = 1` (attained at `u = -1/4` and
/// `u = 1/4`), and `psi` is odd so it integrates to zero.
pub fn psi(u: f64) -> f64 {
    E * (bump(4.0 * u + 1.0) - bump(4.0 * u - 1.0))
}

/// Points in (-1/2, 1/2) where `|psi|` reaches 1.
pub const PSI_PEAKS: [f64; 2] = [-0.25, 0.25];

/// `r * phi(r x) + A * psi(M x - m + 1/2)` with `phi` the standard normal pdf.
pub fn perturbed_gaussian(x: f64, scale: f64, amplitude: f64, bumps: u32, index: u32) -> f64 {
    let base = scale * standard_normal_pdf(scale * x);
    if amplitude == 0.0 || bumps == 0 {
        return base;
    }
    base + amplitude * psi(bumps as f64 * x - index as f64 + 0.5)
}

/// Open support interval of bump `index` out of `bumps`.
pub fn bump_support(bumps: u32, index: u32) -> (f64, f64) {
    let m = bumps as f64;
    ((index as f64 - 1.0) / m, index as f64 / m)
}

pub(crate) fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
