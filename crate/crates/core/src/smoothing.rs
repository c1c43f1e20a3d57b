//! ℓ-values `P(theta_i = 0 | X_1..X_N)` by the scaled forward–backward
//! algorithm, plus the windowed and filtering approximations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::HmmParams;

/// Default floor applied to emission densities at likelihood evaluation.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Posterior null probabilities, one per position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LValueVector {
    values: Vec<f64>,
    /// Hash of the parameters the values were computed under (0 if unknown).
    params_tag: u64,
}

impl LValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        LValueVector::with_tag(values, 0)
    }

    pub fn with_tag(values: Vec<f64>, params_tag: u64) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParams(format!("ℓ-value {bad} is outside [0, 1]")));
        }
        Ok(LValueVector { values, params_tag })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn params_tag(&self) -> u64 {
        self.params_tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for LValueVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// FNV-1a hash of the JSON form of `h`.
pub fn params_tag(h: &HmmParams) -> u64 {
    let json = h.to_json().unwrap_or_default();
    json.bytes().fold(0xcbf2_9ce4_8422_2325u64, |acc, b| {
        (acc ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Posterior state marginals `P(theta_i = j | X)`, row per position.
pub fn posterior_marginals(x: &[f64], h: &HmmParams, floor: f64) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let j = h.n_states();
    let q = h.transition();
    let lik: Vec<f64> = x
        .iter()
        .flat_map(|&v| (0..j).map(move |s| h.emission(s).density_at(v).max(floor)))
        .collect();

    // Forward pass, normalised at each step.
    let mut alpha = vec![0.0; n * j];
    let mut scale = vec![0.0; n];
    for i in 0..n {
        for t in 0..j {
            let prior = if i == 0 {
                h.stationary().get(t)
            } else {
                (0..j).map(|s| alpha[(i - 1) * j + s] * q.get(s, t)).sum()
            };
            alpha[i * j + t] = prior * lik[i * j + t];
        }
        let c: f64 = alpha[i * j..(i + 1) * j].iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::DegenerateLikelihood { position: i });
        }
        scale[i] = c;
        alpha[i * j..(i + 1) * j].iter_mut().for_each(|a| *a /= c);
    }

    // Backward pass with the same scaling constants.
    let mut beta = vec![1.0; j];
    let mut next = vec![0.0; j];
    let mut out = vec![vec![0.0; j]; n];
    for i in (0..n).rev() {
        if i + 1 < n {
            for (s, b) in next.iter_mut().enumerate() {
                *b = (0..j)
                    .map(|t| q.get(s, t) * lik[(i + 1) * j + t] * beta[t])
                    .sum::<f64>()
                    / scale[i + 1];
            }
            beta.copy_from_slice(&next);
        }
        let row = &mut out[i];
        for s in 0..j {
            row[s] = alpha[i * j + s] * beta[s];
        }
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v = (*v / z).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// ℓ-values with an explicit density floor.
pub fn l_values_with_floor(x: &[f64], h: &HmmParams, floor: f64) -> Result<LValueVector> {
    let post = posterior_marginals(x, h, floor)?;
    LValueVector::with_tag(post.into_iter().map(|r| r[0]).collect(), params_tag(h))
}

/// `ℓ_i = P_H(theta_i = 0 | X_1..X_N)`.
pub fn l_values(x: &[f64], h: &HmmParams) -> Result<LValueVector> {
    l_values_with_floor(x, h, DEFAULT_FLOOR)
}

/// `ℓ'_i = P_H(theta_i = 0 | X_{i-A}..X_{i+A})` for 1-based `i`, with the
/// window started from the stationary law.
pub fn windowed_l_value(x: &[f64], h: &HmmParams, i: usize, half_width: usize) -> Result<f64> {
    let n = x.len();
    if i <= half_width || i + half_width > n {
        return Err(Error::IndexOutOfWindow {
            index: i,
            half_width,
            len: n,
        });
    }
    let window = &x[i - 1 - half_width..i + half_width];
    let post = posterior_marginals(window, h, DEFAULT_FLOOR)?;
    Ok(post[half_width][0])
}

/// Filtering probability `Phi_i = P(theta_i = 0 | X_1..X_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub phi: f64,
}

impl FilterState {
    /// The state before any observation: `Phi = pi_0`.
    pub fn initial(h: &HmmParams) -> Self {
        FilterState {
            phi: h.stationary().get(0),
        }
    }
}

/// One step of `Phi' = A / (A + r (1 - A))`, `A = (1-p) Phi + q (1 - Phi)`,
/// `r = f_1(x) / f_0(x)` with `1/0 = inf` and `0/0 = 0`.
pub fn filter_step(state: FilterState, x: f64, h: &HmmParams) -> FilterState {
    let q = h.transition();
    let (p01, p10) = (q.get(0, 1), q.get(1, 0));
    let a = (1.0 - p01) * state.phi + p10 * (1.0 - state.phi);
    let f0 = h.emission(0).density_at(x);
    let f1 = h.emission(1).density_at(x);
    let phi = if f0 == 0.0 {
        if f1 > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        let r = f1 / f0;
        let denom = a + r * (1.0 - a);
        if denom > 0.0 {
            a / denom
        } else {
            0.0
        }
    };
    FilterState {
        phi: phi.clamp(0.0, 1.0),
    }
}

/// Filter over the whole sequence from `Phi = pi_0`.
pub fn filter_path(x: &[f64], h: &HmmParams) -> Vec<f64> {
    let mut state = FilterState::initial(h);
    x.iter()
        .map(|&v| {
            state = filter_step(state, v, h);
            state.phi
        })
        .collect()
}
