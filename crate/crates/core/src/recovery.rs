//! Transition-matrix recovery and label alignment for two-state models.
//!
//! With the emission densities held fixed, `(p, q) = (Q_01, Q_10)` is fitted by
//! maximising the forward-algorithm log-likelihood: a coarse grid search,
//! then a Nelder–Mead polish from the best grid point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{stationary_distribution, EmissionModel, HmmParams, Measure, StationaryDist, TransitionMatrix};
use crate::spectral::SpectralFit;

/// Bounds of the search box for `p` and `q`.
pub const PARAM_LO: f64 = 1e-4;
pub const PARAM_HI: f64 = 1.0 - 1e-4;
/// Points per axis of the coarse grid.
pub const GRID_SIZE: usize = 32;
/// Density floor used when evaluating likelihoods.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Below this per-observation curvature the likelihood counts as flat.
pub const FLAT_TOL: f64 = 1e-10;
/// Deciding gaps below this make the alignment ambiguous.
pub const ALIGN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredParams {
    pub q_hat: TransitionMatrix,
    pub pi_hat: StationaryDist,
    /// New label `k` is estimator label `permutation[k]`.
    pub permutation: Vec<usize>,
    pub loglik: f64,
}

impl RecoveredParams {
    /// Relabel: new state `k` is the current state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        RecoveredParams {
            q_hat: self.q_hat.permuted(perm),
            pi_hat: self.pi_hat.permuted(perm),
            permutation: perm.iter().map(|&k| self.permutation[k]).collect(),
            loglik: self.loglik,
        }
    }

    /// Full parameter set with the given emissions (already in this labelling).
    pub fn to_hmm_params(&self, emissions: Vec<EmissionModel>) -> Result<HmmParams> {
        let measure = emissions.first().map_or(Measure::Continuous, EmissionModel::measure);
        HmmParams::from_parts(self.q_hat.clone(), self.pi_hat.clone(), emissions, measure)
    }
}

/// Floored emission likelihoods `[f_0(x_i), f_1(x_i)]`.
pub fn likelihood_table(x: &[f64], emissions: &[EmissionModel]) -> Vec<[f64; 2]> {
    x.iter()
        .map(|&v| {
            [
                emissions[0].density_at(v).max(DENSITY_FLOOR),
                emissions[1].density_at(v).max(DENSITY_FLOOR),
            ]
        })
        .collect()
}

/// Two-state log-likelihood with the chain started from its stationary law.
pub fn two_state_log_likelihood(lik: &[[f64; 2]], p: f64, q: f64) -> f64 {
    let pi0 = q / (p + q);
    let mut a = [pi0, 1.0 - pi0];
    let mut ll = 0.0;
    // Scaling constants are multiplied up and logged in batches.
    let mut acc = 1.0f64;
    for (i, l) in lik.iter().enumerate() {
        if i > 0 {
            a = [a[0] * (1.0 - p) + a[1] * q, a[0] * p + a[1] * (1.0 - q)];
        }
        let b0 = a[0] * l[0];
        let b1 = a[1] * l[1];
        let c = b0 + b1;
        acc *= c;
        if !(1e-250..=1e250).contains(&acc) {
            ll += acc.ln();
            acc = 1.0;
        }
        let inv = 1.0 / c;
        a = [b0 * inv, b1 * inv];
    }
    ll + acc.ln()
}

/// Log-likelihood of `x` under `h` for any number of states.
pub fn log_likelihood(h: &HmmParams, x: &[f64]) -> f64 {
    let j = h.n_states();
    let q = h.transition();
    let mut a: Vec<f64> = h.stationary().probs().to_vec();
    let mut next = vec![0.0; j];
    let mut ll = 0.0;
    for (i, &v) in x.iter().enumerate() {
        if i > 0 {
            for (t, n) in next.iter_mut().enumerate() {
                *n = (0..j).map(|s| a[s] * q.get(s, t)).sum();
            }
            a.copy_from_slice(&next);
        }
        for (s, av) in a.iter_mut().enumerate() {
            *av *= h.emission(s).density_at(v).max(DENSITY_FLOOR);
        }
        let c: f64 = a.iter().sum();
        ll += c.ln();
        a.iter_mut().for_each(|v| *v /= c);
    }
    ll
}

fn grid_point(k: usize) -> f64 {
    PARAM_LO + (PARAM_HI - PARAM_LO) * k as f64 / (GRID_SIZE - 1) as f64
}

fn clamp_param(v: f64) -> f64 {
    v.clamp(PARAM_LO, PARAM_HI)
}

/// Second difference along one axis at grid index `k`, stencil kept inside the grid.
fn second_difference(vals: impl Fn(usize) -> f64, k: usize) -> f64 {
    let c = k.clamp(1, GRID_SIZE - 2);
    let step = grid_point(1) - grid_point(0);
    (vals(c + 1) - 2.0 * vals(c) + vals(c - 1)) / (step * step)
}

/// Nelder–Mead maximisation in the box `[PARAM_LO, PARAM_HI]^2`.
fn nelder_mead<F: Fn(f64, f64) -> f64>(f: F, start: [f64; 2], step: f64) -> ([f64; 2], f64) {
    let eval = |x: [f64; 2]| -f(clamp_param(x[0]), clamp_param(x[1]));
    let mut simplex = [
        start,
        [clamp_param(start[0] + step), start[1]],
        [start[0], clamp_param(start[1] + step)],
    ];
    if simplex[1] == start {
        simplex[1][0] = clamp_param(start[0] - step);
    }
    if simplex[2] == start {
        simplex[2][1] = clamp_param(start[1] - step);
    }
    let mut vals = simplex.map(eval);
    for _ in 0..400 {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.map(|i| simplex[i]);
        vals = idx.map(|i| vals[i]);
        let size = (simplex[1][0] - simplex[0][0])
            .abs()
            .max((simplex[1][1] - simplex[0][1]).abs())
            .max((simplex[2][0] - simplex[0][0]).abs())
            .max((simplex[2][1] - simplex[0][1]).abs());
        if size < 1e-10 || (vals[2] - vals[0]).abs() <= 1e-14 * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |t: f64| {
            [
                clamp_param(centroid[0] + t * (simplex[2][0] - centroid[0])),
                clamp_param(centroid[1] + t * (simplex[2][1] - centroid[1])),
            ]
        };
        let reflected = along(-1.0);
        let fr = eval(reflected);
        if fr < vals[0] {
            let expanded = along(-2.0);
            let fe = eval(expanded);
            if fe < fr {
                simplex[2] = expanded;
                vals[2] = fe;
            } else {
                simplex[2] = reflected;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            simplex[2] = reflected;
            vals[2] = fr;
        } else {
            let contracted = if fr < vals[2] { along(-0.5) } else { along(0.5) };
            let fc = eval(contracted);
            if fc < vals[2].min(fr) {
                simplex[2] = contracted;
                vals[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = [
                        clamp_param(0.5 * (simplex[0][0] + simplex[k][0])),
                        clamp_param(0.5 * (simplex[0][1] + simplex[k][1])),
                    ];
                    vals[k] = eval(simplex[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let x = [clamp_param(simplex[best][0]), clamp_param(simplex[best][1])];
    (x, -vals[best])
}

/// Profile maximum-likelihood estimate of the two-state transition matrix.
pub fn estimate_transition(x: &[f64], emissions: &[EmissionModel]) -> Result<RecoveredParams> {
    if emissions.len() != 2 {
        return Err(Error::InvalidParams(
            "transition recovery is implemented for two states".into(),
        ));
    }
    if x.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let lik = likelihood_table(x, emissions);
    let ll = |p: f64, q: f64| two_state_log_likelihood(&lik, p, q);

    let table: Vec<f64> = {
        use rayon::prelude::*;
        (0..GRID_SIZE * GRID_SIZE)
            .into_par_iter()
            .map(|k| ll(grid_point(k / GRID_SIZE), grid_point(k % GRID_SIZE)))
            .collect()
    };
    let mut best = 0;
    for (k, v) in table.iter().enumerate() {
        if *v > table[best] {
            best = k;
        }
    }
    let (bi, bk) = (best / GRID_SIZE, best % GRID_SIZE);
    let d2p = second_difference(|i| table[i * GRID_SIZE + bk], bi);
    let d2q = second_difference(|k| table[bi * GRID_SIZE + k], bk);
    let curvature = d2p.abs().min(d2q.abs()) / x.len() as f64;
    if !(curvature >= FLAT_TOL) {
        return Err(Error::FlatLikelihood { curvature });
    }

    let step = 0.5 * (grid_point(1) - grid_point(0));
    let (pq, loglik) = nelder_mead(ll, [grid_point(bi), grid_point(bk)], step);
    let (pq, loglik) = if loglik >= table[best] {
        (pq, loglik)
    } else {
        ([grid_point(bi), grid_point(bk)], table[best])
    };
    let q_hat = TransitionMatrix::two_state(pq[0], pq[1])?;
    let pi_hat = stationary_distribution(&q_hat)?;
    Ok(RecoveredParams {
        q_hat,
        pi_hat,
        permutation: vec![0, 1],
        loglik,
    })
}

/// Right end of the tail used by [`AlignmentRule::ByTailRatio`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPoint {
    Finite(f64),
    PosInfinity,
}

/// How to decide which estimated state is the null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AlignmentRule {
    /// The null is the state with the larger stationary mass.
    ByStationaryMass,
    /// `f_1 / f_0 -> inf` as `x` increases to `x_star`: the alternative is
    /// the state with the larger estimated density at the largest early
    /// observation below `x_star`.
    ByTailRatio { x_star: TailPoint },
}

/// `M_N = max_{i <= ceil(ln N)} X_i 1{X_i <= x*}`.
pub fn tail_probe(x: &[f64], x_star: TailPoint) -> f64 {
    let n = x.len().max(1) as f64;
    let count = (n.ln().ceil() as usize).max(1).min(x.len());
    x[..count]
        .iter()
        .map(|&v| match x_star {
            TailPoint::Finite(s) if v > s => 0.0,
            _ => v,
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Permutation `perm` with `perm[0]` the estimated null state.
pub fn align_with<D: Fn(usize, f64) -> f64>(
    density: D,
    pi_hat: &StationaryDist,
    rule: AlignmentRule,
    x: &[f64],
) -> Result<Vec<usize>> {
    if pi_hat.len() != 2 {
        return Err(Error::InvalidParams("alignment is implemented for two states".into()));
    }
    let null = match rule {
        AlignmentRule::ByStationaryMass => {
            let gap = pi_hat.get(1) - pi_hat.get(0);
            if gap.abs() < ALIGN_TOL {
                return Err(Error::AmbiguousAlignment { gap: gap.abs() });
            }
            usize::from(gap > 0.0)
        }
        AlignmentRule::ByTailRatio { x_star } => {
            if x.is_empty() {
                return Err(Error::TooFewObservations { needed: 1, got: 0 });
            }
            let m = tail_probe(x, x_star);
            let gap = density(0, m) - density(1, m);
            if gap.abs() < ALIGN_TOL {
                return Err(Error::AmbiguousAlignment { gap: gap.abs() });
            }
            usize::from(gap > 0.0)
        }
    };
    Ok(vec![null, 1 - null])
}

/// Label alignment for a continuous spectral fit.
pub fn align_labels(
    fit: &SpectralFit,
    params: &RecoveredParams,
    rule: AlignmentRule,
    x: &[f64],
) -> Result<Vec<usize>> {
    align_with(|j, v| fit.density(j).value_at(v), &params.pi_hat, rule, x)
}
