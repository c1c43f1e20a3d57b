#![allow(dead_code)]

use nalgebra::DMatrix;
use nphmm::spectral::{Feature, FeatureSet};
use nphmm::{eval_kl, BandwidthLevel, EmissionModel, HmmParams, Kernel, TransitionMatrix};
use rand::Rng as _;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(mean: f64, sd: f64) -> EmissionModel {
    EmissionModel::Gaussian { mean, sd }
}

/// Two-state Gaussian model with random parameters.
pub fn random_two_state(rng: &mut TestRng) -> HmmParams {
    let p = rng.random_range(0.05..0.95);
    let q = rng.random_range(0.05..0.95);
    let f0 = gauss(rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0));
    let f1 = gauss(rng.random_range(0.0..3.0), rng.random_range(0.5..2.0));
    HmmParams::two_state(p, q, f0, f1).unwrap()
}

/// Random J-state model with Gaussian emissions and a dense transition matrix.
pub fn random_model(rng: &mut TestRng, j: usize) -> HmmParams {
    let rows: Vec<Vec<f64>> = (0..j)
        .map(|_| {
            let w: Vec<f64> = (0..j).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let q = TransitionMatrix::new(rows).unwrap();
    let emissions = (0..j)
        .map(|k| gauss(k as f64 + rng.random_range(-0.5..0.5), rng.random_range(0.5..1.5)))
        .collect();
    HmmParams::new(q, emissions, nphmm::Measure::Continuous).unwrap()
}

pub fn random_observations(rng: &mut TestRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..4.0)).collect()
}

/// Posterior marginals `P(theta_i = s | X)` by summing over every state path.
pub fn enumerate_posterior(h: &HmmParams, x: &[f64]) -> Vec<Vec<f64>> {
    let j = h.n_states();
    let n = x.len();
    let lik: Vec<Vec<f64>> = x
        .iter()
        .map(|&v| (0..j).map(|s| h.emission(s).density_at(v).max(1e-12)).collect())
        .collect();
    let mut marg = vec![vec![0.0; j]; n];
    let mut total = 0.0;
    let mut path = vec![0usize; n];
    let count = j.pow(n as u32);
    for code in 0..count {
        let mut c = code;
        for s in path.iter_mut() {
            *s = c % j;
            c /= j;
        }
        let mut w = h.stationary().get(path[0]) * lik[0][path[0]];
        for i in 1..n {
            w *= h.transition().get(path[i - 1], path[i]) * lik[i][path[i]];
        }
        total += w;
        for (i, &s) in path.iter().enumerate() {
            marg[i][s] += w;
        }
    }
    for row in &mut marg {
        row.iter_mut().for_each(|v| *v /= total);
    }
    marg
}

/// Naive log-likelihood by summing over every state path (small N only).
pub fn enumerate_log_likelihood(h: &HmmParams, x: &[f64]) -> f64 {
    let j = h.n_states();
    let n = x.len();
    let mut total = 0.0;
    for code in 0..j.pow(n as u32) {
        let mut c = code;
        let path: Vec<usize> = (0..n)
            .map(|_| {
                let s = c % j;
                c /= j;
                s
            })
            .collect();
        let mut w = h.stationary().get(path[0]) * h.emission(path[0]).density_at(x[0]).max(1e-12);
        for i in 1..n {
            w *= h.transition().get(path[i - 1], path[i]) * h.emission(path[i]).density_at(x[i]).max(1e-12);
        }
        total += w;
    }
    total.ln()
}

/// Composite Simpson rule with `2 * m` panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Brute-force check of both inequalities defining `K_hat`.
pub fn brute_force_k_hat(lv: &[f64], t: f64) -> usize {
    let mut sorted = lv.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = |k: usize| sorted[..k].iter().sum::<f64>() / k as f64;
    (0..=sorted.len())
        .find(|&k| (k == 0 || mean(k) <= t) && (k == sorted.len() || mean(k + 1) > t))
        .expect("some K satisfies the definition")
}

pub fn elapsed_ok(start: std::time::Instant, limit_secs: f64) -> bool {
    start.elapsed().as_secs_f64() < limit_secs
}

/// `E[h(X) | theta = j]` and `K_L[f_j](x)` by Simpson integration.
pub fn oracle_o(fs: &FeatureSet, f: &EmissionModel) -> Vec<f64> {
    fs.features()
        .iter()
        .map(|h| match *h {
            Feature::Constant { value } => value,
            Feature::Interval { lo, hi } => {
                let a = lo.unwrap_or(-30.0).max(-30.0);
                let b = hi.unwrap_or(30.0).min(30.0);
                if b > a {
                    simpson(|y| f.density_at(y), a, b, 20_000)
                } else {
                    0.0
                }
            }
            Feature::Point { .. } => 0.0,
        })
        .collect()
}

pub fn oracle_d(k: &Kernel, lev: BandwidthLevel, f: &EmissionModel, x: f64) -> f64 {
    let h = lev.bandwidth();
    simpson(|y| eval_kl(k, lev, x, y) * f.density_at(y), x - h, x + h, 4000)
}

/// Moments as explicit sums over the hidden states of a triple.
pub fn oracle_moments(
    h: &HmmParams,
    fs: &FeatureSet,
    k: &Kernel,
    lev: BandwidthLevel,
    x: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let j = h.n_states();
    let o: Vec<Vec<f64>> = h.emissions().iter().map(|f| oracle_o(fs, f)).collect();
    let d: Vec<f64> = h.emissions().iter().map(|f| oracle_d(k, lev, f, x)).collect();
    let q = h.transition();
    let l0 = fs.len();
    let mut p = DMatrix::zeros(l0, l0);
    let mut m = DMatrix::zeros(l0, l0);
    for a in 0..j {
        for b in 0..j {
            for c in 0..j {
                let w = h.stationary().get(a) * q.get(a, b) * q.get(b, c);
                for l in 0..l0 {
                    for r in 0..l0 {
                        p[(l, r)] += w * o[a][l] * o[c][r];
                        m[(l, r)] += w * o[a][l] * d[b] * o[c][r];
                    }
                }
            }
        }
    }
    (p, m)
}

