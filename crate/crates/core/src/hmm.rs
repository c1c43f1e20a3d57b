//! Hidden Markov model parameters, emission densities and seeded simulation.
//!
//! The hidden chain `theta` is a stationary Markov chain on `{0, .., J-1}` with
//! transition matrix `Q` and invariant law `pi`; given `theta`, the
//! observations are independent with `X_n ~ f_{theta_n}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Beta, Cauchy, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation;
use crate::rng::{rng_from_seed, Rng};

const ROW_SUM_TOL: f64 = 1e-12;
const PI_SUM_TOL: f64 = 1e-12;

/// Dominating measure shared by all emission densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    /// Lebesgue measure on the real line.
    Continuous,
    /// Counting measure on the integers.
    Discrete,
}

/// Row-stochastic `J x J` matrix, rows indexed by the source state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidParams(format!(
                "transition matrix needs at least 2 states, got {n}"
            )));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParams(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidParams(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParams(format!("row {i} sums to {sum}")));
            }
            entries.extend_from_slice(row);
        }
        Ok(TransitionMatrix { n, entries })
    }

    /// Two-state chain with `p = Q[0][1]` and `q = Q[1][0]`.
    pub fn two_state(p: f64, q: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - p, p], vec![q, 1.0 - q]])
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        TransitionMatrix { n, entries }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.entries[from * self.n..(from + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Smallest entry, written `delta` in the mixing bounds.
    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.min_entry() > 0.0
    }

    pub fn is_full_rank(&self) -> bool {
        let sv = self.to_matrix().singular_values();
        sv.iter().copied().fold(f64::INFINITY, f64::min) > 1e-12
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    /// `Q[0][1]` of a two-state chain.
    pub fn p(&self) -> f64 {
        self.get(0, 1)
    }

    /// `Q[1][0]` of a two-state chain.
    pub fn q(&self) -> f64 {
        self.get(1, 0)
    }

    /// Relabel states: entry `(i, j)` of the result is `Q[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        TransitionMatrix { n, entries }
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        TransitionMatrix::new(rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(q: TransitionMatrix) -> Self {
        q.rows()
    }
}

/// Probability vector over the hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StationaryDist {
    probs: Vec<f64>,
}

impl StationaryDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParams(
                "state distribution has a negative or non-finite entry".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PI_SUM_TOL {
            return Err(Error::InvalidParams(format!(
                "state distribution sums to {sum}"
            )));
        }
        Ok(StationaryDist { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, j: usize) -> f64 {
        self.probs[j]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        StationaryDist {
            probs: perm.iter().map(|&j| self.probs[j]).collect(),
        }
    }

    /// `max_j |(pi Q)_j - pi_j|`.
    pub fn stationarity_residual(&self, q: &TransitionMatrix) -> f64 {
        let n = q.n_states();
        (0..n)
            .map(|j| {
                let flow: f64 = (0..n).map(|i| self.probs[i] * q.get(i, j)).sum();
                (flow - self.probs[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for StationaryDist {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        StationaryDist::new(v)
    }
}

impl From<StationaryDist> for Vec<f64> {
    fn from(d: StationaryDist) -> Self {
        d.probs
    }
}

/// Invariant distribution of `q`, from `(Q^T - I) pi = 0` with the last
/// equation replaced by `sum(pi) = 1`.
pub fn stationary_distribution(q: &TransitionMatrix) -> Result<StationaryDist> {
    let n = q.n_states();
    let mut a = q.to_matrix().transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let sv = a.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin / smax < 1e-12 {
        return Err(Error::NonIrreducible);
    }
    let mut rhs = nalgebra::DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = a.lu().solve(&rhs).ok_or(Error::NonIrreducible)?;
    // Clip round-off negatives and renormalise so the result is a probability vector.
    let mut probs: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    StationaryDist::new(probs)
}

/// Uniform-grid density estimate with linear interpolation between nodes.
///
/// Values may be negative: an estimated density is not itself a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub lo: f64,
    pub step: f64,
    pub values: Vec<f64>,
    /// Truncation level; all values lie in `[-cap, cap]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

impl GridDensity {
    pub fn new(lo: f64, step: f64, values: Vec<f64>, cap: Option<f64>) -> Result<Self> {
        if !(step > 0.0) || !lo.is_finite() || values.is_empty() {
            return Err(Error::InvalidParams(
                "grid density needs a positive step and at least one node".into(),
            ));
        }
        let values = match cap {
            Some(c) => values.into_iter().map(|v| v.clamp(-c, c)).collect(),
            None => values,
        };
        Ok(GridDensity {
            lo,
            step,
            values,
            cap,
        })
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.step * (self.values.len() - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| self.lo + self.step * k as f64)
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.values.len();
        let pos = (x - self.lo) / self.step;
        if !(pos >= 0.0) || pos > (n - 1) as f64 {
            return 0.0;
        }
        let k = (pos.floor() as usize).min(n - 1);
        if k == n - 1 {
            return self.values[k];
        }
        let w = pos - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }
}

/// Emission density of one hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmissionModel {
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Cauchy {
        location: f64,
        scale: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Probability mass function on the integers.
    DiscretePmf {
        #[serde(with = "int_keyed")]
        support: BTreeMap<i64, f64>,
    },
    GridDensity(GridDensity),
    /// `r phi(r x) + A psi(M x - m + 1/2)`: a centred Gaussian of sd `1/r`
    /// with a zero-mass bump added on `((m-1)/M, m/M)`.
    PerturbedGaussian {
        scale: f64,
        amplitude: f64,
        bumps: u32,
        index: u32,
    },
}

impl EmissionModel {
    pub fn measure(&self) -> Measure {
        match self {
            EmissionModel::DiscretePmf { .. } => Measure::Discrete,
            _ => Measure::Continuous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        match self {
            EmissionModel::Gaussian { mean, sd } => {
                if !mean.is_finite() || !(*sd > 0.0) || !sd.is_finite() {
                    return bad("gaussian needs finite mean and positive sd");
                }
            }
            EmissionModel::Cauchy { location, scale } => {
                if !location.is_finite() || !(*scale > 0.0) || !scale.is_finite() {
                    return bad("cauchy needs finite location and positive scale");
                }
            }
            EmissionModel::Beta { alpha, beta } => {
                if !(*alpha > 0.0 && *beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
                    return bad("beta needs positive shape parameters");
                }
            }
            EmissionModel::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || !(hi > lo) {
                    return bad("uniform needs lo < hi");
                }
            }
            EmissionModel::DiscretePmf { support } => {
                if support.is_empty() || support.values().any(|p| !p.is_finite() || *p < 0.0) {
                    return bad("pmf needs nonnegative masses on a nonempty support");
                }
                let sum: f64 = support.values().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParams(format!("pmf sums to {sum}")));
                }
            }
            EmissionModel::GridDensity(g) => {
                if !(g.step > 0.0) || g.values.is_empty() {
                    return bad("grid density needs a positive step and nodes");
                }
            }
            EmissionModel::PerturbedGaussian {
                scale,
                amplitude,
                bumps,
                index,
            } => {
                if !(*scale > 0.0) || !(*amplitude >= 0.0) || *bumps == 0 {
                    return bad("perturbed gaussian needs scale > 0, amplitude >= 0, bumps >= 1");
                }
                if *index < 1 || index > bumps {
                    return bad("perturbed gaussian needs 1 <= index <= bumps");
                }
            }
        }
        Ok(())
    }

    /// Density (or mass, for the discrete variant) at `x`.
    pub fn density_at(&self, x: f64) -> f64 {
        match *self {
            EmissionModel::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
            }
            EmissionModel::Cauchy { location, scale } => {
                let z = (x - location) / scale;
                1.0 / (PI * scale * (1.0 + z * z))
            }
            EmissionModel::Beta { alpha, beta } => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let ln_norm = statrs::function::beta::ln_beta(alpha, beta);
                (x.powf(alpha - 1.0) * (1.0 - x).powf(beta - 1.0)) / ln_norm.exp()
            }
            EmissionModel::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            EmissionModel::DiscretePmf { ref support } => {
                if x.fract() != 0.0 || x.abs() > i64::MAX as f64 {
                    return 0.0;
                }
                support.get(&(x as i64)).copied().unwrap_or(0.0)
            }
            EmissionModel::GridDensity(ref g) => g.value_at(x),
            EmissionModel::PerturbedGaussian {
                scale,
                amplitude,
                bumps,
                index,
            } => perturbation::perturbed_gaussian(x, scale, amplitude, bumps, index),
        }
    }

    /// Points where the density is not smooth (support edges, grid nodes).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            EmissionModel::Beta { .. } => vec![0.0, 1.0],
            EmissionModel::Uniform { lo, hi } => vec![*lo, *hi],
            EmissionModel::GridDensity(g) => g.nodes().collect(),
            EmissionModel::PerturbedGaussian { bumps, index, .. } => {
                let (a, b) = perturbation::bump_support(*bumps, *index);
                let w = b - a;
                vec![a, a + 0.25 * w, a + 0.5 * w, a + 0.75 * w, b]
            }
            _ => Vec::new(),
        }
    }

    /// Probability of `[lo, hi)`; either bound may be infinite.
    ///
    /// Closed form where one exists, quadrature otherwise.
    pub fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(hi > lo) {
            return Ok(0.0);
        }
        let gauss_cdf = |z: f64| 0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2);
        Ok(match *self {
            EmissionModel::Gaussian { mean, sd } => {
                gauss_cdf((hi - mean) / sd) - gauss_cdf((lo - mean) / sd)
            }
            EmissionModel::Cauchy { location, scale } => {
                (((hi - location) / scale).atan() - ((lo - location) / scale).atan()) / PI
            }
            EmissionModel::Uniform { lo: a, hi: b } => (hi.min(b) - lo.max(a)).max(0.0) / (b - a),
            EmissionModel::Beta { alpha, beta } => {
                let cdf = |x: f64| {
                    if x <= 0.0 {
                        0.0
                    } else if x >= 1.0 {
                        1.0
                    } else {
                        statrs::function::beta::beta_reg(alpha, beta, x)
                    }
                };
                cdf(hi) - cdf(lo)
            }
            EmissionModel::DiscretePmf { ref support } => support
                .iter()
                .filter(|(&k, _)| (k as f64) >= lo && (k as f64) < hi)
                .map(|(_, p)| p)
                .sum(),
            EmissionModel::GridDensity(ref g) => {
                let (a, b) = (lo.max(g.lo), hi.min(g.hi()));
                if a >= b {
                    0.0
                } else {
                    let nodes: Vec<f64> = g.nodes().collect();
                    crate::quadrature::integrate_with_breaks(|x| g.value_at(x), a, b, &nodes, 1e-12)?
                }
            }
            EmissionModel::PerturbedGaussian {
                scale,
                amplitude,
                bumps,
                index,
            } => {
                let base = gauss_cdf(hi * scale) - gauss_cdf(lo * scale);
                let (a, b) = perturbation::bump_support(bumps, index);
                let (a, b) = (lo.max(a), hi.min(b));
                let bump = if a < b && amplitude != 0.0 {
                    let m = bumps as f64;
                    let c = index as f64 - 0.5;
                    amplitude
                        * crate::quadrature::integrate(|x| perturbation::psi(m * x - c), a, b, 1e-13)?
                } else {
                    0.0
                };
                base + bump
            }
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            EmissionModel::Gaussian { mean, sd } => {
                Normal::new(*mean, *sd).expect("validated gaussian").sample(rng)
            }
            EmissionModel::Cauchy { location, scale } => Cauchy::new(*location, *scale)
                .expect("validated cauchy")
                .sample(rng),
            EmissionModel::Beta { alpha, beta } => {
                Beta::new(*alpha, *beta).expect("validated beta").sample(rng)
            }
            EmissionModel::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            EmissionModel::DiscretePmf { support } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut last = 0;
                for (&k, &p) in support {
                    acc += p;
                    last = k;
                    if u < acc {
                        return k as f64;
                    }
                }
                last as f64
            }
            EmissionModel::GridDensity(g) => {
                let top = g.values.iter().copied().fold(0.0, f64::max);
                if top <= 0.0 {
                    return rng.random_range(g.lo..=g.hi());
                }
                loop {
                    let x = rng.random_range(g.lo..=g.hi());
                    if rng.random::<f64>() * top < g.value_at(x).max(0.0) {
                        return x;
                    }
                }
            }
            EmissionModel::PerturbedGaussian {
                scale,
                amplitude,
                bumps,
                index,
            } => {
                // Rejection from the envelope r phi(r x) + A 1{x in bump support}.
                let (a, b) = perturbation::bump_support(*bumps, *index);
                let extra = amplitude * (b - a);
                let base = Normal::new(0.0, 1.0 / scale).expect("validated scale");
                loop {
                    let x = if rng.random::<f64>() * (1.0 + extra) < 1.0 {
                        base.sample(rng)
                    } else {
                        rng.random_range(a..b)
                    };
                    let envelope = scale * perturbation::standard_normal_pdf(scale * x)
                        + if x > a && x < b { *amplitude } else { 0.0 };
                    let target = self.density_at(x).max(0.0);
                    if rng.random::<f64>() * envelope < target {
                        return x;
                    }
                }
            }
        }
    }
}

/// JSON object keys are strings; integer support points are written as such.
mod int_keyed {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<i64, f64>, s: S) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<String, f64>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i64, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<i64>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("support point {k:?} is not an integer")))
            })
            .collect()
    }
}

/// Full parameter set `(Q, pi, f_0, .., f_{J-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct HmmParams {
    q: TransitionMatrix,
    pi: StationaryDist,
    emissions: Vec<EmissionModel>,
    measure: Measure,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "Q")]
    q: TransitionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi: Option<StationaryDist>,
    emissions: Vec<EmissionModel>,
    #[serde(default)]
    measure: Option<Measure>,
}

impl TryFrom<RawParams> for HmmParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        let measure = raw
            .measure
            .or_else(|| raw.emissions.first().map(EmissionModel::measure))
            .unwrap_or(Measure::Continuous);
        match raw.pi {
            Some(pi) => HmmParams::from_parts(raw.q, pi, raw.emissions, measure),
            None => HmmParams::new(raw.q, raw.emissions, measure),
        }
    }
}

impl From<HmmParams> for RawParams {
    fn from(h: HmmParams) -> Self {
        RawParams {
            q: h.q,
            pi: Some(h.pi),
            emissions: h.emissions,
            measure: Some(h.measure),
        }
    }
}

impl HmmParams {
    /// Parameters with `pi` computed as the invariant law of `q`.
    pub fn new(q: TransitionMatrix, emissions: Vec<EmissionModel>, measure: Measure) -> Result<Self> {
        let pi = stationary_distribution(&q)?;
        Self::from_parts(q, pi, emissions, measure)
    }

    pub fn from_parts(
        q: TransitionMatrix,
        pi: StationaryDist,
        emissions: Vec<EmissionModel>,
        measure: Measure,
    ) -> Result<Self> {
        let j = q.n_states();
        if pi.len() != j || emissions.len() != j {
            return Err(Error::InvalidParams(format!(
                "{j} states but pi has {} entries and there are {} emissions",
                pi.len(),
                emissions.len()
            )));
        }
        let resid = pi.stationarity_residual(&q);
        if resid > 1e-8 {
            return Err(Error::InvalidParams(format!(
                "pi is not stationary for Q (residual {resid:e})"
            )));
        }
        for e in &emissions {
            e.validate()?;
            if e.measure() != measure && !matches!(e, EmissionModel::GridDensity(_)) {
                return Err(Error::InvalidParams(
                    "emission densities must share the declared measure".into(),
                ));
            }
        }
        Ok(HmmParams {
            q,
            pi,
            emissions,
            measure,
        })
    }

    /// Two-state model with `Q = [[1-p, p], [q, 1-q]]`.
    pub fn two_state(p: f64, q: f64, f0: EmissionModel, f1: EmissionModel) -> Result<Self> {
        let measure = f0.measure();
        Self::new(TransitionMatrix::two_state(p, q)?, vec![f0, f1], measure)
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.q
    }

    pub fn stationary(&self) -> &StationaryDist {
        &self.pi
    }

    pub fn emissions(&self) -> &[EmissionModel] {
        &self.emissions
    }

    pub fn emission(&self, j: usize) -> &EmissionModel {
        &self.emissions[j]
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn n_states(&self) -> usize {
        self.q.n_states()
    }

    /// Relabel states so that new state `i` is old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        HmmParams {
            q: self.q.permuted(perm),
            pi: self.pi.permuted(perm),
            emissions: perm.iter().map(|&j| self.emissions[j].clone()).collect(),
            measure: self.measure,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn density_at(f: &EmissionModel, x: f64) -> f64 {
    f.density_at(x)
}

/// Marginal density `sum_j pi_j f_j(x)` of a single observation.
pub fn marginal_density(h: &HmmParams, x: f64) -> f64 {
    h.pi
        .probs()
        .iter()
        .zip(&h.emissions)
        .map(|(p, f)| p * f.density_at(x))
        .sum()
}

/// Hidden states and observations of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub states: Vec<usize>,
    pub observations: Vec<f64>,
    pub seed: u64,
}

impl SampledPath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn draw_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.len() - 1
}

/// Draw `(theta, X)` of length `n` from `h`. Pure in `(h, n, seed)`.
pub fn simulate(h: &HmmParams, n: usize, seed: u64) -> SampledPath {
    let mut rng = rng_from_seed(seed);
    let mut states = Vec::with_capacity(n);
    let mut observations = Vec::with_capacity(n);
    let mut state = 0;
    for i in 0..n {
        state = if i == 0 {
            draw_categorical(h.pi.probs(), &mut rng)
        } else {
            draw_categorical(h.q.row(state), &mut rng)
        };
        states.push(state);
        observations.push(h.emissions[state].sample(&mut rng));
    }
    SampledPath {
        states,
        observations,
        seed,
    }
}
