//! Spectral estimation of emission densities from consecutive observation
//! triples.
//!
//! With features `h_1..h_L0`, the matrices
//!
//! ```text
//! P   = E[h(X_1) h(X_3)^T]
//! M^x = E[h(X_1) K_L(x, X_2) h(X_3)^T]
//! ```
//!
//! factor as `P = O diag(pi) Q^2 O^T` and `M^x = O diag(pi) Q D^x Q O^T`
//! with `D^x = diag(K_L[f_j](x))`. After projecting on the top right singular
//! vectors `V` of `P`, every `B^x = (V^T P V)^{-1} V^T M^x V` is diagonalised
//! by one matrix `R`, and the diagonal of `R^{-1} B^x R` reads off the
//! smoothed densities. The estimator replaces `P`, `M^x` by empirical averages
//! and picks `R` where the eigenvalues of `B` are best separated.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{EmissionModel, GridDensity, HmmParams, Measure};
use crate::kernels::{build_kernel, choose_level_scaled, eval_kl, smooth, BandwidthLevel, Kernel};
use crate::linalg;

/// Smallest admissible `sigma_J(P_hat)`.
pub const RANK_TOL: f64 = 1e-10;
/// Largest admissible condition number of `V^T P_hat V`.
pub const COND_LIMIT: f64 = 1e12;
/// Smallest admissible eigen-separation at the chosen diagonaliser.
pub const SEP_TOL: f64 = 1e-10;
/// Minimum number of observations accepted by the estimators.
pub const MIN_OBSERVATIONS: usize = 100;

/// One bounded feature function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Feature {
    Constant { value: f64 },
    /// Indicator of `[lo, hi)`; a missing bound is infinite.
    Interval { lo: Option<f64>, hi: Option<f64> },
    /// Indicator of a single integer.
    Point { value: i64 },
}

impl Feature {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Feature::Constant { value } => value,
            Feature::Interval { lo, hi } => {
                let above = lo.is_none_or(|l| x >= l);
                let below = hi.is_none_or(|h| x < h);
                if above && below {
                    1.0
                } else {
                    0.0
                }
            }
            Feature::Point { value } => {
                if x == value as f64 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            Feature::Constant { value } => value.abs(),
            _ => 1.0,
        }
    }

    /// `E[h(X)]` for `X ~ f`.
    pub fn expectation(&self, f: &EmissionModel) -> Result<f64> {
        match *self {
            Feature::Constant { value } => Ok(value),
            Feature::Interval { lo, hi } => f.mass(
                lo.unwrap_or(f64::NEG_INFINITY),
                hi.unwrap_or(f64::INFINITY),
            ),
            Feature::Point { value } => Ok(match f.measure() {
                Measure::Discrete => f.density_at(value as f64),
                Measure::Continuous => 0.0,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    features: Vec<Feature>,
}

impl FeatureSet {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidParams("feature set is empty".into()));
        }
        Ok(FeatureSet { features })
    }

    /// Indicators of the cells `(-inf, b_1), [b_1, b_2), ..., [b_k, inf)`.
    pub fn partition(breaks: &[f64]) -> Result<Self> {
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParams(
                "partition breakpoints must be finite and strictly increasing".into(),
            ));
        }
        let mut features = Vec::with_capacity(breaks.len() + 1);
        let mut prev = None;
        for &b in breaks {
            features.push(Feature::Interval { lo: prev, hi: Some(b) });
            prev = Some(b);
        }
        features.push(Feature::Interval { lo: prev, hi: None });
        FeatureSet::new(features)
    }

    /// `{1, 1_[lo, hi)}`, the two-state shortcut.
    pub fn constant_and_indicator(lo: Option<f64>, hi: Option<f64>) -> Self {
        FeatureSet {
            features: vec![Feature::Constant { value: 1.0 }, Feature::Interval { lo, hi }],
        }
    }

    /// Partition into `cells` cells with breakpoints equispaced between the
    /// 10% and 90% empirical quantiles of `x`.
    pub fn data_partition(x: &[f64], cells: usize) -> Result<Self> {
        if cells < 2 {
            return FeatureSet::new(vec![Feature::Constant { value: 1.0 }]);
        }
        let mut sorted: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.len() < 2 {
            return Err(Error::TooFewObservations {
                needed: 2,
                got: sorted.len(),
            });
        }
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
        let (lo, hi) = (q(0.1), q(0.9));
        if !(hi > lo) {
            return Err(Error::InvalidParams(
                "observations are too concentrated to build a partition".into(),
            ));
        }
        let breaks: Vec<f64> = (0..cells - 1)
            .map(|k| lo + (hi - lo) * k as f64 / (cells - 2).max(1) as f64)
            .collect();
        let breaks = if cells == 2 { vec![0.5 * (lo + hi)] } else { breaks };
        FeatureSet::partition(&breaks)
    }

    /// Indicators of the given integers.
    pub fn points(values: &[i64]) -> Result<Self> {
        FeatureSet::new(values.iter().map(|&value| Feature::Point { value }).collect())
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Uniform bound on all features.
    pub fn bound(&self) -> f64 {
        self.features.iter().map(Feature::sup_norm).fold(0.0, f64::max)
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        for (o, h) in out.iter_mut().zip(&self.features) {
            *o = h.eval(x);
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        FeatureSet {
            features: perm.iter().map(|&k| self.features[k].clone()).collect(),
        }
    }
}

/// Empirical moments of the triples `(X_n, X_{n+1}, X_{n+2})`, stored sorted
/// on the middle coordinate so `M_hat^x` only touches nearby triples.
#[derive(Debug, Clone)]
pub struct MomentMatrices {
    l0: usize,
    p_hat: DMatrix<f64>,
    middles: Vec<f64>,
    /// Row-major `n_triples x l0` features of the first coordinate.
    left: Vec<f64>,
    /// Same for the third coordinate.
    right: Vec<f64>,
}

impl MomentMatrices {
    pub fn new(x: &[f64], features: &FeatureSet) -> Result<Self> {
        if x.len() < 3 {
            return Err(Error::TooFewObservations {
                needed: 3,
                got: x.len(),
            });
        }
        let l0 = features.len();
        let t = x.len() - 2;
        let mut order: Vec<usize> = (0..t).collect();
        order.sort_by(|&a, &b| x[a + 1].total_cmp(&x[b + 1]));

        let mut left = vec![0.0; t * l0];
        let mut right = vec![0.0; t * l0];
        left.par_chunks_mut(l0)
            .zip(right.par_chunks_mut(l0))
            .zip(order.par_iter())
            .for_each(|((lrow, rrow), &n)| {
                features.eval_into(x[n], lrow);
                features.eval_into(x[n + 2], rrow);
            });
        let middles = order.iter().map(|&n| x[n + 1]).collect();

        let mut p_hat = DMatrix::zeros(l0, l0);
        for (a, c) in left.chunks(l0).zip(right.chunks(l0)) {
            accumulate_outer(&mut p_hat, 1.0, a, c);
        }
        p_hat /= t as f64;
        Ok(MomentMatrices {
            l0,
            p_hat,
            middles,
            left,
            right,
        })
    }

    pub fn l0(&self) -> usize {
        self.l0
    }

    pub fn n_triples(&self) -> usize {
        self.middles.len()
    }

    pub fn p_hat(&self) -> &DMatrix<f64> {
        &self.p_hat
    }

    /// Triples whose middle coordinate lies in `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> Range<usize> {
        let start = self.middles.partition_point(|&m| m < lo);
        let end = self.middles.partition_point(|&m| m <= hi);
        start..end.max(start)
    }

    /// `T^{-1} sum w(X_{n+1}) h(X_n) h(X_{n+2})^T` over triples with middle in `[lo, hi]`.
    pub fn weighted<W: Fn(f64) -> f64>(&self, lo: f64, hi: f64, w: W) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.l0, self.l0);
        for k in self.window(lo, hi) {
            let wk = w(self.middles[k]);
            if wk != 0.0 {
                let row = k * self.l0..(k + 1) * self.l0;
                accumulate_outer(&mut m, wk, &self.left[row.clone()], &self.right[row]);
            }
        }
        m / self.n_triples() as f64
    }
}

#[inline]
fn accumulate_outer(m: &mut DMatrix<f64>, w: f64, a: &[f64], c: &[f64]) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let wa = w * ai;
        for (j, &cj) in c.iter().enumerate() {
            m[(i, j)] += wa * cj;
        }
    }
}

/// `P_hat_{lm} = (N-2)^{-1} sum_n h_l(X_n) h_m(X_{n+2})`.
pub fn empirical_p(x: &[f64], features: &FeatureSet) -> Result<DMatrix<f64>> {
    if x.len() < 3 {
        return Err(Error::TooFewObservations {
            needed: 3,
            got: x.len(),
        });
    }
    let l0 = features.len();
    let mut a = vec![0.0; l0];
    let mut c = vec![0.0; l0];
    let mut p = DMatrix::zeros(l0, l0);
    for n in 0..x.len() - 2 {
        features.eval_into(x[n], &mut a);
        features.eval_into(x[n + 2], &mut c);
        accumulate_outer(&mut p, 1.0, &a, &c);
    }
    Ok(p / (x.len() - 2) as f64)
}

/// `M_hat^x_{lm} = (N-2)^{-1} sum_n h_l(X_n) K_L(x, X_{n+1}) h_m(X_{n+2})`.
pub fn empirical_m(mm: &MomentMatrices, kernel: &Kernel, level: BandwidthLevel, x: f64) -> DMatrix<f64> {
    let h = level.bandwidth();
    mm.weighted(x - h, x + h, |mid| eval_kl(kernel, level, x, mid))
}

/// Population moment matrices and their factors.
#[derive(Debug, Clone)]
pub struct PopulationMoments {
    pub p: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// `O_{lj} = E[h_l(X) | theta = j]`.
    pub o: DMatrix<f64>,
    /// `diag(K_L[f_j](x))`.
    pub d: DMatrix<f64>,
}

pub fn population_moments(
    h: &HmmParams,
    features: &FeatureSet,
    kernel: &Kernel,
    level: BandwidthLevel,
    x: f64,
) -> Result<PopulationMoments> {
    let j = h.n_states();
    let mut o = DMatrix::zeros(features.len(), j);
    for (l, feat) in features.features().iter().enumerate() {
        for (s, f) in h.emissions().iter().enumerate() {
            o[(l, s)] = feat.expectation(f)?;
        }
    }
    let mut d = DMatrix::zeros(j, j);
    for (s, f) in h.emissions().iter().enumerate() {
        d[(s, s)] = smooth(kernel, level, f)?(x)?;
    }
    let q = h.transition().to_matrix();
    let pi = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(h.stationary().probs()));
    let left = &o * &pi * &q;
    let p = &left * &q * o.transpose();
    let m = &left * &d * &q * o.transpose();
    Ok(PopulationMoments { p, m, o, d })
}

/// Top-`J` right singular vectors of `P_hat` as columns.
///
/// Each column is signed so its largest-magnitude entry is positive.
pub fn project_svd(p_hat: &DMatrix<f64>, j: usize) -> Result<DMatrix<f64>> {
    if p_hat.ncols() < j || j == 0 {
        return Err(Error::InvalidParams(format!(
            "cannot project {} features on {j} states",
            p_hat.ncols()
        )));
    }
    let (sigma, v) = linalg::right_singular_pairs(p_hat);
    if !(sigma[j - 1] >= RANK_TOL) {
        return Err(Error::RankDeficient {
            rank: j,
            sigma: sigma[j - 1],
        });
    }
    let mut v = v.columns(0, j).into_owned();
    linalg::normalize_column_signs(&mut v);
    Ok(v)
}

/// `V^T h(X_n)`, `V^T h(X_{n+2})` for every triple plus `(V^T P_hat V)^{-1}`.
///
/// Evaluating `B_hat^x` then costs `O(J^2)` per triple in the kernel window.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    mm: &'a MomentMatrices,
    v: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl<'a> Projector<'a> {
    pub fn new(mm: &'a MomentMatrices, v: &DMatrix<f64>) -> Result<Self> {
        let l0 = mm.l0();
        if v.nrows() != l0 {
            return Err(Error::InvalidParams("projection has the wrong number of rows".into()));
        }
        let j = v.ncols();
        let gram = v.transpose() * mm.p_hat() * v;
        let cond = linalg::condition_number(&gram);
        if !(cond < COND_LIMIT) {
            return Err(Error::NearSingularProjection { cond });
        }
        let gram_inv = gram
            .try_inverse()
            .ok_or(Error::NearSingularProjection { cond: f64::INFINITY })?;
        let project = |src: &[f64]| {
            let mut out = vec![0.0; mm.n_triples() * j];
            out.par_chunks_mut(j)
                .zip(src.par_chunks(l0))
                .for_each(|(o, h)| {
                    for (c, oc) in o.iter_mut().enumerate() {
                        *oc = h.iter().enumerate().map(|(l, hl)| hl * v[(l, c)]).sum();
                    }
                });
            out
        };
        Ok(Projector {
            mm,
            v: v.clone(),
            left: project(&mm.left),
            right: project(&mm.right),
            gram_inv,
        })
    }

    pub fn n_states(&self) -> usize {
        self.v.ncols()
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// `(V^T P V)^{-1} V^T M V` for the weighted moment over `[lo, hi]`.
    pub fn b_weighted<W: Fn(f64) -> f64>(&self, lo: f64, hi: f64, w: W) -> DMatrix<f64> {
        let j = self.n_states();
        let mut m = DMatrix::zeros(j, j);
        for k in self.mm.window(lo, hi) {
            let wk = w(self.mm.middles[k]);
            if wk != 0.0 {
                let row = k * j..(k + 1) * j;
                accumulate_outer(&mut m, wk, &self.left[row.clone()], &self.right[row]);
            }
        }
        m /= self.mm.n_triples() as f64;
        &self.gram_inv * m
    }

    /// `B_hat^x`.
    pub fn b_at(&self, kernel: &Kernel, level: BandwidthLevel, x: f64) -> DMatrix<f64> {
        let h = level.bandwidth();
        self.b_weighted(x - h, x + h, |mid| eval_kl(kernel, level, x, mid))
    }

    /// `B_hat^x` with the kernel replaced by the indicator of `X_{n+1} = x`.
    pub fn b_point(&self, x: f64) -> DMatrix<f64> {
        self.b_weighted(x, x, |_| 1.0)
    }
}

/// `B_hat^x = (V^T P_hat V)^{-1} V^T M_hat^x V`.
pub fn b_matrix(
    mm: &MomentMatrices,
    v_hat: &DMatrix<f64>,
    kernel: &Kernel,
    level: BandwidthLevel,
    x: f64,
) -> Result<DMatrix<f64>> {
    let gram = v_hat.transpose() * mm.p_hat() * v_hat;
    let cond = linalg::condition_number(&gram);
    if !(cond < COND_LIMIT) {
        return Err(Error::NearSingularProjection { cond });
    }
    let gram_inv = gram
        .try_inverse()
        .ok_or(Error::NearSingularProjection { cond: f64::INFINITY })?;
    Ok(gram_inv * v_hat.transpose() * empirical_m(mm, kernel, level, x) * v_hat)
}

/// Minimum pairwise gap between eigenvalues; 0 if some eigenvalue is complex.
pub fn eigen_separation(b: &DMatrix<f64>) -> f64 {
    match linalg::real_eigenvalues(b) {
        Some(ev) if ev.len() >= 2 => ev.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min),
        _ => 0.0,
    }
}

/// One candidate `(a, u)`: the matrix `sum_k a_k B^{u_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPoint {
    pub a: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalizerSearchSpace {
    n_states: usize,
    points: Vec<SearchPoint>,
}

impl DiagonalizerSearchSpace {
    pub fn new(n_states: usize, points: Vec<SearchPoint>) -> Result<Self> {
        let d = pair_count(n_states);
        if points.is_empty() {
            return Err(Error::InvalidParams("search space is empty".into()));
        }
        for p in &points {
            if p.a.len() != d || p.u.len() != d {
                return Err(Error::InvalidParams(format!(
                    "search points need {d} coefficients and locations"
                )));
            }
            if p.a.iter().map(|v| v.abs()).sum::<f64>() > 1.0 + 1e-12 {
                return Err(Error::InvalidParams("search point violates sum |a_i| <= 1".into()));
            }
        }
        Ok(DiagonalizerSearchSpace { n_states, points })
    }

    /// Scalar space for two states: `a = 1`, `u` over the given values.
    pub fn scalar(us: &[f64]) -> Result<Self> {
        DiagonalizerSearchSpace::new(
            2,
            us.iter().map(|&u| SearchPoint { a: vec![1.0], u: vec![u] }).collect(),
        )
    }

    /// Dyadic space on `[lo, hi]`.
    ///
    /// Two states: `u = lo + k (hi - lo) / 2^depth`, `k = 0..=2^depth`, `a = 1`.
    /// More states: `a` ranges over nonzero multiples of 1/2 with
    /// `sum |a_i| <= 1`, and each `u_i` over the depth-`min(depth, 3)` grid.
    pub fn dyadic(n_states: usize, lo: f64, hi: f64, depth: u32) -> Result<Self> {
        if n_states < 2 || !(hi > lo) {
            return Err(Error::InvalidParams("dyadic search space needs J >= 2 and lo < hi".into()));
        }
        let grid = |depth: u32| -> Vec<f64> {
            let n = 1u64 << depth;
            (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
        };
        if n_states == 2 {
            return DiagonalizerSearchSpace::scalar(&grid(depth));
        }
        let d = pair_count(n_states);
        let levels = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let mut coeffs = Vec::new();
        for code in 0..levels.len().pow(d as u32) {
            let mut c = code;
            let a: Vec<f64> = (0..d)
                .map(|_| {
                    let v = levels[c % levels.len()];
                    c /= levels.len();
                    v
                })
                .collect();
            let l1: f64 = a.iter().map(|v| v.abs()).sum();
            if l1 > 0.0 && l1 <= 1.0 {
                coeffs.push(a);
            }
        }
        let us = grid(depth.min(3));
        let mut points = Vec::new();
        for code in 0..us.len().pow(d as u32) {
            let mut c = code;
            let u: Vec<f64> = (0..d)
                .map(|_| {
                    let v = us[c % us.len()];
                    c /= us.len();
                    v
                })
                .collect();
            for a in &coeffs {
                points.push(SearchPoint { a: a.clone(), u: u.clone() });
            }
        }
        DiagonalizerSearchSpace::new(n_states, points)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn points(&self) -> &[SearchPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn distinct_locations(&self) -> Vec<f64> {
        let mut us: Vec<f64> = self.points.iter().flat_map(|p| p.u.iter().copied()).collect();
        us.sort_by(f64::total_cmp);
        us.dedup();
        us
    }
}

fn pair_count(j: usize) -> usize {
    j * (j.saturating_sub(1)) / 2
}

/// Chosen `(a_hat, u_hat)` and the diagonaliser of `B_hat^{a_hat, u_hat}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonalizer {
    pub a: Vec<f64>,
    pub u: Vec<f64>,
    /// Unit-norm eigenvectors as columns, ascending eigenvalue order.
    pub r_hat: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub sep: f64,
}

/// Maximise the eigen-separation of `sum_k a_k B(u_k)` over the space.
///
/// Ties go to the first point in enumeration order.
pub fn select_with<F>(b_at: F, space: &DiagonalizerSearchSpace) -> Result<Diagonalizer>
where
    F: Fn(f64) -> DMatrix<f64> + Sync,
{
    let us = space.distinct_locations();
    let cache: Vec<DMatrix<f64>> = us.par_iter().map(|&u| b_at(u)).collect();
    let lookup = |u: f64| &cache[us.partition_point(|&v| v.total_cmp(&u).is_lt())];
    let j = space.n_states();
    let combine = |p: &SearchPoint| {
        let mut b = DMatrix::zeros(j, j);
        for (&a, &u) in p.a.iter().zip(&p.u) {
            if a != 0.0 {
                b += lookup(u) * a;
            }
        }
        b
    };
    let seps: Vec<f64> = space
        .points()
        .par_iter()
        .map(|p| eigen_separation(&combine(p)))
        .collect();
    let mut best = 0;
    for (k, &s) in seps.iter().enumerate() {
        if s > seps[best] {
            best = k;
        }
    }
    let sep = seps[best];
    if !(sep >= SEP_TOL) {
        return Err(Error::NotDiagonalisable { sep });
    }
    let point = &space.points()[best];
    let b = combine(point);
    let eigenvalues = linalg::real_eigenvalues(&b).ok_or(Error::NotDiagonalisable { sep: 0.0 })?;
    let mut r_hat = DMatrix::zeros(j, j);
    for (c, &l) in eigenvalues.iter().enumerate() {
        r_hat.set_column(c, &linalg::eigenvector(&b, l));
    }
    linalg::normalize_column_signs(&mut r_hat);
    Ok(Diagonalizer {
        a: point.a.clone(),
        u: point.u.clone(),
        r_hat,
        eigenvalues,
        sep,
    })
}

pub fn select_diagonalizer(
    mm: &MomentMatrices,
    v_hat: &DMatrix<f64>,
    kernel: &Kernel,
    level: BandwidthLevel,
    space: &DiagonalizerSearchSpace,
) -> Result<Diagonalizer> {
    let proj = Projector::new(mm, v_hat)?;
    select_with(|u| proj.b_at(kernel, level, u), space)
}

/// Diagonal of `R^{-1} B R`.
pub fn read_off(r_inv: &DMatrix<f64>, r: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let d = r_inv * b * r;
    (0..d.nrows()).map(|k| d[(k, k)]).collect()
}

/// Uniform evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl EvalGrid {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(hi > lo) || nodes < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParams("grid needs lo < hi and at least 2 nodes".into()));
        }
        Ok(EvalGrid { lo, hi, nodes })
    }

    /// `[min(X) - 1, max(X) + 1]`.
    pub fn around(x: &[f64], nodes: usize) -> Result<Self> {
        let (lo, hi) = finite_range(x)?;
        EvalGrid::new(lo - 1.0, hi + 1.0, nodes)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.lo + self.step() * k as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nodes).map(|k| self.node(k)).collect()
    }
}

fn finite_range(x: &[f64]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in x {
        if !v.is_finite() {
            return Err(Error::InvalidParams("observations must be finite".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    Ok((lo, hi))
}

/// Tuning of the continuous estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub n_states: usize,
    /// Hölder smoothness assumed for the emission densities.
    pub smoothness: f64,
    /// Truncation exponent: estimates are clamped to `[-N^alpha, N^alpha]`.
    pub alpha: f64,
    /// Constant in `2^L ~ c (N / ln N)^(1/(1+2s))`.
    pub level_multiplier: f64,
    /// Number of partition cells; `None` means `max(J, 8)`.
    pub n_features: Option<usize>,
    pub search_depth: u32,
    pub grid_nodes: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            n_states: 2,
            smoothness: 2.0,
            alpha: 0.5,
            level_multiplier: 1.0,
            n_features: None,
            search_depth: 7,
            grid_nodes: 513,
        }
    }
}

impl EstimatorConfig {
    pub fn features_for(&self, x: &[f64]) -> Result<FeatureSet> {
        let cells = self.n_features.unwrap_or(self.n_states.max(8));
        FeatureSet::data_partition(x, cells)
    }

    pub fn search_space_for(&self, x: &[f64]) -> Result<DiagonalizerSearchSpace> {
        let (lo, hi) = finite_range(x)?;
        DiagonalizerSearchSpace::dyadic(self.n_states, lo, hi, self.search_depth)
    }

    pub fn grid_for(&self, x: &[f64]) -> Result<EvalGrid> {
        EvalGrid::around(x, self.grid_nodes)
    }
}

/// Output of the continuous estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFit {
    pub grid: EvalGrid,
    /// Rows of `V_hat` (`L0 x J`).
    pub v_hat: Vec<Vec<f64>>,
    /// Rows of `R_hat` (`J x J`).
    pub r_hat: Vec<Vec<f64>>,
    pub densities: Vec<GridDensity>,
    pub level: BandwidthLevel,
    pub smoothness: f64,
    pub alpha: f64,
    pub sep_achieved: f64,
    pub a_hat: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub n_observations: usize,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c])
}

impl SpectralFit {
    pub fn n_states(&self) -> usize {
        self.densities.len()
    }

    pub fn v_matrix(&self) -> DMatrix<f64> {
        matrix_of(&self.v_hat)
    }

    pub fn r_matrix(&self) -> DMatrix<f64> {
        matrix_of(&self.r_hat)
    }

    pub fn density(&self, j: usize) -> &GridDensity {
        &self.densities[j]
    }

    pub fn emission_models(&self) -> Vec<EmissionModel> {
        self.densities.iter().cloned().map(EmissionModel::GridDensity).collect()
    }

    /// The same fit with density labels reordered: new label `k` is old `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        out.densities = perm.iter().map(|&k| self.densities[k].clone()).collect();
        let r = self.r_matrix();
        out.r_hat = rows_of(&DMatrix::from_fn(r.nrows(), r.ncols(), |i, c| r[(i, perm[c])]));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Continuous estimator with explicit features, search space and grid.
pub fn estimate_emissions(
    x: &[f64],
    smoothness: f64,
    features: &FeatureSet,
    space: &DiagonalizerSearchSpace,
    alpha: f64,
    grid: &EvalGrid,
    level_multiplier: f64,
) -> Result<SpectralFit> {
    if x.len() < MIN_OBSERVATIONS {
        return Err(Error::TooFewObservations {
            needed: MIN_OBSERVATIONS,
            got: x.len(),
        });
    }
    finite_range(x)?;
    let j = space.n_states();
    if features.len() < j {
        return Err(Error::InvalidParams(format!(
            "need at least {j} features, got {}",
            features.len()
        )));
    }
    let kernel = build_kernel(smoothness);
    let level = choose_level_scaled(x.len(), smoothness, level_multiplier);
    let mm = MomentMatrices::new(x, features)?;
    let v = project_svd(mm.p_hat(), j)?;
    let proj = Projector::new(&mm, &v)?;
    let diag = select_with(|u| proj.b_at(&kernel, level, u), space)?;
    let r_inv = diag
        .r_hat
        .clone()
        .try_inverse()
        .ok_or(Error::NotDiagonalisable { sep: diag.sep })?;
    let cap = (x.len() as f64).powf(alpha);
    let nodes = grid.points();
    let values: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&t| read_off(&r_inv, &diag.r_hat, &proj.b_at(&kernel, level, t)))
        .collect();
    let densities = (0..j)
        .map(|s| {
            GridDensity::new(
                grid.lo,
                grid.step(),
                values.iter().map(|v| v[s]).collect(),
                Some(cap),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralFit {
        grid: *grid,
        v_hat: rows_of(&v),
        r_hat: rows_of(&diag.r_hat),
        densities,
        level,
        smoothness,
        alpha,
        sep_achieved: diag.sep,
        a_hat: diag.a,
        u_hat: diag.u,
        n_observations: x.len(),
    })
}

/// Continuous estimator with defaults derived from the data.
pub fn estimate_emissions_with(x: &[f64], cfg: &EstimatorConfig) -> Result<SpectralFit> {
    if x.len() < MIN_OBSERVATIONS {
        return Err(Error::TooFewObservations {
            needed: MIN_OBSERVATIONS,
            got: x.len(),
        });
    }
    estimate_emissions(
        x,
        cfg.smoothness,
        &cfg.features_for(x)?,
        &cfg.search_space_for(x)?,
        cfg.alpha,
        &cfg.grid_for(x)?,
        cfg.level_multiplier,
    )
}

/// Output of the discrete estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFit {
    pub support: Vec<i64>,
    /// Clipped and renormalised pmfs, estimator-internal label order.
    pub pmfs: Vec<Vec<f64>>,
    /// Raw read-off values before clipping.
    pub raw: Vec<Vec<f64>>,
    pub sep_achieved: f64,
    pub u_hat: Vec<f64>,
}

impl DiscreteFit {
    pub fn emission_models(&self) -> Vec<EmissionModel> {
        self.pmfs
            .iter()
            .map(|p| EmissionModel::DiscretePmf {
                support: self.support.iter().copied().zip(p.iter().copied()).collect::<BTreeMap<_, _>>(),
            })
            .collect()
    }

    pub fn pmf_at(&self, j: usize, k: i64) -> f64 {
        self.support
            .binary_search(&k)
            .map_or(0.0, |idx| self.pmfs[j][idx])
    }
}

/// Observed integer support of `x`, ascending.
pub fn observed_support(x: &[f64]) -> Result<Vec<i64>> {
    let mut vals = Vec::with_capacity(x.len());
    for &v in x {
        if !v.is_finite() || v.fract() != 0.0 || v.abs() > i64::MAX as f64 {
            return Err(Error::InvalidParams(format!("observation {v} is not an integer")));
        }
        vals.push(v as i64);
    }
    vals.sort_unstable();
    vals.dedup();
    Ok(vals)
}

/// Discrete estimator: `K_L(x, y)` replaced by `1{x = y}`.
///
/// With `features = None` the indicators of the observed support values are
/// used. Without a search space, `u` ranges over the observed support.
pub fn estimate_emissions_discrete(
    x: &[f64],
    n_states: usize,
    features: Option<&FeatureSet>,
    space: Option<&DiagonalizerSearchSpace>,
) -> Result<DiscreteFit> {
    if x.len() < MIN_OBSERVATIONS {
        return Err(Error::TooFewObservations {
            needed: MIN_OBSERVATIONS,
            got: x.len(),
        });
    }
    let support = observed_support(x)?;
    let owned;
    let features = match features {
        Some(f) => f,
        None => {
            owned = FeatureSet::points(&support)?;
            &owned
        }
    };
    if features.len() < n_states {
        return Err(Error::RankDeficient {
            rank: n_states,
            sigma: 0.0,
        });
    }
    let default_space;
    let space = match space {
        Some(s) => s,
        None => {
            let us: Vec<f64> = support.iter().map(|&k| k as f64).collect();
            default_space = if n_states == 2 {
                DiagonalizerSearchSpace::scalar(&us)?
            } else {
                let d = pair_count(n_states);
                let points = us
                    .iter()
                    .flat_map(|&u| {
                        (0..d).map(move |i| {
                            let mut a = vec![0.0; d];
                            a[i] = 1.0;
                            SearchPoint { a, u: vec![u; d] }
                        })
                    })
                    .collect();
                DiagonalizerSearchSpace::new(n_states, points)?
            };
            &default_space
        }
    };
    let mm = MomentMatrices::new(x, features)?;
    let v = project_svd(mm.p_hat(), n_states)?;
    let proj = Projector::new(&mm, &v)?;
    let diag = select_with(|u| proj.b_point(u), space)?;
    let r_inv = diag
        .r_hat
        .clone()
        .try_inverse()
        .ok_or(Error::NotDiagonalisable { sep: diag.sep })?;
    let per_value: Vec<Vec<f64>> = support
        .iter()
        .map(|&k| read_off(&r_inv, &diag.r_hat, &proj.b_point(k as f64)))
        .collect();
    let mut raw = vec![Vec::with_capacity(support.len()); n_states];
    for v in &per_value {
        for (s, &val) in v.iter().enumerate() {
            raw[s].push(val);
        }
    }
    let pmfs = raw
        .iter()
        .map(|r| {
            let clipped: Vec<f64> = r.iter().map(|v| v.max(0.0)).collect();
            let total: f64 = clipped.iter().sum();
            if !(total > 0.0) {
                return Err(Error::NotADensity {
                    min: r.iter().copied().fold(f64::INFINITY, f64::min),
                });
            }
            Ok(clipped.into_iter().map(|v| v / total).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(DiscreteFit {
        support,
        pmfs,
        raw,
        sep_achieved: diag.sep,
        u_hat: diag.u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_evaluate() {
        let f = FeatureSet::partition(&[0.0, 1.0]).unwrap();
        let mut out = [0.0; 3];
        f.eval_into(0.5, &mut out);
        assert_eq!(out, [0.0, 1.0, 0.0]);
        f.eval_into(-3.0, &mut out);
        assert_eq!(out, [1.0, 0.0, 0.0]);
        f.eval_into(1.0, &mut out);
        assert_eq!(out, [0.0, 0.0, 1.0]);
        assert!(FeatureSet::partition(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn separation_examples() {
        assert_eq!(eigen_separation(&DMatrix::from_diagonal_element(2, 2, 1.0)), 0.0);
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        assert_eq!(eigen_separation(&d), 2.0);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 5.0]);
        assert!((eigen_separation(&b) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn dyadic_space_shapes() {
        let s = DiagonalizerSearchSpace::dyadic(2, -8.0, 8.0, 7).unwrap();
        assert_eq!(s.len(), 129);
        assert_eq!(s.points()[0].u, vec![-8.0]);
        assert_eq!(s.points()[128].u, vec![8.0]);
        let s3 = DiagonalizerSearchSpace::dyadic(3, 0.0, 1.0, 2).unwrap();
        assert!(s3
            .points()
            .iter()
            .all(|p| p.a.iter().map(|v| v.abs()).sum::<f64>() <= 1.0));
        assert_eq!(s3, DiagonalizerSearchSpace::dyadic(3, 0.0, 1.0, 2).unwrap());
    }
}
