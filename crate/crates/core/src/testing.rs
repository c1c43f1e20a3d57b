//! ℓ-value thresholding procedures and error-rate functionals.
//!
//! Cumulative means of sorted ℓ-values come from compensated prefix sums,
//! clamped to `[previous mean, current value]`. The clamp only removes
//! round-off, and it makes the computed means exactly nondecreasing, so the
//! threshold `λ_hat` and the posterior FDR of every thresholding procedure
//! agree bit for bit.

use serde::{Deserialize, Serialize};

/// A threshold in `[0, +inf]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    Finite(f64),
    Infinite,
}

impl Lambda {
    /// Whether `v < self`.
    #[inline]
    pub fn exceeds(self, v: f64) -> bool {
        match self {
            Lambda::Finite(l) => v < l,
            Lambda::Infinite => true,
        }
    }

    /// `self <= other`.
    pub fn le(self, other: Lambda) -> bool {
        match (self, other) {
            (_, Lambda::Infinite) => true,
            (Lambda::Infinite, Lambda::Finite(_)) => false,
            (Lambda::Finite(a), Lambda::Finite(b)) => a <= b,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Lambda::Finite(l) => l,
            Lambda::Infinite => f64::INFINITY,
        }
    }
}

/// `phi_i = [ℓ_i < λ]`.
pub fn threshold_procedure(lv: impl AsRef<[f64]>, lambda: Lambda) -> Vec<bool> {
    lv.as_ref().iter().map(|&l| lambda.exceeds(l)).collect()
}

/// Running means of `sorted` (ascending): `out[k]` is the mean of the first `k + 1`.
///
/// Prefix sums are compensated (Neumaier), so a prefix whose exact mean equals
/// a level is not pushed above it by round-off.
pub fn cumulative_means(sorted: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sorted.len());
    let (mut sum, mut comp, mut m) = (0.0f64, 0.0f64, 0.0f64);
    for (k, &v) in sorted.iter().enumerate() {
        let s = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - s) + v } else { (v - s) + sum };
        sum = s;
        let mean = (sum + comp) / (k + 1) as f64;
        m = if k == 0 { v } else { mean.clamp(m, v.max(m)) };
        out.push(m);
    }
    out
}

fn sorted_copy(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Average of the selected ℓ-values; 0 when nothing is selected.
pub fn post_fdr(lv: impl AsRef<[f64]>, phi: &[bool]) -> f64 {
    let lv = lv.as_ref();
    assert_eq!(lv.len(), phi.len(), "ℓ-values and decisions differ in length");
    let selected = sorted_copy(lv.iter().zip(phi).filter(|(_, &p)| p).map(|(&l, _)| l));
    cumulative_means(&selected).last().copied().unwrap_or(0.0)
}

/// `(K_hat, λ_hat)`: the largest prefix of sorted ℓ-values with mean `<= t`,
/// and the next order statistic (or `+inf`).
pub fn select_k_hat(lv: impl AsRef<[f64]>, t: f64) -> (usize, Lambda) {
    let sorted = sorted_copy(lv.as_ref().iter().copied());
    let means = cumulative_means(&sorted);
    let k = means.partition_point(|&m| m <= t);
    let lambda = sorted.get(k).map_or(Lambda::Infinite, |&l| Lambda::Finite(l));
    (k, lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestingOutcome {
    pub k_hat: usize,
    pub lambda_hat: Lambda,
    pub rejections: Vec<bool>,
    pub post_fdr: f64,
    pub level_t: f64,
}

impl TestingOutcome {
    pub fn rejected_indices(&self) -> Vec<usize> {
        self.rejections
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| r.then_some(i))
            .collect()
    }
}

/// Reject the `K_hat` smallest ℓ-values, ties broken by lowest index.
pub fn procedure_hat(lv: impl AsRef<[f64]>, t: f64) -> TestingOutcome {
    let lv = lv.as_ref();
    let (k_hat, lambda_hat) = select_k_hat(lv, t);
    let mut order: Vec<usize> = (0..lv.len()).collect();
    order.sort_by(|&a, &b| lv[a].total_cmp(&lv[b]));
    let mut rejections = vec![false; lv.len()];
    for &i in &order[..k_hat] {
        rejections[i] = true;
    }
    let post = post_fdr(lv, &rejections);
    debug_assert!(post <= t || k_hat == 0);
    TestingOutcome {
        k_hat,
        lambda_hat,
        rejections,
        post_fdr: post,
        level_t: t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub fdp: f64,
    pub tdp: f64,
    pub n_rejected: usize,
    pub n_signals: usize,
    pub n_false: usize,
}

impl ErrorReport {
    pub fn n_true_discoveries(&self) -> usize {
        self.n_rejected - self.n_false
    }
}

/// FDP and TDP of decisions `phi` against states `theta` (0 = null).
pub fn error_report(theta: &[usize], phi: &[bool]) -> ErrorReport {
    assert_eq!(theta.len(), phi.len(), "states and decisions differ in length");
    let mut n_rejected = 0;
    let mut n_signals = 0;
    let mut n_false = 0;
    let mut n_true = 0;
    for (&s, &p) in theta.iter().zip(phi) {
        n_rejected += p as usize;
        n_signals += (s != 0) as usize;
        n_false += (p && s == 0) as usize;
        n_true += (p && s != 0) as usize;
    }
    ErrorReport {
        fdp: n_false as f64 / n_rejected.max(1) as f64,
        tdp: n_true as f64 / n_signals.max(1) as f64,
        n_rejected,
        n_signals,
        n_false,
    }
}

/// `(mFDR_hat, mTDR_hat)` as ratios of summed counts, `0/0 = 0`.
pub fn marginal_rates_of(reports: &[ErrorReport]) -> (f64, f64) {
    let sum = |f: fn(&ErrorReport) -> usize| reports.iter().map(f).sum::<usize>() as f64;
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    (
        ratio(sum(|r| r.n_false), sum(|r| r.n_rejected)),
        ratio(sum(|r| r.n_true_discoveries()), sum(|r| r.n_signals)),
    )
}

/// Marginal rates over replicate `(theta, phi)` pairs.
pub fn marginal_rates(replicates: &[(Vec<usize>, Vec<bool>)]) -> (f64, f64) {
    let reports: Vec<ErrorReport> = replicates.iter().map(|(t, p)| error_report(t, p)).collect();
    marginal_rates_of(&reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let l = [0.1, 0.5, 0.5];
        assert_eq!(threshold_procedure(l, Lambda::Finite(0.0)), vec![false; 3]);
        assert_eq!(threshold_procedure(l, Lambda::Infinite), vec![true; 3]);
        assert_eq!(threshold_procedure(l, Lambda::Finite(0.5)), vec![true, false, false]);
    }

    #[test]
    fn k_hat_examples() {
        assert_eq!(select_k_hat([0.0, 0.0, 0.0], 0.05), (3, Lambda::Infinite));
        assert_eq!(select_k_hat([0.5, 0.6], 0.05), (0, Lambda::Finite(0.5)));
        assert_eq!(select_k_hat([0.01, 0.08, 0.2], 0.05), (2, Lambda::Finite(0.2)));
    }

    #[test]
    fn procedure_tie_rule() {
        let out = procedure_hat([0.2, 0.0, 0.2], 0.1);
        assert_eq!(out.k_hat, 2);
        assert_eq!(out.rejected_indices(), vec![0, 1]);
        assert!(out.post_fdr <= 0.1);
        let none = procedure_hat([1.0; 4], 0.5);
        assert_eq!(none.k_hat, 0);
        assert!(none.rejections.iter().all(|r| !r));
    }

    #[test]
    fn report_examples() {
        let r = error_report(&[0, 1, 0], &[true, true, false]);
        assert_eq!((r.fdp, r.tdp), (0.5, 1.0));
        let r = error_report(&[0, 1, 0], &[false; 3]);
        assert_eq!((r.fdp, r.tdp), (0.0, 0.0));
        assert_eq!(marginal_rates(&[(vec![0, 1], vec![false, true])]), (0.0, 1.0));
        assert_eq!(marginal_rates(&[(vec![0, 0], vec![false, false])]), (0.0, 0.0));
    }
}
