//! Monte Carlo campaigns around the testing pipeline.
//!
//! Every `(N, replicate)` cell simulates one path from the true parameters
//! with seed `stream_seed(master_seed, [N, replicate])` and runs each
//! requested pipeline on that same path:
//!
//! * `oracle`: ℓ-values at the true parameters, thresholded by `procedure_hat`.
//! * `plugin_true_h`: ℓ-values at the true parameters, thresholded at a fixed
//!   λ* (the oracle thresholding procedure). λ* is the `λ_hat` of one long
//!   pilot path simulated from the true parameters.
//! * `full_empirical`: spectral estimate of the emissions, likelihood fit of
//!   the transition matrix, label alignment, ℓ-values at the estimate,
//!   `procedure_hat`.

mod report;

pub use report::{fdr_trend_svg, line_chart_svg, read_rows_csv, write_report, write_rows_csv, ReportFiles, Summary, REPORT_VERSION};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{simulate, EmissionModel, HmmParams, Measure, TransitionMatrix};
use crate::perturbation;
use crate::recovery::{align_labels, align_with, estimate_transition, AlignmentRule};
use crate::rng::stream_seed;
use crate::smoothing::l_values;
use crate::spectral::{estimate_emissions_discrete, estimate_emissions_with, EstimatorConfig, EvalGrid};
use crate::testing::{error_report, marginal_rates_of, procedure_hat, select_k_hat, threshold_procedure, Lambda};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Oracle,
    PluginTrueH,
    FullEmpirical,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Oracle => "oracle",
            Pipeline::PluginTrueH => "plugin_true_h",
            Pipeline::FullEmpirical => "full_empirical",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Pipeline::Oracle, Pipeline::PluginTrueH, Pipeline::FullEmpirical]
            .into_iter()
            .find(|p| p.name() == s)
    }
}

fn default_pipelines() -> Vec<Pipeline> {
    vec![Pipeline::Oracle, Pipeline::PluginTrueH, Pipeline::FullEmpirical]
}

fn default_pilot() -> usize {
    200_000
}

fn default_risk_nodes() -> usize {
    1024
}

fn default_alignment() -> AlignmentRule {
    AlignmentRule::ByStationaryMass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: HmmParams,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    /// FDR level.
    pub t: f64,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub master_seed: u64,
    #[serde(default = "default_pipelines")]
    pub pipelines: Vec<Pipeline>,
    #[serde(default = "default_alignment")]
    pub alignment: AlignmentRule,
    /// Length of the pilot path used to fix λ* for `plugin_true_h`.
    #[serde(default = "default_pilot")]
    pub pilot_length: usize,
    /// Grid for sup-norm errors; defaults to the 0.1%–99.9% range of the
    /// true marginal.
    #[serde(default)]
    pub risk_grid: Option<EvalGrid>,
    #[serde(default = "default_risk_nodes")]
    pub risk_grid_nodes: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.t > 0.0 && self.t < 1.0) {
            return bad("t must lie in (0, 1)");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("N grid must be nonempty and strictly increasing");
        }
        if self.n_grid[0] == 0 {
            return bad("sequence lengths must be positive");
        }
        if self.params.n_states() != 2 {
            return bad("experiments are implemented for two-state models");
        }
        if self.pipelines.is_empty() {
            return bad("no pipeline selected");
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn replicate_seed(&self, n: usize, r: usize) -> u64 {
        stream_seed(self.master_seed, &[n as u64, r as u64])
    }

    pub fn pilot_seed(&self) -> u64 {
        stream_seed(self.master_seed, &[u64::MAX])
    }

    pub fn risk_grid(&self) -> Result<EvalGrid> {
        match self.risk_grid {
            Some(g) => Ok(g),
            None => default_risk_grid(&self.params, self.risk_grid_nodes),
        }
    }
}

/// Grid over the 0.1% to 99.9% quantiles of the marginal law of `X`.
pub fn default_risk_grid(h: &HmmParams, nodes: usize) -> Result<EvalGrid> {
    let cdf = |x: f64| -> Result<f64> {
        let mut s = 0.0;
        for (j, f) in h.emissions().iter().enumerate() {
            s += h.stationary().get(j) * f.mass(f64::NEG_INFINITY, x)?;
        }
        Ok(s)
    };
    let quantile = |p: f64| -> Result<f64> {
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while cdf(lo)? > p {
            lo *= 2.0;
            if lo < -1e12 {
                break;
            }
        }
        while cdf(hi)? < p {
            hi *= 2.0;
            if hi > 1e12 {
                break;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * (1.0 + hi.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    EvalGrid::new(quantile(1e-3)?, quantile(1.0 - 1e-3)?, nodes)
}

/// One pipeline run on one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub n: usize,
    pub replicate: usize,
    pub pipeline: Pipeline,
    pub seed: u64,
    /// `ok` or the kind of error that stopped the pipeline.
    pub status: String,
    pub fdp: Option<f64>,
    pub tdp: Option<f64>,
    pub k_hat: Option<usize>,
    /// `inf` when every hypothesis is rejected.
    pub lambda_hat: Option<f64>,
    pub post_fdr: Option<f64>,
    pub n_rejected: Option<usize>,
    pub n_signals: Option<usize>,
    pub n_false: Option<usize>,
    pub sup_err_null: Option<f64>,
    pub sup_err_alt: Option<f64>,
    pub rho_loss: Option<f64>,
    pub q_err: Option<f64>,
    pub pi_err: Option<f64>,
}

impl ReplicateRow {
    pub const COLUMNS: [&'static str; 18] = [
        "n",
        "replicate",
        "pipeline",
        "seed",
        "status",
        "fdp",
        "tdp",
        "k_hat",
        "lambda_hat",
        "post_fdr",
        "n_rejected",
        "n_signals",
        "n_false",
        "sup_err_null",
        "sup_err_alt",
        "rho_loss",
        "q_err",
        "pi_err",
    ];

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(n: usize, replicate: usize, pipeline: Pipeline, seed: u64, e: &Error) -> Self {
        ReplicateRow {
            n,
            replicate,
            pipeline,
            seed,
            status: e.kind().to_string(),
            fdp: None,
            tdp: None,
            k_hat: None,
            lambda_hat: None,
            post_fdr: None,
            n_rejected: None,
            n_signals: None,
            n_false: None,
            sup_err_null: None,
            sup_err_alt: None,
            rho_loss: None,
            q_err: None,
            pi_err: None,
        }
    }

    fn error_report(&self) -> Option<crate::testing::ErrorReport> {
        Some(crate::testing::ErrorReport {
            fdp: self.fdp?,
            tdp: self.tdp?,
            n_rejected: self.n_rejected?,
            n_signals: self.n_signals?,
            n_false: self.n_false?,
        })
    }
}

/// Aggregates over the successful replicates of one `(N, pipeline)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub pipeline: Pipeline,
    pub replicates: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub failure_rate: f64,
    /// Mean of the `fdp` column.
    pub fdr_hat: Option<f64>,
    pub fdr_se: Option<f64>,
    pub tdr_hat: Option<f64>,
    pub tdr_se: Option<f64>,
    /// Ratio of summed false discoveries to summed rejections.
    pub mfdr_hat: Option<f64>,
    /// Ratio of summed true discoveries to summed signals.
    pub mtdr_hat: Option<f64>,
    pub max_post_fdr: Option<f64>,
    pub median_rho: Option<f64>,
}

fn mean_se(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (Some(mean), None);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

/// Median, averaging the two middle values for even counts.
pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) })
}

/// Aggregate rows per `(N, pipeline)`, in ascending `(N, pipeline)` order.
pub fn aggregate(rows: &[ReplicateRow]) -> Vec<Aggregate> {
    let mut keys: Vec<(usize, Pipeline)> = rows.iter().map(|r| (r.n, r.pipeline)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(n, pipeline)| {
            let cell: Vec<&ReplicateRow> = rows.iter().filter(|r| r.n == n && r.pipeline == pipeline).collect();
            let ok: Vec<&ReplicateRow> = cell.iter().copied().filter(|r| r.is_ok()).collect();
            let fdp: Vec<f64> = ok.iter().filter_map(|r| r.fdp).collect();
            let tdp: Vec<f64> = ok.iter().filter_map(|r| r.tdp).collect();
            let reports: Vec<_> = ok.iter().filter_map(|r| r.error_report()).collect();
            let rho: Vec<f64> = ok.iter().filter_map(|r| r.rho_loss).collect();
            let (fdr_hat, fdr_se) = mean_se(&fdp);
            let (tdr_hat, tdr_se) = mean_se(&tdp);
            let (mfdr, mtdr) = marginal_rates_of(&reports);
            let n_failed = cell.len() - ok.len();
            Aggregate {
                n,
                pipeline,
                replicates: cell.len(),
                n_ok: ok.len(),
                n_failed,
                failure_rate: n_failed as f64 / cell.len() as f64,
                fdr_hat,
                fdr_se,
                tdr_hat,
                tdr_se,
                mfdr_hat: (!reports.is_empty()).then_some(mfdr),
                mtdr_hat: (!reports.is_empty()).then_some(mtdr),
                max_post_fdr: ok.iter().filter_map(|r| r.post_fdr).reduce(f64::max),
                median_rho: median(&rho),
            }
        })
        .collect()
}

/// Overlay of true and estimated densities for one fitted replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityOverlay {
    pub n: usize,
    pub replicate: usize,
    pub x: Vec<f64>,
    pub truth: Vec<Vec<f64>>,
    pub estimate: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Sorted by `(N, replicate, pipeline)`.
    pub rows: Vec<ReplicateRow>,
    pub aggregates: Vec<Aggregate>,
    /// Threshold used by `plugin_true_h`.
    pub lambda_star: Option<f64>,
    pub overlays: Vec<DensityOverlay>,
}

impl ExperimentReport {
    pub fn aggregate_for(&self, n: usize, pipeline: Pipeline) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.n == n && a.pipeline == pipeline)
    }

    pub fn rows_for(&self, n: usize, pipeline: Pipeline) -> impl Iterator<Item = &ReplicateRow> {
        self.rows.iter().filter(move |r| r.n == n && r.pipeline == pipeline)
    }
}

/// `rho(a, b) = min over permutations tau of sum_j sup_grid |a_j - b_tau(j)|`.
///
/// Inputs are per-state values on a common grid.
pub fn rho_on_grid(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len(), "state counts differ");
    let sup = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let j = a.len();
    let mut perm: Vec<usize> = (0..j).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm over all permutations; J is tiny.
    let mut c = vec![0usize; j];
    let score = |p: &[usize]| (0..j).map(|k| sup(&a[k], &b[p[k]])).sum::<f64>();
    best = best.min(score(&perm));
    let mut i = 0;
    while i < j {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(score(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn values_on(models: &[EmissionModel], grid: &[f64]) -> Vec<Vec<f64>> {
    models
        .iter()
        .map(|f| grid.iter().map(|&x| f.density_at(x)).collect())
        .collect()
}

/// `r_N = (N / ln N)^(-s / (1 + 2 s))`.
pub fn rate(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    (nf / nf.ln()).powf(-s / (1.0 + 2.0 * s))
}

struct Context {
    cfg: ExperimentConfig,
    lambda_star: Option<f64>,
    grid: Vec<f64>,
    truth: Vec<Vec<f64>>,
}

struct FullResult {
    row: ReplicateRow,
    estimate: Vec<Vec<f64>>,
}

fn testing_row(
    n: usize,
    replicate: usize,
    pipeline: Pipeline,
    seed: u64,
    theta: &[usize],
    lv: &[f64],
    phi: Vec<bool>,
    k_hat: usize,
    lambda: Lambda,
) -> ReplicateRow {
    let rep = error_report(theta, &phi);
    ReplicateRow {
        n,
        replicate,
        pipeline,
        seed,
        status: "ok".into(),
        fdp: Some(rep.fdp),
        tdp: Some(rep.tdp),
        k_hat: Some(k_hat),
        lambda_hat: Some(lambda.as_f64()),
        post_fdr: Some(crate::testing::post_fdr(lv, &phi)),
        n_rejected: Some(rep.n_rejected),
        n_signals: Some(rep.n_signals),
        n_false: Some(rep.n_false),
        sup_err_null: None,
        sup_err_alt: None,
        rho_loss: None,
        q_err: None,
        pi_err: None,
    }
}

fn run_full(ctx: &Context, n: usize, r: usize, seed: u64, x: &[f64], theta: &[usize]) -> Result<FullResult> {
    let cfg = &ctx.cfg;
    let (emissions, pi_hat_perm) = match cfg.params.measure() {
        Measure::Continuous => {
            let fit = estimate_emissions_with(x, &cfg.estimator)?;
            let rec = estimate_transition(x, &fit.emission_models())?;
            let perm = align_labels(&fit, &rec, cfg.alignment, x)?;
            (fit.permuted(&perm).emission_models(), rec.permuted(&perm))
        }
        Measure::Discrete => {
            let fit = estimate_emissions_discrete(x, 2, None, None)?;
            let models = fit.emission_models();
            let rec = estimate_transition(x, &models)?;
            let perm = align_with(|j, v| models[j].density_at(v), &rec.pi_hat, cfg.alignment, x)?;
            (perm.iter().map(|&k| models[k].clone()).collect(), rec.permuted(&perm))
        }
    };
    let h_hat = pi_hat_perm.to_hmm_params(emissions.clone())?;
    let lv = l_values(x, &h_hat)?;
    let out = procedure_hat(&lv, cfg.t);
    let mut row = testing_row(
        n,
        r,
        Pipeline::FullEmpirical,
        seed,
        theta,
        lv.values(),
        out.rejections,
        out.k_hat,
        out.lambda_hat,
    );
    let est = values_on(&emissions, &ctx.grid);
    let sup = |j: usize| {
        est[j]
            .iter()
            .zip(&ctx.truth[j])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    row.sup_err_null = Some(sup(0));
    row.sup_err_alt = Some(sup(1));
    row.rho_loss = Some(rho_on_grid(&est, &ctx.truth));
    let q_true = cfg.params.transition().to_matrix();
    row.q_err = Some((pi_hat_perm.q_hat.to_matrix() - q_true).norm());
    row.pi_err = Some(
        pi_hat_perm
            .pi_hat
            .probs()
            .iter()
            .zip(cfg.params.stationary().probs())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt(),
    );
    Ok(FullResult { row, estimate: est })
}

fn run_cell(ctx: &Context, n: usize, r: usize) -> (Vec<ReplicateRow>, Option<DensityOverlay>) {
    let cfg = &ctx.cfg;
    let seed = cfg.replicate_seed(n, r);
    let path = simulate(&cfg.params, n, seed);
    let x = &path.observations;
    let theta = &path.states;
    let mut rows = Vec::new();
    let mut overlay = None;
    let true_lv = if cfg
        .pipelines
        .iter()
        .any(|p| matches!(p, Pipeline::Oracle | Pipeline::PluginTrueH))
    {
        Some(l_values(x, &cfg.params))
    } else {
        None
    };
    for &pipeline in &cfg.pipelines {
        let row = match pipeline {
            Pipeline::Oracle => match true_lv.as_ref().expect("computed above") {
                Ok(lv) => {
                    let out = procedure_hat(lv, cfg.t);
                    testing_row(n, r, pipeline, seed, theta, lv.values(), out.rejections, out.k_hat, out.lambda_hat)
                }
                Err(e) => ReplicateRow::failed(n, r, pipeline, seed, e),
            },
            Pipeline::PluginTrueH => match true_lv.as_ref().expect("computed above") {
                Ok(lv) => {
                    let lambda = ctx.lambda_star.map_or(Lambda::Infinite, Lambda::Finite);
                    let phi = threshold_procedure(lv, lambda);
                    let k = phi.iter().filter(|&&p| p).count();
                    testing_row(n, r, pipeline, seed, theta, lv.values(), phi, k, lambda)
                }
                Err(e) => ReplicateRow::failed(n, r, pipeline, seed, e),
            },
            Pipeline::FullEmpirical => match run_full(ctx, n, r, seed, x, theta) {
                Ok(res) => {
                    overlay = Some(DensityOverlay {
                        n,
                        replicate: r,
                        x: ctx.grid.clone(),
                        truth: ctx.truth.clone(),
                        estimate: res.estimate,
                    });
                    res.row
                }
                Err(e) => ReplicateRow::failed(n, r, pipeline, seed, &e),
            },
        };
        rows.push(row);
    }
    (rows, overlay)
}

/// λ* from a long pilot path at the true parameters.
pub fn pilot_lambda_star(cfg: &ExperimentConfig) -> Result<Option<f64>> {
    let path = simulate(&cfg.params, cfg.pilot_length.max(1), cfg.pilot_seed());
    let lv = l_values(&path.observations, &cfg.params)?;
    Ok(match select_k_hat(&lv, cfg.t).1 {
        Lambda::Finite(l) => Some(l),
        Lambda::Infinite => None,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let lambda_star = if cfg.pipelines.contains(&Pipeline::PluginTrueH) {
        pilot_lambda_star(cfg)?
    } else {
        None
    };
    let (grid, truth) = match cfg.params.measure() {
        Measure::Continuous => {
            let grid = cfg.risk_grid()?.points();
            let truth = values_on(cfg.params.emissions(), &grid);
            (grid, truth)
        }
        Measure::Discrete => {
            let mut support: Vec<f64> = cfg
                .params
                .emissions()
                .iter()
                .flat_map(|f| match f {
                    EmissionModel::DiscretePmf { support } => support.keys().map(|&k| k as f64).collect(),
                    _ => Vec::new(),
                })
                .collect();
            support.sort_by(f64::total_cmp);
            support.dedup();
            let truth = values_on(cfg.params.emissions(), &support);
            (support, truth)
        }
    };
    let ctx = Context {
        cfg: cfg.clone(),
        lambda_star,
        grid,
        truth,
    };
    let cells: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r)))
        .collect();
    let results: Vec<(Vec<ReplicateRow>, Option<DensityOverlay>)> =
        cells.par_iter().map(|&(n, r)| run_cell(&ctx, n, r)).collect();

    let mut rows = Vec::with_capacity(results.len() * cfg.pipelines.len());
    let mut overlays = Vec::new();
    for (cell_rows, overlay) in results {
        rows.extend(cell_rows);
        if let Some(o) = overlay {
            // keep the first fitted replicate per N
            if !overlays.iter().any(|e: &DensityOverlay| e.n == o.n) {
                overlays.push(o);
            }
        }
    }
    rows.sort_by_key(|r| (r.n, r.replicate, r.pipeline));
    let aggregates = aggregate(&rows);
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
        aggregates,
        lambda_star,
        overlays,
    })
}

/// One row of the estimation risk curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub n: usize,
    pub median_rho: Option<f64>,
    pub r_n: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub rows: Vec<RiskRow>,
    /// Least-squares slope of `ln median_rho` against `ln r_N`.
    pub slope: Option<f64>,
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn curve_from_losses(n_grid: &[usize], s: f64, losses: &[(usize, Option<f64>)]) -> RiskCurve {
    let rows: Vec<RiskRow> = n_grid
        .iter()
        .map(|&n| {
            let cell: Vec<Option<f64>> = losses.iter().filter(|l| l.0 == n).map(|l| l.1).collect();
            let rho: Vec<f64> = cell.iter().flatten().copied().collect();
            RiskRow {
                n,
                median_rho: median(&rho),
                r_n: rate(n, s),
                n_ok: rho.len(),
                n_failed: cell.len() - rho.len(),
            }
        })
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.median_rho.filter(|m| *m > 0.0).map(|m| (r.r_n.ln(), m.ln())))
        .unzip();
    RiskCurve {
        slope: ls_slope(&lx, &ly),
        rows,
    }
}

/// Curve from the `full_empirical` rows of a finished experiment.
pub fn risk_curve_from(report: &ExperimentReport) -> RiskCurve {
    let losses: Vec<(usize, Option<f64>)> = report
        .rows
        .iter()
        .filter(|r| r.pipeline == Pipeline::FullEmpirical)
        .map(|r| (r.n, r.rho_loss))
        .collect();
    curve_from_losses(&report.config.n_grid, report.config.estimator.smoothness, &losses)
}

/// Median ρ-loss of the spectral estimator per `N`, next to `r_N`.
pub fn estimation_risk_curve(cfg: &ExperimentConfig) -> Result<RiskCurve> {
    cfg.validate()?;
    if cfg.n_grid.len() < 3 {
        return Err(Error::InvalidParams("risk curve needs at least three sample sizes".into()));
    }
    if cfg.params.measure() != Measure::Continuous {
        return Err(Error::InvalidParams("risk curve is defined for continuous emissions".into()));
    }
    let grid = cfg.risk_grid()?.points();
    let truth = values_on(cfg.params.emissions(), &grid);
    let cells: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r)))
        .collect();
    let losses: Vec<(usize, Option<f64>)> = cells
        .par_iter()
        .map(|&(n, r)| {
            let path = simulate(&cfg.params, n, cfg.replicate_seed(n, r));
            let loss = estimate_emissions_with(&path.observations, &cfg.estimator)
                .ok()
                .map(|fit| rho_on_grid(&values_on(&fit.emission_models(), &grid), &truth));
            (n, loss)
        })
        .collect();
    Ok(curve_from_losses(&cfg.n_grid, cfg.estimator.smoothness, &losses))
}

/// Pair of densities `g_0 = r phi(r x)` and `g_{m,A} = g_0 + A psi(M x - m + 1/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxInstance {
    pub scale: f64,
    pub amplitude: f64,
    pub bumps: u32,
    pub index: u32,
    pub base: EmissionModel,
    pub perturbed: EmissionModel,
}

pub fn minimax_instance(index: u32, amplitude: f64, bumps: u32, scale: f64) -> Result<MinimaxInstance> {
    let perturbed = EmissionModel::PerturbedGaussian {
        scale,
        amplitude,
        bumps,
        index,
    };
    perturbed.validate()?;
    let (a, b) = perturbation::bump_support(bumps, index);
    let min = (0..=4096)
        .map(|k| perturbed.density_at(a + (b - a) * k as f64 / 4096.0))
        .fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        return Err(Error::NotADensity { min });
    }
    Ok(MinimaxInstance {
        scale,
        amplitude,
        bumps,
        index,
        base: EmissionModel::PerturbedGaussian {
            scale,
            amplitude: 0.0,
            bumps,
            index,
        },
        perturbed,
    })
}

/// Mixing and conditioning diagnostics of a two-state transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Spectral condition number; `None` when `Q` is singular.
    pub kappa: Option<f64>,
    /// Absolute spectral gap `1 - |1 - p - q|`.
    pub gamma_star: f64,
    /// Smallest entry.
    pub delta: f64,
}

impl Diagnostics {
    pub fn kappa(&self) -> Result<f64> {
        self.kappa.ok_or(Error::SingularQ)
    }
}

pub fn diagnostics(q: &TransitionMatrix) -> Result<Diagnostics> {
    if q.n_states() != 2 {
        return Err(Error::InvalidParams("diagnostics are implemented for two states".into()));
    }
    let sv = q.to_matrix().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let kappa = (smin > 1e-12 * smax).then(|| smax / smin);
    Ok(Diagnostics {
        kappa,
        gamma_star: 1.0 - (1.0 - q.p() - q.q()).abs(),
        delta: q.min_entry(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagnostics_examples() {
        let d = diagnostics(&TransitionMatrix::identity(2)).unwrap();
        assert_eq!((d.kappa, d.gamma_star, d.delta), (Some(1.0), 0.0, 0.0));
        let d = diagnostics(&TransitionMatrix::two_state(0.5, 0.5).unwrap()).unwrap();
        assert_eq!(d.gamma_star, 1.0);
        assert!(d.kappa().is_err());
        let d = diagnostics(&TransitionMatrix::two_state(0.1, 0.3).unwrap()).unwrap();
        assert!((d.gamma_star - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rho_examples() {
        let a = vec![vec![0.0, 1.0], vec![2.0, 2.0]];
        let b = vec![vec![2.0, 2.0], vec![0.0, 1.5]];
        assert_eq!(rho_on_grid(&a, &a), 0.0);
        assert_eq!(rho_on_grid(&a, &b), 0.5);
    }
}
