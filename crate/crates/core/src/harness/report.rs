//! Report files: per-replicate CSV, JSON summary, SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{risk_curve_from, Aggregate, DensityOverlay, ExperimentConfig, ExperimentReport, Pipeline, ReplicateRow, RiskCurve};
use crate::error::{Error, Result};

/// Artifact version written into every summary.
pub const REPORT_VERSION: &str = concat!("nphmm-", env!("CARGO_PKG_VERSION"));

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    /// mFDR/mTDR are ratios of counts summed over replicates.
    pub aggregates: Vec<Aggregate>,
    pub lambda_star: Option<f64>,
    pub risk_curve: RiskCurve,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub svgs: Vec<PathBuf>,
}

pub fn write_rows_csv(rows: &[ReplicateRow], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(ReplicateRow::COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<ReplicateRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ReplicateRow::COLUMNS {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "unexpected CSV header".into(),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Write `replicates.csv`, `summary.json` and (optionally) SVG charts into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path, svg: bool) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("replicates.csv");
    write_rows_csv(&report.rows, &csv)?;

    let summary = Summary {
        version: REPORT_VERSION.to_string(),
        aggregates: report.aggregates.clone(),
        lambda_star: report.lambda_star,
        risk_curve: risk_curve_from(report),
        config: report.config.clone(),
    };
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .map_err(|e| Error::io(&summary_path, e))?;

    let mut svgs = Vec::new();
    if svg {
        let path = dir.join("fdr_trend.svg");
        fs::write(&path, fdr_trend_svg(&report.aggregates, report.config.t)).map_err(|e| Error::io(&path, e))?;
        svgs.push(path);
        if let Some(o) = report.overlays.iter().max_by_key(|o| o.n) {
            let path = dir.join("density_overlay.svg");
            fs::write(&path, density_overlay_svg(o)).map_err(|e| Error::io(&path, e))?;
            svgs.push(path);
        }
    }
    Ok(ReportFiles {
        csv,
        summary: summary_path,
        svgs,
    })
}

/// FDR estimate against `N` for every pipeline, with the level `t` as reference.
pub fn fdr_trend_svg(aggregates: &[Aggregate], t: f64) -> String {
    let mut series = Vec::new();
    for p in [Pipeline::Oracle, Pipeline::PluginTrueH, Pipeline::FullEmpirical] {
        let pts: Vec<(f64, f64)> = aggregates
            .iter()
            .filter(|a| a.pipeline == p)
            .filter_map(|a| a.fdr_hat.map(|f| ((a.n as f64).log10(), f)))
            .collect();
        if !pts.is_empty() {
            series.push((p.name().to_string(), pts));
        }
    }
    if let (Some(lo), Some(hi)) = (
        aggregates.iter().map(|a| a.n).min(),
        aggregates.iter().map(|a| a.n).max(),
    ) {
        series.push((
            "level t".to_string(),
            vec![((lo as f64).log10(), t), ((hi as f64).log10(), t)],
        ));
    }
    line_chart_svg("FDR estimate by sample size", "log10 N", "FDR", &series)
}

pub fn density_overlay_svg(o: &DensityOverlay) -> String {
    let mut series = Vec::new();
    for (j, v) in o.truth.iter().enumerate() {
        series.push((format!("true f{j}"), o.x.iter().copied().zip(v.iter().copied()).collect()));
    }
    for (j, v) in o.estimate.iter().enumerate() {
        series.push((format!("estimated f{j}"), o.x.iter().copied().zip(v.iter().copied()).collect()));
    }
    line_chart_svg(&format!("Emission densities, N = {}", o.n), "x", "density", &series)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

/// Minimal line chart with axes, tick labels and a legend.
pub fn line_chart_svg(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let (ax0, ax1, ay0, ay1) = (px(x0), px(x1), py(y0), py(y1));
    let _ = writeln!(
        s,
        r#"<path d="M{ax0:.1},{ay1:.1} L{ax0:.1},{ay0:.1} L{ax1:.1},{ay0:.1}" stroke="black" fill="none"/>"#
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(fx),
            ay0 + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ax0 - 6.0,
            py(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (ax0 + ax1) / 2.0, h - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        escape(ylabel)
    );
    for (k, (name, p)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let d: Vec<String> = p
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .enumerate()
            .map(|(i, &(x, y))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, px(x), py(y)))
            .collect();
        if !d.is_empty() {
            let _ = writeln!(s, r#"<path d="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#, d.join(" "));
        }
        let ly = top + 16.0 * k as f64;
        let lx = w - right + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
