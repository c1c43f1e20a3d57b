use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nphmm::harness::{self, ExperimentConfig};
use nphmm::recovery::{align_labels, estimate_transition, AlignmentRule, TailPoint};
use nphmm::spectral::{estimate_emissions_discrete, estimate_emissions_with, EstimatorConfig};
use nphmm::testing::procedure_hat;
use nphmm::{simulate, smoothing, HmmParams};

#[derive(Parser)]
#[command(name = "nphmm", version, about = "Multiple testing under a nonparametric hidden Markov model")]
struct Cli {
    /// Worker threads for experiments (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format for tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write results into this directory instead of stdout.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Align {
    /// The heavier state is the null.
    Mass,
    /// The null has the lighter right tail.
    Tail,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a path from a model.
    Simulate {
        /// Model parameters (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Path length.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit emission densities (and optionally the transition matrix) from observations.
    Estimate {
        /// Observations, one per line.
        #[arg(long)]
        data: PathBuf,
        /// Estimator settings (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Treat observations as integer-valued.
        #[arg(long)]
        discrete: bool,
        /// Also recover the transition matrix and align the labels.
        #[arg(long)]
        recover: bool,
        /// Labelling rule used with `--recover`.
        #[arg(long, value_enum, default_value_t = Align::Tail)]
        align: Align,
    },
    /// Posterior null probabilities of every position under a model.
    Lvalues {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Threshold a file of ℓ-values at level t.
    Test {
        /// ℓ-values, one per line.
        #[arg(long)]
        lvalues: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        t: f64,
    },
    /// Run a Monte Carlo campaign described by a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the master seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Skip SVG charts.
        #[arg(long)]
        no_svg: bool,
    },
    /// Render charts from a replicate CSV written by `experiment`.
    Report {
        /// Per-replicate CSV.
        #[arg(long)]
        rows: PathBuf,
        /// Level drawn as the reference line.
        #[arg(long, default_value_t = 0.1)]
        t: f64,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let out = Output { format: cli.format, dir: cli.out_dir.as_deref() };
    match cli.command {
        Command::Simulate { config, n, seed } => {
            let h = read_params(&config)?;
            let path = simulate(&h, n, seed);
            if let Some(dir) = out.dir {
                fs::create_dir_all(dir)?;
                write_lines(&dir.join("observations.txt"), &path.observations)?;
            }
            match out.format {
                Format::Csv => {
                    let mut s = String::from("index,state,observation\n");
                    for (i, (st, x)) in path.states.iter().zip(&path.observations).enumerate() {
                        s.push_str(&format!("{},{},{}\n", i + 1, st, x));
                    }
                    out.emit("path.csv", &s)
                }
                Format::Json => out.emit("path.json", &serde_json::to_string(&path)?),
            }
        }
        Command::Estimate { data, config, discrete, recover, align } => {
            let x = read_floats(&data)?;
            let cfg: EstimatorConfig = match &config {
                Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => EstimatorConfig::default(),
            };
            if discrete {
                let fit = estimate_emissions_discrete(&x, cfg.n_states, None, None)?;
                return match out.format {
                    Format::Json => out.emit("fit.json", &serde_json::to_string_pretty(&fit)?),
                    Format::Csv => {
                        let mut s = String::from("value");
                        (0..fit.pmfs.len()).for_each(|j| s.push_str(&format!(",f{j}")));
                        s.push('\n');
                        for (k, v) in fit.support.iter().enumerate() {
                            s.push_str(&v.to_string());
                            fit.pmfs.iter().for_each(|p| s.push_str(&format!(",{}", p[k])));
                            s.push('\n');
                        }
                        out.emit("fit.csv", &s)
                    }
                };
            }
            let mut fit = estimate_emissions_with(&x, &cfg)?;
            let mut recovered = None;
            if recover {
                let rec = estimate_transition(&x, &fit.emission_models())?;
                let rule = match align {
                    Align::Mass => AlignmentRule::ByStationaryMass,
                    Align::Tail => AlignmentRule::ByTailRatio { x_star: TailPoint::PosInfinity },
                };
                let perm = align_labels(&fit, &rec, rule, &x)?;
                fit = fit.permuted(&perm);
                recovered = Some(rec.permuted(&perm).to_hmm_params(fit.emission_models())?);
            }
            match out.format {
                Format::Json => {
                    out.emit("fit.json", &fit.to_json()?)?;
                    if let Some(h) = recovered {
                        out.emit("params.json", &h.to_json()?)?;
                    }
                    Ok(())
                }
                Format::Csv => {
                    let mut s = String::from("x");
                    (0..fit.densities.len()).for_each(|j| s.push_str(&format!(",f{j}")));
                    s.push('\n');
                    for (k, g) in fit.grid.points().iter().enumerate() {
                        s.push_str(&g.to_string());
                        fit.densities.iter().for_each(|d| s.push_str(&format!(",{}", d.values[k])));
                        s.push('\n');
                    }
                    out.emit("fit.csv", &s)?;
                    if let Some(h) = recovered {
                        out.emit("params.json", &h.to_json()?)?;
                    }
                    Ok(())
                }
            }
        }
        Command::Lvalues { config, data } => {
            let h = read_params(&config)?;
            let lv = smoothing::l_values(&read_floats(&data)?, &h)?;
            match out.format {
                Format::Csv => out.emit("lvalues.txt", &lines(lv.values())),
                Format::Json => out.emit("lvalues.json", &serde_json::to_string(lv.values())?),
            }
        }
        Command::Test { lvalues, t } => {
            if !(t > 0.0 && t < 1.0) {
                bail!("level t must lie in (0, 1), got {t}");
            }
            let lv = read_floats(&lvalues)?;
            if let Some(bad) = lv.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                bail!("ℓ-values must lie in [0, 1], found {bad}");
            }
            let outcome = procedure_hat(&lv, t);
            match out.format {
                Format::Json => out.emit("test.json", &serde_json::to_string_pretty(&outcome)?),
                Format::Csv => {
                    let mut s = String::from("index,lvalue,reject\n");
                    for (i, (l, r)) in lv.iter().zip(&outcome.rejections).enumerate() {
                        s.push_str(&format!("{},{},{}\n", i + 1, l, u8::from(*r)));
                    }
                    out.emit("test.csv", &s)
                }
            }
        }
        Command::Experiment { config, seed, no_svg } => {
            let mut cfg = ExperimentConfig::from_json(&read(&config)?)
                .with_context(|| format!("parsing {}", config.display()))?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let report = harness::run_experiment(&cfg)?;
            let dir = out.dir.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            let files = harness::write_report(&report, &dir, !no_svg)?;
            let mut stdout = io::stdout().lock();
            match out.format {
                Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&report.aggregates)?)?,
                Format::Csv => {
                    writeln!(stdout, "n,pipeline,n_ok,n_failed,fdr_hat,fdr_se,tdr_hat,mfdr_hat,mtdr_hat,median_rho")?;
                    for a in &report.aggregates {
                        writeln!(
                            stdout,
                            "{},{},{},{},{},{},{},{},{},{}",
                            a.n,
                            a.pipeline.name(),
                            a.n_ok,
                            a.n_failed,
                            opt(a.fdr_hat),
                            opt(a.fdr_se),
                            opt(a.tdr_hat),
                            opt(a.mfdr_hat),
                            opt(a.mtdr_hat),
                            opt(a.median_rho)
                        )?;
                    }
                }
            }
            eprintln!("wrote {} and {}", files.csv.display(), files.summary.display());
            Ok(())
        }
        Command::Report { rows, t } => {
            let rows = harness::read_rows_csv(&rows)?;
            let aggs = harness::aggregate(&rows);
            let svg = harness::fdr_trend_svg(&aggs, t);
            let rho: Vec<(f64, f64)> = aggs
                .iter()
                .filter_map(|a| a.median_rho.map(|r| ((a.n as f64).log10(), r.log10())))
                .collect();
            out.emit("fdr_trend.svg", &svg)?;
            if !rho.is_empty() {
                let chart = harness::line_chart_svg(
                    "Median sup-norm loss",
                    "log10 N",
                    "log10 median loss",
                    &[("full_empirical".to_string(), rho)],
                );
                out.emit("risk_curve.svg", &chart)?;
            }
            Ok(())
        }
    }
}

struct Output<'a> {
    format: Format,
    dir: Option<&'a Path>,
}

impl Output<'_> {
    /// Write `body` to `dir/name`, or to stdout when no directory was given.
    fn emit(&self, name: &str, body: &str) -> Result<()> {
        match self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(name);
                fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            }
            None => {
                let mut stdout = io::stdout().lock();
                stdout.write_all(body.as_bytes())?;
                if !body.ends_with('\n') {
                    stdout.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_params(path: &Path) -> Result<HmmParams> {
    HmmParams::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// One float per line; blank lines and `#` comments are skipped.
fn read_floats(path: &Path) -> Result<Vec<f64>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .with_context(|| format!("{}:{}: not a number: {line:?}", path.display(), i + 1))?;
        if !v.is_finite() {
            bail!("{}:{}: value is not finite", path.display(), i + 1);
        }
        out.push(v);
    }
    Ok(out)
}

fn lines(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}\n")).collect()
}

fn write_lines(path: &Path, v: &[f64]) -> Result<()> {
    fs::write(path, lines(v)).with_context(|| format!("writing {}", path.display()))
}
