//! Command-line parsing and subcommand dispatch.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands;
use crate::config::{parse_config, ConfigSource, RunConfig};
use crate::experiments::{self, *};
use crate::report::{self, num};
use crate::Result;

#[derive(Debug, Parser)]
#[command(name = "mindex", version, about = "Layer-wise training of two-layer networks on Gaussian multi-index targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config file, or a JSON report to re-run from its `effective_config`.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
    /// `key=value` override; dotted keys address sections, e.g. `adam.lr=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl Common {
    fn source(&self) -> ConfigSource {
        ConfigSource {
            file: self.config.clone(),
            sets: self.sets.clone(),
            seed: self.seed,
            output_dir: self.output_dir.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network and write `train_report.json`.
    Train(Common),
    /// Minimal sample exponent sweep: `fig1.csv`, `fig1_agg.csv`.
    SweepAlpha(Common),
    /// Alignment against sample ratio for several losses: `fig2.csv`, `fig2_agg.csv`.
    LossCompare(Common),
    /// Spectrum of the label-weighted second moment: `spectral_report.json`.
    Spectral(Common),
    /// Monomial reproduction error of the locally quadratic activation.
    VerifyApprox {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_max: Option<u32>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        quad_order: Option<usize>,
    },
    /// Stage-1 features against the power-iteration oracle: `power.csv`.
    PowerCheck(Common),
    /// Sampling noise of the second-moment matrix against n: `noise.csv`.
    NoiseScaling(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::SweepAlpha(_) => "sweep-alpha",
            Command::LossCompare(_) => "loss-compare",
            Command::Spectral(_) => "spectral",
            Command::VerifyApprox { .. } => "verify-approx",
            Command::PowerCheck(_) => "power-check",
            Command::NoiseScaling(_) => "noise-scaling",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Train(c)
            | Command::SweepAlpha(c)
            | Command::LossCompare(c)
            | Command::Spectral(c)
            | Command::PowerCheck(c)
            | Command::NoiseScaling(c) => c,
            Command::VerifyApprox { common, .. } => common,
        }
    }

    /// The effective configuration, including subcommand-specific flags.
    pub fn config(&self) -> Result<RunConfig> {
        let mut src = self.common().source();
        if let Command::VerifyApprox {
            k_max,
            grid,
            quad_order,
            ..
        } = self
        {
            for (key, v) in [
                ("approx.k_max", k_max.map(|v| v as u64)),
                ("approx.grid", grid.map(|v| v as u64)),
                ("approx.quad_order", quad_order.map(|v| v as u64)),
            ] {
                if let Some(v) = v {
                    src.sets.push(format!("{key}={v}"));
                }
            }
        }
        Ok(parse_config(&src)?)
    }
}

/// Files written by one run, relative to the output directory.
#[derive(Debug, Default)]
pub struct Outcome {
    pub report: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn csv_out<R: Serialize>(dir: &Path, name: &str, header: &[&str], rows: &[R], files: &mut Vec<(String, String)>) -> Result<PathBuf> {
    let path = dir.join(name);
    report::write_csv(&path, header, rows)?;
    files.push((name.to_string(), report::sha256_file(&path)?));
    Ok(path)
}

/// Runs one subcommand and writes its artifacts under `cfg.output_dir`.
pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let dir = cfg.output_dir.clone();
    report::ensure_dir(&dir)?;
    let pool = experiments::thread_pool()?;
    let mut files = Vec::new();
    let mut paths = Vec::new();
    let (stem, results, summary) = pool.install(|| -> Result<(&str, Value, String)> {
        Ok(match cmd {
            Command::Train(_) => {
                let r = commands::train(cfg)?;
                let s = format!(
                    "cos_best {} coverage_min {} test_mse {}",
                    r["cos_best"], r["coverage_min"], r["test_mse"]
                );
                ("train", r, s)
            }
            Command::Spectral(_) => {
                let r = commands::spectral_report(cfg)?;
                let s = format!(
                    "r_hat {} kappa_hat {} noise_norm {} alignment_to_U {}",
                    r["r_hat"], r["kappa_hat"], r["noise_norm"], r["alignment_to_U"]
                );
                ("spectral", r, s)
            }
            Command::VerifyApprox { .. } => {
                let a = &cfg.approx;
                let rows = commands::verify_approx(a.k_max, a.grid, a.quad_order)?;
                let mut s = String::from("k  max_error\n");
                for (k, e) in &rows {
                    s.push_str(&format!("{k:<2} {e:.3e}\n"));
                }
                ("verify_approx", commands::approx_json(&rows, a.grid, a.quad_order), s)
            }
            Command::SweepAlpha(_) => {
                let out = sweep_minimal_alpha(cfg)?;
                paths.push(csv_out(&dir, "fig1.csv", &FIG1_HEADER, &out.rows, &mut files)?);
                paths.push(csv_out(&dir, "fig1_agg.csv", &FIG1_AGG_HEADER, &out.aggregate, &mut files)?);
                let agg: Vec<Value> = out
                    .aggregate
                    .iter()
                    .map(|r| json!({ "d": r.d, "epsilon": r.epsilon, "mean_min_alpha": r.mean_min_alpha, "n_seeds": r.n_seeds }))
                    .collect();
                let s = out
                    .aggregate
                    .iter()
                    .map(|r| format!("d {} eps {} mean_min_alpha {} ({} seeds)", r.d, r.epsilon, r.mean_min_alpha, r.n_seeds))
                    .collect::<Vec<_>>()
                    .join("\n");
                ("sweep_alpha", json!({ "aggregate": agg, "rows": out.rows.len() }), s)
            }
            Command::LossCompare(_) => {
                let out = loss_phase_transition(cfg)?;
                paths.push(csv_out(&dir, "fig2.csv", &FIG2_HEADER, &out.rows, &mut files)?);
                paths.push(csv_out(&dir, "fig2_agg.csv", &FIG2_AGG_HEADER, &out.aggregate, &mut files)?);
                let agg = serde_json::to_value(&out.aggregate).unwrap_or(Value::Null);
                let s = out
                    .aggregate
                    .iter()
                    .map(|r| format!("{} d {} n/d {} median cos_best {:.3}", r.loss, r.d, r.ratio, r.p50))
                    .collect::<Vec<_>>()
                    .join("\n");
                ("loss_compare", json!({ "aggregate": agg }), s)
            }
            Command::NoiseScaling(_) => {
                let out = noise_norm_scaling(cfg)?;
                paths.push(csv_out(&dir, "noise.csv", &NOISE_HEADER, &out.rows, &mut files)?);
                let medians: Vec<Value> = out
                    .medians
                    .iter()
                    .map(|&(n, v)| json!({ "n": n, "median": num(v) }))
                    .collect();
                let s = format!("slope of log median norm vs log n: {:.3}", out.slope);
                (
                    "noise_scaling",
                    json!({
                        "slope": num(out.slope),
                        "medians": medians,
                        "population_frobenius_error": num(out.population_frobenius_error),
                    }),
                    s,
                )
            }
            Command::PowerCheck(_) => {
                let out = power_check(cfg)?;
                paths.push(csv_out(&dir, "power.csv", &POWER_HEADER, &out.rows, &mut files)?);
                let max = out.rows.iter().map(|r| r.max_rel_dev_empirical).fold(0.0, f64::max);
                let eps: Vec<Value> = out
                    .default_eps0
                    .iter()
                    .map(|&(t, e)| json!({ "T1": t, "eps0": num(e) }))
                    .collect();
                let s = format!("max relative deviation from the empirical oracle: {max:.3e}");
                (
                    "power_check",
                    json!({ "default_eps0": eps, "max_rel_dev_empirical": num(max) }),
                    s,
                )
            }
        })
    })?;
    let report_path = dir.join(format!("{stem}_report.json"));
    report::write_json(&report_path, &report::envelope(cfg, results, &files, start.elapsed()))?;
    Ok(Outcome {
        report: report_path,
        files: paths,
        summary,
    })
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    let result = cli.command.config().and_then(|cfg| dispatch(&cli.command, &cfg));
    match result {
        Ok(out) => {
            println!("{}", out.summary.trim_end());
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            println!("wrote {}", out.report.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
