//! Parallel sweeps. Each cell derives its seed from the master seed, the
//! experiment id and the cell coordinates, so results do not depend on how the
//! cells are scheduled.

use rayon::prelude::*;
use serde::Serialize;

use mindex_core::losses::{self, LossFunction};
use mindex_core::network::{init_symmetric, Activation};
use mindex_core::rng::{derive_seed, derive_seed_from};
use mindex_core::spectral::{self, PopulationSigma};
use mindex_core::stats;
use mindex_core::targets::generate_dataset;
use mindex_core::trainer::{self, streams, PlanOverrides};

use crate::commands::{cell_test_mse, train_cell, MC_STREAM};
use crate::config::{LossKind, RunConfig};
use crate::{Error, Result};

pub mod ids {
    pub const MINIMAL_ALPHA: u64 = 1;
    pub const LOSS_COMPARE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const POWER: u64 = 4;
}

pub const FIG1_HEADER: [&str; 6] = ["d", "alpha", "epsilon", "seed", "test_error", "achieved"];
pub const FIG1_AGG_HEADER: [&str; 4] = ["d", "epsilon", "mean_min_alpha", "n_seeds"];
pub const FIG2_HEADER: [&str; 5] = ["loss", "d", "ratio", "seed", "cos_best"];
pub const FIG2_AGG_HEADER: [&str; 6] = ["loss", "d", "ratio", "p30", "p50", "p70"];
pub const NOISE_HEADER: [&str; 4] = ["d", "n", "seed", "noise_op_norm"];
pub const POWER_HEADER: [&str; 7] = [
    "d",
    "n",
    "T1",
    "eps0",
    "seed",
    "max_rel_dev_empirical",
    "max_rel_dev_population",
];

/// Seed of one cell: `(master, experiment, d, n, loss, seed index)`.
pub fn cell_seed(master: u64, experiment: u64, d: usize, n: usize, loss: u64, seed_index: usize) -> u64 {
    derive_seed_from(&[master, experiment, d as u64, n as u64, loss, seed_index as u64])
}

/// A pool capped by `MINDEX_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MINDEX_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Threads(format!("MINDEX_THREADS={v:?} is not a count")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Threads(e.to_string()))
}

fn sample_count(d: usize, alpha: f64) -> usize {
    (d as f64).powf(alpha).floor() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig1Row {
    pub d: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub seed: usize,
    pub test_error: f64,
    pub achieved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig1AggRow {
    pub d: usize,
    pub epsilon: f64,
    /// `"none"` when no seed reached the threshold on the grid.
    pub mean_min_alpha: String,
    /// Seeds that reached the threshold.
    pub n_seeds: usize,
}

/// Minimal achieving exponent of one `(d, seed, ε)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimalAlpha {
    pub d: usize,
    pub epsilon: f64,
    pub seed: usize,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Fig1Output {
    pub rows: Vec<Fig1Row>,
    pub minimal: Vec<MinimalAlpha>,
    pub aggregate: Vec<Fig1AggRow>,
}

impl Fig1Output {
    /// Mean minimal exponent for `(d, ε)`, with misses counted at the censoring
    /// value; `None` when every seed missed.
    pub fn mean_min_alpha(&self, d: usize, epsilon: f64) -> Option<f64> {
        self.aggregate
            .iter()
            .find(|r| r.d == d && r.epsilon == epsilon)
            .and_then(|r| r.mean_min_alpha.parse().ok())
    }
}

/// For every `(d, seed)`, trains at `n = ⌊d^α⌋` for ascending `α` until the test
/// error is at most every `ε`, recording the first achieving exponent per `ε`.
pub fn sweep_minimal_alpha(cfg: &RunConfig) -> Result<Fig1Output> {
    let s = &cfg.sweep;
    let grid = s.alpha_grid();
    let loss = s.loss.build(cfg.loss_delta)?;
    let act: Activation = s.activation.into();
    let jobs: Vec<(usize, usize)> = s
        .d_list
        .iter()
        .flat_map(|&d| (0..s.seeds).map(move |k| (d, k)))
        .collect();

    let per_job: Vec<Result<(Vec<Fig1Row>, Vec<MinimalAlpha>)>> = jobs
        .par_iter()
        .map(|&(d, k)| {
            let target = cfg.target.build(d, s.link)?;
            let mut best: Vec<Option<f64>> = vec![None; s.eps_list.len()];
            let mut rows = Vec::new();
            for &alpha in &grid {
                let n = sample_count(d, alpha);
                let seed = cell_seed(cfg.seed, ids::MINIMAL_ALPHA, d, n, s.loss.id(), k);
                let model = train_cell(cfg, &target, n, act, &loss, s.m, seed)?;
                let err = cell_test_mse(cfg, &model, act, &target, seed)?;
                for (i, &eps) in s.eps_list.iter().enumerate() {
                    if best[i].is_some() {
                        continue;
                    }
                    let achieved = err <= eps;
                    rows.push(Fig1Row {
                        d,
                        alpha,
                        epsilon: eps,
                        seed: k,
                        test_error: err,
                        achieved,
                    });
                    if achieved {
                        best[i] = Some(alpha);
                    }
                }
                if best.iter().all(Option::is_some) {
                    break;
                }
            }
            let minimal = s
                .eps_list
                .iter()
                .zip(best)
                .map(|(&epsilon, alpha)| MinimalAlpha {
                    d,
                    epsilon,
                    seed: k,
                    alpha,
                })
                .collect();
            Ok((rows, minimal))
        })
        .collect();

    let mut out = Fig1Output::default();
    for r in per_job {
        let (rows, minimal) = r?;
        out.rows.extend(rows);
        out.minimal.extend(minimal);
    }
    let censor = s.alpha_max + s.alpha_step;
    for &d in &s.d_list {
        for &epsilon in &s.eps_list {
            let cell: Vec<&MinimalAlpha> = out
                .minimal
                .iter()
                .filter(|m| m.d == d && m.epsilon == epsilon)
                .collect();
            let hits = cell.iter().filter(|m| m.alpha.is_some()).count();
            let mean_min_alpha = if hits == 0 {
                "none".to_string()
            } else {
                let vals: Vec<f64> = cell.iter().map(|m| m.alpha.unwrap_or(censor)).collect();
                format!("{}", stats::mean(&vals)?)
            };
            out.aggregate.push(Fig1AggRow {
                d,
                epsilon,
                mean_min_alpha,
                n_seeds: hits,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig2Row {
    pub loss: &'static str,
    pub d: usize,
    pub ratio: f64,
    pub seed: usize,
    pub cos_best: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig2AggRow {
    pub loss: &'static str,
    pub d: usize,
    pub ratio: f64,
    pub p30: f64,
    pub p50: f64,
    pub p70: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Fig2Output {
    pub rows: Vec<Fig2Row>,
    pub aggregate: Vec<Fig2AggRow>,
}

impl Fig2Output {
    pub fn median(&self, loss: LossKind, d: usize, ratio: f64) -> Option<f64> {
        self.aggregate
            .iter()
            .find(|r| r.loss == loss.label() && r.d == d && r.ratio == ratio)
            .map(|r| r.p50)
    }
}

/// `cos_best` of the trained features for every `(loss, d, n/d, seed)`.
pub fn loss_phase_transition(cfg: &RunConfig) -> Result<Fig2Output> {
    let s = &cfg.loss_compare;
    let act: Activation = s.activation.into();
    let mut cells = Vec::new();
    for &loss in &s.losses {
        for &d in &s.d_list {
            for &ratio in &s.ratios {
                for k in 0..s.seeds {
                    cells.push((loss, d, ratio, k));
                }
            }
        }
    }
    let rows: Vec<Result<Fig2Row>> = cells
        .par_iter()
        .map(|&(loss, d, ratio, k)| {
            let target = cfg.target.build(d, s.link)?;
            let n = ((ratio * d as f64).round() as usize).max(1);
            let seed = cell_seed(cfg.seed, ids::LOSS_COMPARE, d, n, loss.id(), k);
            let lf = loss.build(cfg.loss_delta)?;
            let model = train_cell(cfg, &target, n, act, &lf, s.m, seed)?;
            let cos_best = mindex_core::metrics::cos_best(&model.features, target.subspace())
                .unwrap_or(0.0);
            Ok(Fig2Row {
                loss: loss.label(),
                d,
                ratio,
                seed: k,
                cos_best: if cos_best.is_finite() { cos_best } else { 0.0 },
            })
        })
        .collect();
    let rows: Vec<Fig2Row> = rows.into_iter().collect::<Result<_>>()?;

    let mut aggregate = Vec::new();
    for &loss in &s.losses {
        for &d in &s.d_list {
            for &ratio in &s.ratios {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.loss == loss.label() && r.d == d && r.ratio == ratio)
                    .map(|r| r.cos_best)
                    .collect();
                let p = stats::percentiles(&vals, &[30.0, 50.0, 70.0])?;
                aggregate.push(Fig2AggRow {
                    loss: loss.label(),
                    d,
                    ratio,
                    p30: p[0],
                    p50: p[1],
                    p70: p[2],
                });
            }
        }
    }
    Ok(Fig2Output { rows, aggregate })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseRow {
    pub d: usize,
    pub n: usize,
    pub seed: usize,
    pub noise_op_norm: f64,
}

#[derive(Clone, Debug)]
pub struct NoiseOutput {
    pub rows: Vec<NoiseRow>,
    /// Median norm per sample size, in grid order.
    pub medians: Vec<(usize, f64)>,
    /// Least-squares slope of log median norm against log n.
    pub slope: f64,
    pub population_frobenius_error: f64,
}

/// `‖Σ̂_ℓ − Σ_ℓ‖_op` over a grid of sample sizes, against one Monte-Carlo `Σ_ℓ`.
pub fn noise_norm_scaling(cfg: &RunConfig) -> Result<NoiseOutput> {
    let s = &cfg.noise;
    let d = s.d;
    let target = cfg.target.build(d, s.link)?;
    let loss = s.loss.build(cfg.loss_delta)?;
    let pop = spectral::population_sigma(
        &target,
        &loss,
        s.n_mc,
        derive_seed(cell_seed(cfg.seed, ids::NOISE, d, 0, s.loss.id(), 0), MC_STREAM),
        cfg.center,
    )?;
    let grid = s.n_grid();
    let cells: Vec<(usize, usize)> = grid
        .iter()
        .flat_map(|&n| (0..s.seeds).map(move |k| (n, k)))
        .collect();
    let rows: Vec<Result<NoiseRow>> = cells
        .par_iter()
        .map(|&(n, k)| {
            let seed = cell_seed(cfg.seed, ids::NOISE, d, n, s.loss.id(), k);
            let data = generate_dataset(&target, n, derive_seed(seed, streams::STAGE1_DATA))?;
            let pre = losses::preprocess(&loss, &data.y, cfg.center)?;
            let sigma = spectral::empirical_sigma(&data.x, pre.values())?;
            Ok(NoiseRow {
                d,
                n,
                seed: k,
                noise_op_norm: spectral::noise_norm(&sigma, &pop.sigma)?,
            })
        })
        .collect();
    let rows: Vec<NoiseRow> = rows.into_iter().collect::<Result<_>>()?;
    let mut medians = Vec::new();
    for &n in &grid {
        let vals: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.noise_op_norm).collect();
        medians.push((n, stats::median(&vals)?));
    }
    let lx: Vec<f64> = medians.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ly: Vec<f64> = medians.iter().map(|&(_, v)| v.ln()).collect();
    Ok(NoiseOutput {
        slope: stats::ols_slope(&lx, &ly)?,
        rows,
        medians,
        population_frobenius_error: pop.frobenius_error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerRow {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "T1")]
    pub t1: usize,
    pub eps0: f64,
    pub seed: usize,
    pub max_rel_dev_empirical: f64,
    pub max_rel_dev_population: f64,
}

#[derive(Clone, Debug)]
pub struct PowerOutput {
    pub rows: Vec<PowerRow>,
    /// Default initialization radius per `T₁`.
    pub default_eps0: Vec<(usize, f64)>,
}

impl PowerOutput {
    /// Ratio of the empirical-oracle deviation at scale `hi` to that at `lo`, for
    /// every `(T₁, seed)` that has both.
    pub fn scaling_ratios(&self, t1: usize, hi: f64, lo: f64) -> Vec<f64> {
        let eps = |scale: f64| {
            self.default_eps0
                .iter()
                .find(|&&(t, _)| t == t1)
                .map(|&(_, e)| e * scale)
        };
        let (Some(e_hi), Some(e_lo)) = (eps(hi), eps(lo)) else {
            return Vec::new();
        };
        let at = |e: f64, seed: usize| {
            self.rows
                .iter()
                .find(|r| r.t1 == t1 && r.seed == seed && r.eps0 == e)
                .map(|r| r.max_rel_dev_empirical)
        };
        let seeds: Vec<usize> = self.rows.iter().filter(|r| r.t1 == t1).map(|r| r.seed).collect();
        let mut seen = std::collections::BTreeSet::new();
        seeds
            .into_iter()
            .filter(|s| seen.insert(*s))
            .filter_map(|s| Some(at(e_hi, s)? / at(e_lo, s)?))
            .collect()
    }
}

/// Stage-1 features against the power-iteration oracle built from `Σ̂_ℓ` (the
/// training sample) and from the Monte-Carlo `Σ_ℓ`.
pub fn power_check(cfg: &RunConfig) -> Result<PowerOutput> {
    let s = &cfg.power;
    let d = s.d;
    let n = s.n.unwrap_or(32 * d);
    let target = cfg.target.build(d, s.link)?;
    let loss = s.loss.build(cfg.loss_delta)?;
    let act: Activation = s.activation.into();
    let curvature = act.info().d2_at_zero;
    let pop = spectral::population_sigma(
        &target,
        &loss,
        s.n_mc,
        derive_seed(cell_seed(cfg.seed, ids::POWER, d, 0, s.loss.id(), 0), MC_STREAM),
        true,
    )?;

    let mut default_eps0 = Vec::new();
    let mut cells = Vec::new();
    for &t1 in &s.t1_list {
        let ov = PlanOverrides {
            t1: Some(t1),
            ..cfg.plan_overrides()
        };
        let ov = PlanOverrides {
            eta1: None,
            beta1: None,
            eps0: None,
            ..ov
        };
        let (plan, _) = trainer::default_hyperparams(d, cfg.kappa, target.r(), n, s.m, &ov)?;
        default_eps0.push((t1, plan.eps0));
        for &scale in &s.eps0_scales {
            for k in 0..s.seeds {
                cells.push((plan.clone(), scale, k));
            }
        }
    }

    let rows: Vec<Result<PowerRow>> = cells
        .par_iter()
        .map(|(plan, scale, k)| {
            let seed = cell_seed(cfg.seed, ids::POWER, d, n, s.loss.id(), *k);
            power_cell(&target, n, &loss, act, curvature, &pop, plan, *scale, seed).map(
                |(emp, popdev, eps0)| PowerRow {
                    d,
                    n,
                    t1: plan.t1,
                    eps0,
                    seed: *k,
                    max_rel_dev_empirical: emp,
                    max_rel_dev_population: popdev,
                },
            )
        })
        .collect();
    Ok(PowerOutput {
        rows: rows.into_iter().collect::<Result<_>>()?,
        default_eps0,
    })
}

#[allow(clippy::too_many_arguments)]
fn power_cell(
    target: &mindex_core::MultiIndexTarget,
    n: usize,
    loss: &LossFunction,
    act: Activation,
    curvature: f64,
    pop: &PopulationSigma,
    plan: &mindex_core::TrainPlan,
    scale: f64,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let mut plan = plan.clone();
    plan.eps0 *= scale;
    let data = generate_dataset(target, n, derive_seed(seed, streams::STAGE1_DATA))?;
    let shift = losses::balancing_shift(loss, &data.y)?;
    let data = data.with_shifted_labels(shift);
    // Same directions at every radius: the init seed ignores the scale.
    let init = init_symmetric(plan.m, target.d(), plan.eps0, derive_seed(seed, streams::INIT))?;
    let s1 = trainer::train_stage1(&init, &data, act, loss, &plan, false)?;

    // The gradient at the zero network sees the uncentered values of the shifted labels.
    let pre = losses::preprocess(loss, &data.y, false)?;
    let sigma_hat = spectral::empirical_sigma(&data.x, pre.values())?;
    let eta = plan.eta1 * curvature;
    let emp = spectral::oracle_features(&init.w, &init.a, &sigma_hat, eta, plan.t1, plan.eps0)?;
    let popo = spectral::oracle_features(&init.w, &init.a, &pop.sigma, eta, plan.t1, plan.eps0)?;
    Ok((
        spectral::deviation_report(&s1.params.w, &emp)?.max,
        spectral::deviation_report(&s1.params.w, &popo)?.max,
        plan.eps0,
    ))
}
