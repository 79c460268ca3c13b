//! Single runs: one training job, one spectral report, the monomial check.

use serde_json::{json, Value};

use mindex_core::approx::{monomial_error, uniform_grid};
use mindex_core::losses::{self, LossFunction};
use mindex_core::metrics::{self, ErrorMetric};
use mindex_core::network::{init_kaiming, Activation, NetworkParams};
use mindex_core::rng::derive_seed;
use mindex_core::spectral::{self, RankRule};
use mindex_core::targets::{generate_dataset, MultiIndexTarget};
use mindex_core::trainer::{self, streams, TrainPlan, Warning};
use mindex_core::Matrix;

use crate::config::{Mode, RunConfig};
use crate::report::{num, nums};
use crate::Result;

/// Stream for the Monte-Carlo population matrix, alongside the trainer's streams.
pub const MC_STREAM: u64 = 7;

/// The Algorithm-1 plan for a problem, with every config override applied.
pub fn algorithm1_plan(
    cfg: &RunConfig,
    target: &MultiIndexTarget,
    n: usize,
    m: usize,
    loss: &LossFunction,
) -> Result<(TrainPlan, Vec<Warning>)> {
    let (mut plan, warnings) =
        trainer::default_hyperparams(target.d(), cfg.kappa, target.r(), n, m, &cfg.plan_overrides())?;
    plan.t2_tol = cfg.t2_tol;
    plan.balance_labels = cfg.balance_labels;
    plan.n_test = cfg.n_test;
    if let Some(cf) = &cfg.stage2_closed_form {
        let lip = loss.derivative_bound().unwrap_or(1.0);
        plan = plan.with_closed_form_stage2(cf.j, cf.u, lip)?;
    }
    Ok((plan, warnings))
}

/// A trained network and the first-layer features used for recovery metrics.
#[derive(Clone, Debug)]
pub struct CellModel {
    pub params: NetworkParams,
    pub features: Matrix,
}

/// Trains one sweep cell in the configured mode from a cell seed.
pub fn train_cell(
    cfg: &RunConfig,
    target: &MultiIndexTarget,
    n: usize,
    act: Activation,
    loss: &LossFunction,
    m: usize,
    seed: u64,
) -> Result<CellModel> {
    match cfg.mode {
        Mode::Adam => {
            let data = generate_dataset(target, n, derive_seed(seed, streams::STAGE1_DATA))?;
            let init = init_kaiming(m, target.d(), derive_seed(seed, streams::INIT))?;
            let out = trainer::train_adam(
                &init,
                &data,
                act,
                loss,
                &cfg.adam.to_core(),
                derive_seed(seed, streams::SHUFFLE),
            )?;
            Ok(CellModel {
                features: out.params.w.clone(),
                params: out.params,
            })
        }
        Mode::Algorithm1 => {
            let (plan, _) = algorithm1_plan(cfg, target, n, m, loss)?;
            let rep = trainer::run_algorithm1(target, n, act, loss, &plan, seed, false)?;
            Ok(CellModel {
                params: rep.params,
                features: rep.features,
            })
        }
    }
}

/// Test MSE of a cell model on fresh inputs from the cell seed's test stream.
pub fn cell_test_mse(
    cfg: &RunConfig,
    model: &CellModel,
    act: Activation,
    target: &MultiIndexTarget,
    seed: u64,
) -> Result<f64> {
    Ok(metrics::test_error(
        &model.params,
        act,
        target,
        ErrorMetric::Mse,
        cfg.n_test,
        derive_seed(seed, streams::TEST),
    )?)
}

fn params_json(p: &NetworkParams) -> Value {
    let w: Vec<Value> = p.w.row_iter().map(nums).collect();
    json!({ "a": nums(&p.a), "b": nums(&p.b), "w": w })
}

fn recovery_json(rec: &metrics::RecoveryReport) -> Value {
    json!({
        "cos_best": num(rec.cos_best),
        "coverage_min": num(rec.coverage_min),
        "per_direction": nums(&rec.per_direction),
        "principal_angles": nums(&rec.principal_angles),
    })
}

fn merge_into(dst: &mut Value, src: Value) {
    if let (Value::Object(d), Value::Object(s)) = (dst, src) {
        d.extend(s);
    }
}

/// `train`: one run in the configured mode on the top-level problem.
pub fn train(cfg: &RunConfig) -> Result<Value> {
    let target = cfg.target_for(cfg.d)?;
    let loss = cfg.loss_function()?;
    let act: Activation = cfg.activation.into();
    let n = cfg.n_samples();
    match cfg.mode {
        Mode::Algorithm1 => {
            let (plan, mut warnings) = algorithm1_plan(cfg, &target, n, cfg.m, &loss)?;
            let rep = trainer::run_algorithm1(&target, n, act, &loss, &plan, cfg.seed, cfg.snapshots)?;
            warnings.extend(rep.warnings.iter().cloned());
            let mut out = recovery_json(&rep.recovery);
            let snapshots: Vec<Value> = rep
                .snapshots
                .iter()
                .map(|w| Value::Array(w.row_iter().map(nums).collect()))
                .collect();
            merge_into(
                &mut out,
                json!({
                    "mode": "algorithm1",
                    "n": n,
                    "test_mse": num(rep.test_mse),
                    "null_mse": rep.null_mse.map(num),
                    "eigenvalues": nums(&rep.eigenvalues),
                    "label_shift": num(rep.label_shift),
                    "stage1_losses": nums(&rep.stage1_losses),
                    "stage2_steps": rep.stage2_steps,
                    "stage2_final_objective": rep.stage2_objective.last().copied().map(num),
                    "eta2_used": num(rep.eta2_used),
                    "plan": {
                        "m": plan.m,
                        "T1": plan.t1,
                        "eta1": num(plan.eta1),
                        "beta1": num(plan.beta1()),
                        "eps0": num(plan.eps0),
                        "beta2": num(plan.beta2),
                        "T2": plan.t2,
                    },
                    "snapshots": snapshots,
                    "params": params_json(&rep.params),
                    "warnings": warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
                }),
            );
            Ok(out)
        }
        Mode::Adam => {
            let data = generate_dataset(&target, n, derive_seed(cfg.seed, streams::STAGE1_DATA))?;
            let pre = losses::preprocess(&loss, &data.y, cfg.center)?;
            let sigma = spectral::empirical_sigma(&data.x, pre.values())?;
            let eig = spectral::eigen_report(&sigma, rank_rule(cfg))?;
            let init = init_kaiming(cfg.m, cfg.d, derive_seed(cfg.seed, streams::INIT))?;
            let rep = trainer::train_adam(
                &init,
                &data,
                act,
                &loss,
                &cfg.adam.to_core(),
                derive_seed(cfg.seed, streams::SHUFFLE),
            )?;
            let rec = metrics::recovery_report(&rep.params.w, target.subspace())?;
            let test_mse = metrics::test_error(
                &rep.params,
                act,
                &target,
                ErrorMetric::Mse,
                cfg.n_test,
                derive_seed(cfg.seed, streams::TEST),
            )?;
            let mut out = recovery_json(&rec);
            merge_into(
                &mut out,
                json!({
                    "mode": "adam",
                    "n": n,
                    "test_mse": num(test_mse),
                    "null_mse": target.link().second_moment().map(num),
                    "eigenvalues": nums(&eig.eigenvalues),
                    "epoch_losses": nums(&rep.epoch_losses),
                    "adam_steps": rep.steps,
                    "params": params_json(&rep.params),
                    "warnings": Vec::<String>::new(),
                }),
            );
            Ok(out)
        }
    }
}

pub fn rank_rule(cfg: &RunConfig) -> RankRule {
    match cfg.spectral.rank {
        Some(r) => RankRule::Fixed(r),
        None => RankRule::Threshold(cfg.spectral.tau),
    }
}

/// `spectral`: eigen-structure of `Σ̂_ℓ`, its distance to the Monte-Carlo `Σ_ℓ`,
/// and the alignment of the leading eigenspace with the hidden subspace.
pub fn spectral_report(cfg: &RunConfig) -> Result<Value> {
    let target = cfg.target_for(cfg.d)?;
    let loss = cfg.loss_function()?;
    let n = cfg.n_samples();
    let data = generate_dataset(&target, n, derive_seed(cfg.seed, streams::STAGE1_DATA))?;
    let pre = losses::preprocess(&loss, &data.y, cfg.center)?;
    let sigma_hat = spectral::empirical_sigma(&data.x, pre.values())?;
    let eig = spectral::eigen_report(&sigma_hat, rank_rule(cfg))?;
    let pop = spectral::population_sigma(
        &target,
        &loss,
        cfg.spectral.n_mc,
        derive_seed(cfg.seed, MC_STREAM),
        cfg.center,
    )?;
    let noise = spectral::noise_norm(&sigma_hat, &pop.sigma)?;
    let pop_eig = spectral::eigen_report(&pop.sigma, rank_rule(cfg))?;
    let principal = if eig.r_hat > 0 {
        metrics::principal_angles(&eig.top_basis(), target.subspace())?
    } else {
        Vec::new()
    };
    // Cosine of the largest principal angle.
    let alignment = principal
        .iter()
        .copied()
        .reduce(f64::max)
        .map(|a| num(a.cos()));
    Ok(json!({
        "n": n,
        "eigenvalues": nums(&eig.eigenvalues),
        "r_hat": eig.r_hat,
        "kappa_hat": eig.kappa_hat.map(num),
        "degenerate": eig.degenerate,
        "noise_norm": num(noise),
        "alignment_to_U": alignment,
        "principal_angles": nums(&principal),
        "population": {
            "eigenvalues": nums(&pop_eig.eigenvalues),
            "op_norm": num(pop.sigma.op_norm()?),
            "off_subspace_norm": num(spectral::off_subspace_norm(&pop.sigma, target.subspace())?),
            "frobenius_error": num(pop.frobenius_error),
            "mean_preproc": num(pop.mean_preproc),
            "n_mc": pop.n_mc,
        },
    }))
}

/// `verify-approx`: `(k, max error)` for `k = 0..=k_max`.
pub fn verify_approx(k_max: u32, grid: usize, quad_order: usize) -> Result<Vec<(u32, f64)>> {
    let z = uniform_grid(grid);
    (0..=k_max)
        .map(|k| Ok((k, monomial_error(k, &z, quad_order)?)))
        .collect()
}

pub fn approx_json(rows: &[(u32, f64)], grid: usize, quad_order: usize) -> Value {
    let table: Vec<Value> = rows
        .iter()
        .map(|&(k, e)| json!({ "k": k, "max_error": num(e) }))
        .collect();
    json!({ "grid": grid, "quad_order": quad_order, "table": table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            d: 8,
            n: Some(200),
            m: 4,
            t2: 200,
            n_test: 500,
            ..RunConfig::default()
        }
    }

    #[test]
    fn train_report_has_required_keys() {
        let out = train(&small()).unwrap();
        for key in ["cos_best", "coverage_min", "test_mse", "eigenvalues", "principal_angles"] {
            assert!(out.get(key).is_some(), "missing {key}");
        }
        assert_eq!(out["eigenvalues"].as_array().unwrap().len(), 8);
    }

    #[test]
    fn adam_mode_trains() {
        let cfg = RunConfig {
            mode: Mode::Adam,
            adam: crate::config::AdamSection {
                epochs: 3,
                ..Default::default()
            },
            ..small()
        };
        let out = train(&cfg).unwrap();
        assert_eq!(out["adam_steps"].as_u64().unwrap(), 3 * 200usize.div_ceil(32) as u64);
    }

    #[test]
    fn spectral_report_finds_quad2d_subspace() {
        let cfg = RunConfig {
            d: 8,
            n: Some(20_000),
            spectral: crate::config::SpectralSection {
                n_mc: 20_000,
                ..Default::default()
            },
            ..RunConfig::default()
        };
        let out = spectral_report(&cfg).unwrap();
        assert_eq!(out["r_hat"], 2);
        assert!(out["alignment_to_U"].as_f64().unwrap() > 0.95);
        assert!(out["noise_norm"].as_f64().unwrap() < 0.2);
    }

    #[test]
    fn approx_table_has_one_row_per_degree() {
        let rows = verify_approx(6, 41, 64).unwrap();
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|&(_, e)| e <= 1e-8));
    }
}
