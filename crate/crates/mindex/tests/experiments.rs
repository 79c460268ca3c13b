use mindex::config::{Mode, RunConfig};
use mindex::experiments::{self, power_check};
use mindex_core::stats;

fn adam_sweep(d_list: Vec<usize>, eps: Vec<f64>) -> RunConfig {
    let mut cfg = RunConfig {
        mode: Mode::Adam,
        n_test: 2000,
        ..RunConfig::default()
    };
    cfg.sweep.d_list = d_list;
    cfg.sweep.eps_list = eps;
    cfg.sweep.seeds = 2;
    cfg.adam.epochs = 200;
    cfg
}

#[test]
fn unreachable_threshold_gives_sentinel() {
    let mut cfg = adam_sweep(vec![8], vec![1e-30]);
    cfg.sweep.alpha_max = 1.3;
    let out = experiments::sweep_minimal_alpha(&cfg).unwrap();
    assert_eq!(out.aggregate.len(), 1);
    assert_eq!(out.aggregate[0].mean_min_alpha, "none");
    assert_eq!(out.aggregate[0].n_seeds, 0);
    // every grid point was tried for both seeds
    assert_eq!(out.rows.len(), 2 * cfg.sweep.alpha_grid().len());
    assert!(out.rows.iter().all(|r| !r.achieved));
}

#[test]
fn stricter_threshold_needs_no_smaller_exponent() {
    let cfg = adam_sweep(vec![16], vec![1.0, 0.1, 0.01]);
    let out = experiments::sweep_minimal_alpha(&cfg).unwrap();
    for seed in 0..2 {
        let alpha = |eps: f64| {
            out.minimal
                .iter()
                .find(|m| m.seed == seed && m.epsilon == eps)
                .unwrap()
                .alpha
                .unwrap_or(f64::INFINITY)
        };
        assert!(alpha(0.01) >= alpha(0.1) && alpha(0.1) >= alpha(1.0));
    }
}

#[test]
fn cells_do_not_depend_on_thread_count() {
    let mut cfg = RunConfig {
        mode: Mode::Adam,
        ..RunConfig::default()
    };
    cfg.loss_compare.d_list = vec![8, 12];
    cfg.loss_compare.ratios = vec![5.0, 10.0];
    cfg.loss_compare.seeds = 2;
    cfg.adam.epochs = 10;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| experiments::loss_phase_transition(&cfg).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.aggregate, b.aggregate);
    assert_eq!(a.rows.len(), 2 * 2 * 2 * 2);
}

#[test]
fn noise_norm_shrinks_with_n_and_grows_with_d() {
    let mut cfg = RunConfig::default();
    cfg.noise.d = 16;
    cfg.noise.seeds = 6;
    cfg.noise.n_mc = 1 << 17;
    let out = experiments::noise_norm_scaling(&cfg).unwrap();
    let (lo, hi) = (1usize << 8, 1usize << 14);
    for k in 0..6 {
        let at = |n: usize| out.rows.iter().find(|r| r.n == n && r.seed == k).unwrap().noise_op_norm;
        assert!(at(hi) < at(lo));
    }

    let median_at = |d: usize| {
        let mut c = cfg.clone();
        c.noise.d = d;
        c.noise.log2_n_min = 10;
        c.noise.log2_n_max = 11;
        let out = experiments::noise_norm_scaling(&c).unwrap();
        out.medians[0].1
    };
    assert!(median_at(32) > median_at(16));
}

#[test]
fn one_step_matches_empirical_oracle_at_tiny_radius() {
    let mut cfg = RunConfig::default();
    cfg.power.d = 16;
    cfg.power.t1_list = vec![1];
    cfg.power.seeds = 2;
    cfg.power.n_mc = 20_000;
    cfg.power.eps0_scales = vec![1.0];
    let default_eps0 = power_check(&cfg).unwrap().default_eps0[0].1;
    cfg.power.eps0_scales = vec![1e-8 / default_eps0];
    let out = power_check(&cfg).unwrap();
    for r in &out.rows {
        assert!((r.eps0 - 1e-8).abs() < 1e-20);
        assert!(r.max_rel_dev_empirical <= 1e-3, "{r:?}");
    }
}

#[test]
fn population_deviation_falls_with_n() {
    let median_dev = |n: usize| {
        let mut cfg = RunConfig::default();
        cfg.power.d = 16;
        cfg.power.n = Some(n);
        cfg.power.seeds = 5;
        cfg.power.n_mc = 1 << 19;
        cfg.power.eps0_scales = vec![1.0];
        let out = power_check(&cfg).unwrap();
        let v: Vec<f64> = out.rows.iter().map(|r| r.max_rel_dev_population).collect();
        stats::median(&v).unwrap()
    };
    assert!(median_dev(16 * 512) < median_dev(16 * 32));
}
