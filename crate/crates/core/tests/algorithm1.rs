use mindex_core::losses::LossFunction;
use mindex_core::network::Activation;
use mindex_core::spectral::{self, RankRule};
use mindex_core::targets::{generate_dataset, HiddenSubspace, LinkFunction, MultiIndexTarget, SubspaceMode};
use mindex_core::trainer::{default_hyperparams, run_algorithm1, PlanOverrides};
use mindex_core::{losses, metrics};

fn quad2d(d: usize, seed: u64) -> MultiIndexTarget {
    let u = HiddenSubspace::new(d, 2, SubspaceMode::Random { seed }).unwrap();
    MultiIndexTarget::new(u, LinkFunction::Quad2d).unwrap()
}

#[test]
fn recovers_a_rotated_subspace_and_beats_the_null_predictor() {
    let d = 16;
    let n = 4 * 64;
    let target = quad2d(d, 1);
    let (plan, warnings) = default_hyperparams(d, 1.0, 2, n * 4, 16, &PlanOverrides::default()).unwrap();
    assert!(warnings.is_empty());
    let rep = run_algorithm1(&target, n * 4, Activation::CubedSmooth, &LossFunction::Square, &plan, 3, false).unwrap();
    assert!(rep.recovery.cos_best > 0.9, "{:?}", rep.recovery);
    // The features span U even when single neurons favor the top direction.
    assert!(rep.recovery.principal_angles.iter().all(|&a| a < 0.2), "{:?}", rep.recovery);
    assert!(rep.test_mse < rep.null_mse.unwrap());
    assert_eq!(rep.stage1_losses.len(), plan.t1);
}

#[test]
fn identical_seeds_give_identical_runs() {
    let target = quad2d(10, 2);
    let (plan, _) = default_hyperparams(10, 1.0, 2, 300, 8, &PlanOverrides::default()).unwrap();
    let loss = LossFunction::huber(1.0).unwrap();
    let a = run_algorithm1(&target, 300, Activation::CubedSmooth, &loss, &plan, 5, true).unwrap();
    let b = run_algorithm1(&target, 300, Activation::CubedSmooth, &loss, &plan, 5, true).unwrap();
    assert_eq!(a, b);
    let c = run_algorithm1(&target, 300, Activation::CubedSmooth, &loss, &plan, 6, true).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn empirical_spectrum_concentrates_on_the_hidden_directions() {
    let target = quad2d(12, 4);
    let data = generate_dataset(&target, 40_000, 9).unwrap();
    let pre = losses::preprocess(&LossFunction::Square, &data.y, true).unwrap();
    let sigma = spectral::empirical_sigma(&data.x, pre.values()).unwrap();
    let rep = spectral::eigen_report(&sigma, RankRule::default()).unwrap();
    assert_eq!(rep.r_hat, 2);
    let kappa = rep.kappa_hat.unwrap();
    // eigenvalues 2/√2.5 and 1/√2.5
    assert!((kappa - 2.0).abs() < 0.2, "{kappa}");
    let angles = metrics::principal_angles(&rep.top_basis(), target.subspace()).unwrap();
    assert!(angles.iter().all(|a| a.cos() > 0.97), "{angles:?}");
}

#[test]
fn too_few_samples_look_like_random_features() {
    let d = 64;
    let n = 12;
    let m = 8;
    let target = MultiIndexTarget::axis_aligned(d, LinkFunction::Quad2d).unwrap();
    let (plan, _) = default_hyperparams(d, 1.0, 2, n, m, &PlanOverrides::default()).unwrap();
    let trained: Vec<f64> = (0..7)
        .map(|s| {
            let rep = run_algorithm1(&target, n, Activation::CubedSmooth, &LossFunction::Square, &plan, s, false)
                .unwrap();
            rep.recovery.cos_best
        })
        .collect();

    // cos_best of m Gaussian directions against the same subspace.
    let mut g = mindex_core::rng::seeded(77);
    let baseline: Vec<f64> = (0..400)
        .map(|_| {
            let w = mindex_core::Matrix::from_vec(m, d, mindex_core::rng::gaussian_vec(&mut g, m * d)).unwrap();
            metrics::cos_best(&w, target.subspace()).unwrap()
        })
        .collect();
    let p99 = mindex_core::stats::percentile(&baseline, 99.0).unwrap();
    let median = mindex_core::stats::median(&trained).unwrap();
    assert!(median <= p99, "trained median {median} vs random p99 {p99}");
}
