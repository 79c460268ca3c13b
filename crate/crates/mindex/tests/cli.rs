use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mindex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mindex"))
        .args(args)
        .env("MINDEX_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn header(p: &Path) -> String {
    fs::read_to_string(p).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn train_with_defaults_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = mindex(&["train", "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = read_json(&dir.path().join("train_report.json"));
    for key in ["schema_version", "effective_config", "seed", "results"] {
        assert!(rep.get(key).is_some(), "missing {key}");
    }
    for key in ["cos_best", "coverage_min", "test_mse", "eigenvalues", "principal_angles"] {
        assert!(rep["results"].get(key).is_some(), "missing results.{key}");
    }
    assert_eq!(rep["effective_config"]["seed"], rep["seed"]);
}

#[test]
fn rerun_from_report_reproduces_results() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let out = mindex(&["train", "-o", first.to_str().unwrap(), "--seed", "9", "--set", "d=16"]);
    assert!(out.status.success());
    let report = first.join("train_report.json");
    let out = mindex(&["train", "-c", report.to_str().unwrap(), "-o", second.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_json(&report);
    let b = read_json(&second.join("train_report.json"));
    assert_eq!(a["results"], b["results"]);
    assert_eq!(b["seed"], 9);
    assert_eq!(b["effective_config"]["d"], 16);
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 3\nd = 8\n[approx]\ngrid = 11\n").unwrap();
    let out = mindex(&[
        "verify-approx",
        "-c",
        cfg.to_str().unwrap(),
        "--seed",
        "7",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rep = read_json(&dir.path().join("verify_approx_report.json"));
    assert_eq!(rep["seed"], 7);
    assert_eq!(rep["effective_config"]["approx"]["grid"], 11);
}

#[test]
fn verify_approx_prints_one_row_per_degree() {
    let dir = tempfile::tempdir().unwrap();
    let out = mindex(&["verify-approx", "--k-max", "6", "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<f64> = stdout
        .lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let k = it.next()?.parse::<u32>().ok()?;
            let e = it.next()?.parse::<f64>().ok()?;
            (k <= 6).then_some(e)
        })
        .collect();
    assert_eq!(rows.len(), 7, "{stdout}");
    assert!(rows.iter().all(|&e| e <= 1e-8));
}

#[test]
fn errors_exit_nonzero_and_name_the_problem() {
    let out = mindex(&["frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let out = mindex(&["train", "-o", o, "--set", "eta1=-1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta1"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[sweep]\nalpha_stride = 0.1\n").unwrap();
    let out = mindex(&["sweep-alpha", "-c", cfg.to_str().unwrap(), "-o", o]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sweep") && err.contains("alpha_stride"), "{err}");

    let out = mindex(&["train", "-c", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn sweeps_write_exact_csv_headers() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let small = [
        "--set", "mode=adam", "--set", "adam.epochs=3",
        "--set", "sweep.d_list=[8]", "--set", "sweep.seeds=2", "--set", "sweep.alpha_max=1.2",
        "--set", "loss_compare.d_list=[8]", "--set", "loss_compare.ratios=[5.0]", "--set", "loss_compare.seeds=2",
        "--set", "noise.d=8", "--set", "noise.log2_n_max=9", "--set", "noise.seeds=2", "--set", "noise.n_mc=10000",
        "--set", "power.d=8", "--set", "power.seeds=1", "--set", "power.n_mc=10000",
    ];
    let cases: [(&str, &[(&str, &str)]); 4] = [
        (
            "sweep-alpha",
            &[
                ("fig1.csv", "d,alpha,epsilon,seed,test_error,achieved"),
                ("fig1_agg.csv", "d,epsilon,mean_min_alpha,n_seeds"),
            ],
        ),
        (
            "loss-compare",
            &[
                ("fig2.csv", "loss,d,ratio,seed,cos_best"),
                ("fig2_agg.csv", "loss,d,ratio,p30,p50,p70"),
            ],
        ),
        ("noise-scaling", &[("noise.csv", "d,n,seed,noise_op_norm")]),
        (
            "power-check",
            &[("power.csv", "d,n,T1,eps0,seed,max_rel_dev_empirical,max_rel_dev_population")],
        ),
    ];
    for (cmd, files) in cases {
        let mut args = vec![cmd, "-o", o];
        args.extend_from_slice(&small);
        let out = mindex(&args);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let rep = read_json(&dir.path().join(format!("{}_report.json", cmd.replace('-', "_"))));
        assert_eq!(rep["files"].as_array().unwrap().len(), files.len());
        for (name, want) in files {
            assert_eq!(header(&dir.path().join(name)), *want, "{name}");
        }
    }
}
