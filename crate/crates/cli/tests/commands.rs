use std::fs;
use std::path::Path;
use std::process::Command;

use dagnet::convergence::trajectory_from_csv;
use dagnet::gradients::evaluate_batch;
use dagnet::WeightSet;
use dagnet_cli::commands::{
    prepare_data, run_compare, run_gradcheck, run_training, run_verify, write_training_artifacts, VerifyRequest,
};
use dagnet_cli::RunConfig;

fn config(overrides: &[&str]) -> RunConfig {
    let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::from_toml_with("", &owned).unwrap()
}

fn dagnet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dagnet")).args(args).output().unwrap()
}

fn out_arg(dir: &Path) -> String {
    format!("output_dir={:?}", dir.to_str().unwrap())
}

#[test]
fn budget_of_one_is_a_plain_gradient_step() {
    let c = config(&["widths=[3, 4, 2]", "iterations=1", "eta=0.05"]);
    let report = run_training(&c).unwrap();
    assert_eq!(report.outcome.trajectory.len(), 1);
    let (_, rows) = trajectory_from_csv(&report.trajectory_csv).unwrap();
    assert_eq!(rows.len(), 1);

    let t = c.build_topology().unwrap();
    let data = prepare_data(&c, &t, c.activation().unwrap()).unwrap();
    let w0 = WeightSet::seeded(&t, c.init_scale, c.seed);
    let g = evaluate_batch(&t, &w0, c.activation().unwrap(), &data.inputs, &data.targets)
        .unwrap()
        .gradients;
    let mut expected = w0.clone();
    expected.add_scaled(-c.eta, &g.per_edge).unwrap();
    assert_eq!(report.outcome.weights, expected);
}

#[test]
fn train_writes_artifacts_with_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = dagnet(&["train", "--set", "widths=[2, 3, 1]", "--set", "iterations=50", "--set", &out_arg(&out)]);
    assert!(output.status.code().is_some_and(|c| c == 0 || c == 2));
    let hash = config(&["widths=[2, 3, 1]", "iterations=50", &out_arg(&out)]).hash();
    for name in ["config.toml", "topology.toml", "weights.txt", "trajectory.csv", "verdict.json"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        if name != "topology.toml" {
            assert!(text.contains(&hash), "{name} lacks the config hash");
        }
    }
    let verdict: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
    let converged = verdict["converged"].as_bool().unwrap();
    assert_eq!(output.status.code(), Some(if converged { 0 } else { 2 }));
}

#[test]
fn invalid_topology_fails_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("bad.toml");
    fs::write(&topo, "widths = [2, 3, 1]\nedges = [[0, 1], [2, 1]]\n").unwrap();
    let out = dir.path().join("run");
    let output = dagnet(&[
        "train",
        "--set",
        &format!("topology={:?}", topo.to_str().unwrap()),
        "--set",
        &out_arg(&out),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));
    assert!(!out.exists());
}

#[test]
fn invalid_hyperparameters_exit_nonzero() {
    let output = dagnet(&["train", "--set", "widths=[2, 1]", "--set", "s=1.5"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn gradcheck_small_network() {
    let r = run_gradcheck(&config(&["widths=[3, 4, 2, 2]", "samples=5"])).unwrap();
    assert!(r.passed && !r.near_zero, "{r:?}");
    assert!(r.max_relative_error < 1e-6);

    let output = dagnet(&["gradcheck", "--set", "widths=[2, 3, 1]", "--set", "activation=\"logistic\""]);
    assert_eq!(output.status.code(), Some(0));
}

#[test]
fn gradcheck_zero_residual_uses_absolute_mode() {
    // student initialised exactly as the teacher
    let r = run_gradcheck(&config(&["widths=[2, 3, 1]", "init_scale=0.5", "teacher_scale=0.5", "seed=4", "data_seed=4"]))
        .unwrap();
    assert!(r.near_zero && r.passed, "{r:?}");
    assert!(r.max_absolute_error < 1e-10);
}

#[test]
fn gradcheck_linear_closed_form() {
    let c = config(&[
        "widths=[2, 1]",
        "activation=\"identity\"",
        "allow_unchecked=true",
        "samples=6",
        "seed=11",
    ]);
    assert!(run_gradcheck(&c).unwrap().passed);
    let t = c.build_topology().unwrap();
    let data = prepare_data(&c, &t, c.activation().unwrap()).unwrap();
    let w = WeightSet::seeded(&t, c.init_scale, c.seed);
    let v = w.matrix(0);
    let g = evaluate_batch(&t, &w, c.activation().unwrap(), &data.inputs, &data.targets)
        .unwrap()
        .gradients;
    // dE/dv_k = sum_p (v . x_p - d_p) x_pk
    for k in 0..2 {
        let expected: f64 = data
            .inputs
            .iter()
            .zip(&data.targets)
            .map(|(x, d)| (v.get(0, 0) * x[0] + v.get(1, 0) * x[1] - d[0]) * x[k])
            .sum();
        assert!((g.per_edge.matrix(0).get(k, 0) - expected).abs() < 1e-14);
    }
}

#[test]
fn gradcheck_refuses_large_networks() {
    let err = run_gradcheck(&config(&["widths=[100, 101]"])).unwrap_err();
    assert!(err.to_string().contains("finite"), "{err}");
}

#[test]
fn verify_reproduces_training_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(&["widths=[2, 4, 3, 1]", "iterations=300", &out_arg(dir.path())]);
    let report = run_training(&c).unwrap();
    let paths = write_training_artifacts(&c, &report, dir.path()).unwrap();
    let verdict = run_verify(&VerifyRequest {
        trajectory: paths.trajectory.clone(),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(verdict, report.verdict);

    let output = dagnet(&["verify", paths.trajectory.to_str().unwrap(), "--tail-threshold", "1e9"]);
    assert_eq!(output.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(json["iterations"], 300);
}

#[test]
fn verify_rejects_mismatched_topology() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(&["widths=[2, 3, 1]", "iterations=5"]);
    let report = run_training(&c).unwrap();
    let paths = write_training_artifacts(&c, &report, dir.path()).unwrap();
    fs::write(&paths.topology, "widths = [2, 4, 1]\nedges = [[0, 1], [1, 2], [0, 2]]\n").unwrap();
    assert!(run_verify(&VerifyRequest {
        trajectory: paths.trajectory,
        ..Default::default()
    })
    .is_err());
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let c = config(&[
        "dataset=\"synthetic_faces\"",
        "image_rows=8",
        "image_cols=8",
        "samples=12",
        "widths=[64, 16, 4, 16, 64]",
        "code_layer=2",
        "architecture=\"cross_encoder\"",
        "eta=1e-4",
        "iterations=40",
        "seed=9",
    ]);
    let a = run_training(&c).unwrap();
    let b = run_training(&c).unwrap();
    assert_eq!(a.trajectory_csv, b.trajectory_csv);
}

fn compare_base(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "dataset=\"synthetic_faces\"",
        "image_rows=8",
        "image_cols=8",
        "samples=16",
        "train_count=12",
        "widths=[64, 16, 8, 16, 64]",
        "code_layer=2",
        "architecture=\"cross_encoder\"",
        "eta=1e-4",
        "iterations=20",
        "codes=[8, 4]",
        "seeds=[0, 1]",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

#[test]
fn compare_identical_slots_give_identical_rows() {
    let primary = RunConfig::from_toml_with("", &compare_base(&[])).unwrap();
    let baseline = RunConfig::from_toml_with("", &compare_base(&["label=\"Control\""])).unwrap();
    let rows = run_compare(&primary, Some(&baseline)).unwrap();
    assert_eq!(rows.len(), 8);
    for pair in rows.chunks(2) {
        assert_eq!(pair[1].model, "Control");
        assert_eq!(pair[0].quality, pair[1].quality);
        assert_eq!(pair[0].final_error.to_bits(), pair[1].final_error.to_bits());
    }
}

#[test]
fn compare_default_baseline_rows_are_finite() {
    let primary = RunConfig::from_toml_with("", &compare_base(&[])).unwrap();
    let rows = run_compare(&primary, None).unwrap();
    assert_eq!(rows.len(), 8);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0].model, "CrossEncoder");
        assert_eq!(pair[1].model, "Autoencoder");
        assert_eq!(pair[0].code, pair[1].code);
    }
    assert!(rows
        .iter()
        .all(|r| r.quality.psnr.is_finite() && r.quality.ssim.is_finite() && r.quality.nrmse.is_finite()));
    assert_eq!(rows.iter().map(|r| r.code).collect::<Vec<_>>(), vec![8, 8, 8, 8, 4, 4, 4, 4]);
}

#[test]
fn compare_rejects_mismatched_budgets() {
    let primary = RunConfig::from_toml_with("", &compare_base(&[])).unwrap();
    let baseline = RunConfig::from_toml_with("", &compare_base(&["iterations=21"])).unwrap();
    assert!(run_compare(&primary, Some(&baseline)).is_err());
}

#[test]
fn compare_cli_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut args: Vec<String> = vec!["compare".into()];
    for o in compare_base(&["codes=[4]", "seeds=[0]"]) {
        args.push("--set".into());
        args.push(o);
    }
    args.push("--set".into());
    args.push(out_arg(dir.path()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let output = dagnet(&refs);
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let table = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(lines[1], "code,seed,model,psnr,ssim,nrmse,final_error");
    assert_eq!(lines.len(), 4);
}

#[test]
fn synthetic_faces_training_example() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "dataset=\"synthetic_faces\"",
        "widths=[256, 64, 16, 64, 256]",
        "code_layer=2",
        "architecture=\"cross_encoder\"",
        "s=0.5",
        "iterations=2000",
    ];
    let mut overrides = base.to_vec();
    let out = out_arg(dir.path());
    overrides.push(&out);
    // at eta = 0.01 the summed error over 256 outputs overshoots
    let mut large = overrides.clone();
    large.push("eta=0.01");
    let c = config(&large);
    let report = run_training(&c).unwrap();
    write_training_artifacts(&c, &report, dir.path()).unwrap();
    assert!(dir.path().join("verdict.json").exists());
    assert!(!report.verdict.monotone_descent);

    let mut small = overrides;
    small.push("eta=1e-4");
    assert!(run_training(&config(&small)).unwrap().verdict.monotone_descent);
}
