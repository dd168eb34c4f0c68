//! End-to-end runs of the `factum` binary and the library runner on the
//! fixtures in `tests/fixtures`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use factum_cli::{run, Command, RunOptions};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run_fixture(cmd: Command, name: &str, out: &Path, workers: usize) -> factum_cli::RunManifest {
    let opts = RunOptions {
        seed: None,
        out: Some(out.to_path_buf()),
        workers: Some(workers),
    };
    run(cmd, &fixture(name), &opts).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn identical_blocks_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    run_fixture(
        Command::Stability,
        "stability_identical.json",
        dir.path(),
        2,
    );
    let v = json(&dir.path().join("verdict.json"));
    assert_eq!(v["stable"], true);
    assert_eq!(v["worst_deviation"], 0.0);
    assert_eq!(v["blocks_used"], 100);
}

#[test]
fn drift_is_unstable() {
    let dir = tempfile::tempdir().unwrap();
    run_fixture(Command::Stability, "stability_drift.json", dir.path(), 2);
    let v = json(&dir.path().join("verdict.json"));
    assert_eq!(v["stable"], false);
    assert!(v["worst_deviation"].as_f64().unwrap() > 0.15);
}

#[test]
fn fair_coin_successions_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    run_fixture(Command::Stability, "stability_coin.json", dir.path(), 2);
    assert_eq!(json(&dir.path().join("verdict.json"))["stable"], true);
    let law = fs::read_to_string(dir.path().join("law.csv")).unwrap();
    assert!(law.starts_with("n_total,n0,epsilon,delta\n1000000,10000,0.02,0.05\nlabel,count\n"));
    assert!(!law.contains('\r'));
}

#[test]
fn malformed_scenario_exits_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_factum"))
        .args(["stability", "--scenario"])
        .arg(fixture("malformed.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("scenario schema") && err.contains("repeats"),
        "{err}"
    );
}

#[test]
fn missing_section_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let e = run(Command::Exp, &fixture("stability_identical.json"), &opts).unwrap_err();
    assert_eq!(e.to_string(), "scenario has no `exp` section");
}

#[test]
fn binary_prints_checksums_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_factum"))
        .args(["tree", "--workers", "2", "--seed", "99", "--scenario"])
        .arg(fixture("tree_single.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.ends_with("  tree.json")));
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["seed"], 99);
    assert_eq!(m["command"], "tree");
    assert_eq!(m["workers"], 2);
}

#[test]
fn one_observable_tree_is_trunk_only() {
    let dir = tempfile::tempdir().unwrap();
    run_fixture(Command::Tree, "tree_single.json", dir.path(), 1);
    let t = json(&dir.path().join("tree.json"));
    assert_eq!(t["trunk_only"], true);
    assert_eq!(t["branches"].as_array().unwrap().len(), 1);
    assert_eq!(t["branches"][0]["laws"]["A"], "laws/A.csv");
    assert!(dir.path().join("laws/A.csv").exists());
}

#[test]
fn two_branch_tree_with_meta_correlations() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_fixture(Command::Tree, "tree_two_branch.json", dir.path(), 3);
    let t = json(&dir.path().join("tree.json"));
    assert_eq!(t["trunk_only"], false);
    let members: Vec<Vec<String>> = serde_json::from_value(Value::Array(
        t["branches"]
            .as_array()
            .unwrap()
            .iter()
            .map(|b| b["members"].clone())
            .collect(),
    ))
    .unwrap();
    assert_eq!(
        members,
        [
            vec!["A".to_string(), "A2".to_string()],
            vec!["B".to_string()]
        ]
    );
    let pairs = t["mpc"]["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 2);
    assert!(pairs.iter().all(|p| p["residual"].as_f64().unwrap() < 0.01));
    assert_eq!(m.outputs.len(), 4);
}

#[test]
fn exact_reconstruction_predicts_heldout_basis() {
    let dir = tempfile::tempdir().unwrap();
    run_fixture(
        Command::Reconstruct,
        "reconstruct_exact.json",
        dir.path(),
        2,
    );
    let r = json(&dir.path().join("report.json"));
    assert!(r["retrieval"]["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r["retrieval"]["ambiguity_flag"], "unique");
    assert!(r["max_mpc_residual"].as_f64().unwrap() < 1e-10);
    assert!(r["heldout"][0]["max_deviation"].as_f64().unwrap() < 1e-6);
    let e = json(&dir.path().join("expansion.json"));
    assert_eq!(e["reference_observable"], "A");
    assert_eq!(e["phases"]["A"][0], 0.0);
    // (1, i)/√2 relative to the gauge on the first component
    assert!((e["phases"]["A"][1].as_f64().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
}

#[test]
fn sampled_reconstruction_within_sampling_bounds() {
    let dir = tempfile::tempdir().unwrap();
    run_fixture(
        Command::Reconstruct,
        "reconstruct_sampled.json",
        dir.path(),
        4,
    );
    let r = json(&dir.path().join("report.json"));
    assert!(r["max_mpc_residual"].as_f64().unwrap() < 0.01);
    assert!(r["heldout"][0]["max_deviation"].as_f64().unwrap() < 0.02);
}

#[test]
fn non_quantum_laws_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let e = run(
        Command::Reconstruct,
        &fixture("reconstruct_nonquantum.json"),
        &opts,
    )
    .unwrap_err();
    assert!(
        matches!(
            e,
            factum_cli::CliError::Core(factum_core::Error::InconsistentLaws { .. })
        ),
        "{e}"
    );
}

#[test]
fn exp_writes_histograms_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    run_fixture(Command::Exp, "exp_default.json", dir.path(), 2);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["sigma_px"], 0.0);
    assert!(s["sigma_z"].as_f64().unwrap() > 0.0);
    assert_eq!(s["qm_direction_mass"], 0.0);
    assert!(s["fringe_visibility"].as_f64().unwrap() > 0.9);
    assert!((s["lambda_slope"].as_f64().unwrap() + 1.0).abs() < 0.1);
    for f in [
        "angle_histogram",
        "pz_histogram",
        "fringe_histogram",
        "fringe_phase_histogram",
    ] {
        let text = fs::read_to_string(dir.path().join(format!("{f}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("bin_low,bin_high,mass"));
        let mass: f64 = lines
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((mass - 1.0).abs() < 1e-9, "{f}: {mass}");
    }
    let lambda = fs::read_to_string(dir.path().join("lambda_scaling.csv")).unwrap();
    assert_eq!(lambda.lines().count(), 5);
}

#[test]
fn borncheck_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    run_fixture(Command::Borncheck, "borncheck_single.json", dir.path(), 2);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["guided_mean"], serde_json::json!([0.5, -1.0, 2.0]));
    assert!(s["total_variation"].as_f64().unwrap() < 1e-9);
    let cells = fs::read_to_string(dir.path().join("guided_cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 2);

    let dir = tempfile::tempdir().unwrap();
    run_fixture(Command::Borncheck, "borncheck_two_wave.json", dir.path(), 2);
    let s = json(&dir.path().join("summary.json"));
    assert!((s["histogram_mass"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((s["total_variation"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(
        fs::read_to_string(dir.path().join("guided_cells.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );

    let dir = tempfile::tempdir().unwrap();
    run_fixture(Command::Borncheck, "borncheck_unequal.json", dir.path(), 2);
    let s = json(&dir.path().join("summary.json"));
    let mean: Vec<f64> = serde_json::from_value(s["guided_histogram_mean"].clone()).unwrap();
    // closed-form box average of ħ Im(ψ̄∇ψ)/|ψ|² weighted by |ψ|²
    let expected = [1.0, 0.0, -1.2];
    let err: f64 = mean
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(err < 0.01 * (1.0f64 + 1.44).sqrt(), "{mean:?}");
}

/// Every output except the manifest, byte for byte.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let m = json(&dir.join("manifest.json"));
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            let p = o["path"].as_str().unwrap().to_string();
            let bytes = fs::read(dir.join(&p)).unwrap();
            (p, bytes)
        })
        .collect()
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    for (cmd, name) in [
        (Command::Stability, "stability_drift.json"),
        (Command::Tree, "tree_two_branch.json"),
        (Command::Reconstruct, "reconstruct_sampled.json"),
        (Command::Exp, "exp_default.json"),
        (Command::Borncheck, "borncheck_unequal.json"),
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = tempfile::tempdir().unwrap();
        let ma = run_fixture(cmd, name, a.path(), 1);
        let mb = run_fixture(cmd, name, b.path(), 4);
        let mc = run_fixture(cmd, name, c.path(), 4);
        assert_eq!(ma.checksums(), mb.checksums(), "{name}");
        assert_eq!(mb.checksums(), mc.checksums(), "{name}");
        assert_eq!(snapshot(a.path()), snapshot(b.path()), "{name}");
    }
}

#[test]
fn seed_override_changes_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_fixture(Command::Stability, "stability_drift.json", a.path(), 2);
    let opts = RunOptions {
        seed: Some(12345),
        out: Some(b.path().to_path_buf()),
        workers: Some(2),
    };
    let mb = run(Command::Stability, &fixture("stability_drift.json"), &opts).unwrap();
    assert_eq!(mb.seed, 12345);
    assert_eq!(ma.scenario_sha256, mb.scenario_sha256);
    assert_ne!(ma.checksums(), mb.checksums());
}
