use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn amsqueeze(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amsqueeze"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sweep_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "run.seed = 11\nrun.k_samples = 20\nrun.reps = 6\nsweep.phi_db = -1.6, 0, 2.7\n",
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = amsqueeze(&[
            "sweep-phi",
            "--config",
            path(&cfg),
            "--out",
            path(out),
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("# amsqueeze-csv v1 kind=sweep_phi\n"));
    assert_eq!(text.lines().count(), 2 + 3);
}

#[test]
fn seed_flag_overrides_and_changes_output() {
    let run = |seed: &str| {
        let o = amsqueeze(&["simulate", "--seed", seed, "--reps", "3"]);
        assert!(o.status.success());
        o.stdout
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "run.seed = 1\ndet.eta = 1.7\n").unwrap();
    let o = amsqueeze(&["simulate", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("det.eta"));

    let o = amsqueeze(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.seed"));

    fs::write(&cfg, "run.seed = 1\nprobe.colour = red\n").unwrap();
    let o = amsqueeze(&["simulate", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("probe.colour"));

    let o = amsqueeze(&["simulate", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rbw_sweep_writes_fit_and_fit_command_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rbw.cfg");
    fs::write(
        &cfg,
        "run.seed = 3\nrun.reps = 20\nsweep.rbw_hz = 100, 1000, 10000, 100000, 1000000\n",
    )
    .unwrap();
    let out = dir.path().join("rbw.csv");
    let o = amsqueeze(&["sweep-rbw", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("rbw.fit.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["parameter"], "var_h");
    assert_eq!(v["n_points"], 5);

    let o = amsqueeze(&["fit", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let refit: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(refit["value"], v["value"]);
}

#[test]
fn fit_rejects_unknown_schema_version() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("old.csv");
    fs::write(
        &csv,
        "# amsqueeze-csv v9 kind=sweep_rbw\nrbw_hz,q_measured,q_se\n100,1.1,0.1\n",
    )
    .unwrap();
    let o = amsqueeze(&["fit", path(&csv)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("v9"));
}

#[test]
fn theory_curves_need_no_seed() {
    let o = amsqueeze(&["theory-fig1d"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().nth(1), Some("rbw_hz,phi,fisher_per_photon"));
    // 5 squeezing levels × 71 RBW points
    assert_eq!(text.lines().count(), 2 + 5 * 71);
}

#[test]
fn trace_command_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = amsqueeze(&["trace-fig2a", "--seed", "4", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("trace.summary.json")).unwrap())
            .unwrap();
    assert_eq!(v["peak_freq_hz"], 1e7);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l.ends_with(",antisqueezed")));
}

#[test]
fn validate_exits_zero_and_prints_margins() {
    let o = amsqueeze(&["validate", "--seed", "1"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 8);
    assert!(text
        .lines()
        .all(|l| l.starts_with("PASS") && l.contains("margin=")));
}
