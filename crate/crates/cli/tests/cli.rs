//! End-to-end CLI checks: exit codes, manifests, and byte-identical reruns.

use std::path::Path;
use std::process::{Command, Output};

fn catlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("CATLAB_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn verify_constructions_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
seed = 7
[verify_constructions]
n = 2
f_q = [2.0, 1.0]
vocab_size = 16
lengths = [16, 32]
instances = 50
sc_signal_vocab = 8
sc_max_signals = 6
sc_max_noise = 24
sc_instances = 50
"#,
    );
    let out = catlab(
        &["verify-constructions", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "stdout: {} stderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("verify_report.json").exists());
    let manifest_path = dir.path().join("verify_report.json.manifest.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest_path).unwrap()).unwrap();
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(dir.path().join(f["path"].as_str().unwrap()).exists());
    }
}

#[test]
fn aliased_filter_is_diagnosed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[verify_constructions]
n = 2
f_q = [1.0, 1.0]
vocab_size = 8
lengths = [16]
instances = 10
sc_signal_vocab = 4
sc_max_signals = 3
sc_max_noise = 8
sc_instances = 5
"#,
    );
    let out = catlab(
        &["verify-constructions", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("SignatureNotUnique"), "stderr: {err}");
}

#[test]
fn empty_suite_is_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[verify_constructions]
n = 1
f_q = [1.0]
vocab_size = 8
lengths = [16]
instances = 0
sc_signal_vocab = 4
sc_max_signals = 3
sc_max_noise = 8
sc_instances = 5
"#,
    );
    let out = catlab(
        &["verify-constructions", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nnot_a_field = true\n");
    let out = catlab(&["sc-demo", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
}

#[test]
fn lengen_sweep_exact_vs_corrupted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[lengen_sweep]
build_length = 32
lengths = [32, 64]
vocab_size = 16
suite_size = 40
model = "exact"
soft_eps0 = 1e-3
eta = 0.0
"#,
    );
    let out = catlab(
        &["lengen-sweep", "--config", cfg.to_str().unwrap(), "--out", "exact.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("exact.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("L_prime,max_error,accuracy"));
    for line in lines {
        assert!(line.ends_with(",1"), "accuracy column should be 1: {line}");
    }

    let cfg2 = write_config(
        dir.path(),
        r#"
[lengen_sweep]
build_length = 32
lengths = [32, 64]
vocab_size = 16
suite_size = 40
model = "corrupted"
soft_eps0 = 1e-3
eta = 0.0
"#,
    );
    let out2 = catlab(
        &["lengen-sweep", "--config", cfg2.to_str().unwrap(), "--out", "bad.csv"],
        dir.path(),
    );
    assert!(out2.status.success());
    let csv2 = std::fs::read_to_string(dir.path().join("bad.csv")).unwrap();
    for line in csv2.lines().skip(1) {
        assert!(line.ends_with(",0"), "accuracy column should be 0: {line}");
    }
}

#[test]
fn lcat_phase_rejects_oversized_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[lcat_phase]
l = 256
b_grid = [512]
sigma2 = 1.0
filter = "block_mean"
targets = [0.5]
trials = 100
"#,
    );
    let out = catlab(&["lcat-phase", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));
}

#[test]
fn lcat_phase_smoke_runs_and_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[lcat_phase]
l = 4096
b_grid = [16, 32, 64]
sigma2 = 1.0
filter = "block_mean"
targets = [0.5]
trials = 400
"#,
    );
    let out = catlab(
        &["lcat-phase", "--config", cfg.to_str().unwrap(), "--out", "phase.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("phase.csv")).unwrap();
    let mut last_d50 = 0usize;
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 9);
        let d50: usize = cols[5].parse().unwrap();
        assert!(d50 > last_d50, "d50 should grow with B: {line}");
        last_d50 = d50;
    }
}

#[test]
fn gen_tasks_round_trips_and_reruns_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[gen_tasks]
preset = "mqar-L64"
kind = "mqar"
n = 1
l = 64
k = 16
vocab_size = 8092
no_match_fraction = 0.0
count = 50
"#,
    );
    let args = ["gen-tasks", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", "t.jsonl"];
    let out = catlab(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(dir.path().join("t.jsonl")).unwrap();

    // Round trip.
    let insts =
        catlab_core::tasks::read_jsonl(std::io::BufReader::new(std::fs::File::open(dir.path().join("t.jsonl")).unwrap()))
            .unwrap();
    assert_eq!(insts.len(), 50);
    assert!(insts.iter().all(catlab_core::tasks::verify_well_formed));
    let mut buf = Vec::new();
    catlab_core::tasks::write_jsonl(&mut buf, &insts).unwrap();
    assert_eq!(buf, first);

    // Rerun reproduces the same bytes; different parallelism too.
    let out2 = catlab(&args, dir.path());
    assert!(out2.status.success());
    assert_eq!(std::fs::read(dir.path().join("t.jsonl")).unwrap(), first);
    let mut args_jobs = args.to_vec();
    args_jobs.extend_from_slice(&["--jobs", "1"]);
    let out3 = catlab(&args_jobs, dir.path());
    assert!(out3.status.success());
    assert_eq!(std::fs::read(dir.path().join("t.jsonl")).unwrap(), first);
}

#[test]
fn env_seed_overrides_config_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n");
    let run = |envs: &[(&str, &str)], extra: &[&str]| -> String {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_catlab"));
        cmd.args(["sc-demo", "--config", cfg.to_str().unwrap(), "--out", "d.json"])
            .args(extra)
            .current_dir(dir.path())
            .env_remove("CATLAB_SEED");
        for (k, v) in envs {
            cmd.env(k, v);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("d.json.manifest.json")).unwrap(),
        )
        .unwrap();
        manifest["seed"].to_string()
    };
    assert_eq!(run(&[], &[]), "1");
    assert_eq!(run(&[("CATLAB_SEED", "5")], &[]), "5");
    assert_eq!(run(&[("CATLAB_SEED", "5")], &["--seed", "9"]), "9");
}

#[test]
fn audit_default_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[audit]
build_length = 32
lengths = [32, 64]
vocab_size = 8
suite_size = 30
eta = 0.001
temperature = 8.5
"#,
    );
    let out = catlab(&["audit", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("audit_report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["epsilon"].as_f64().unwrap() >= 0.0);
    assert!(report["in_regime"].as_bool().unwrap());
}
