use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_funcmcmc")
}

fn repo_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("funcmcmc-cli-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(bin())
        .args(args)
        .env("FUNCMCMC_DATA_DIR", repo_data_dir())
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SYNTH_SMOKE: &str = r#"
experiment = "synthetic1d"
dynamics = "fsgld"
seed = 3

[model]
hidden = [8]
activation = "tanh"

[data]
n_train = 20
n_test = 20

[sampler]
burn_in = 10
num_samples = 3
thin_interval = 2
minibatch_size = 5

[measurement]
m_train = 10
m_inducing = 10
"#;

#[test]
fn no_arguments_is_usage_error() {
    let (code, _, stderr) = run(&[]);
    assert_eq!(code, 2, "stderr: {stderr}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = temp_dir("badkey");
    let cfg = write_config(&dir, "bad.toml", "experiment = \"synthetic1d\"\nwat = 1\n");
    let (code, _, stderr) = run(&["sample", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("error"), "stderr: {stderr}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_config_file_exits_2() {
    let (code, _, _) = run(&["sample", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code, 2);
}

#[test]
fn missing_dataset_exits_2() {
    let dir = temp_dir("nodata");
    let cfg = write_config(
        &dir,
        "uci.toml",
        "experiment = \"uci\"\n[data]\npath = \"uci/notthere.csv\"\n",
    );
    let (code, _, stderr) = run(&["sample", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("notthere"), "stderr: {stderr}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn sample_evaluate_smoke_and_determinism() {
    let dir = temp_dir("smoke");
    let cfg = write_config(&dir, "run.toml", SYNTH_SMOKE);
    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    for out in [&out1, &out2] {
        let (code, stdout, stderr) = run(&[
            "sample",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "stdout: {stdout} stderr: {stderr}");
        assert!(out.join("samples.bin").exists());
        assert!(out.join("diagnostics.csv").exists());
        assert!(out.join("config.resolved").exists());
        let (code, _, stderr) = run(&[
            "evaluate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "stderr: {stderr}");
        assert!(out.join("metrics.json").exists());
        assert!(out.join("bands.csv").exists());
    }
    // identical config + seed give byte-identical artifacts
    let s1 = fs::read(out1.join("samples.bin")).unwrap();
    let s2 = fs::read(out2.join("samples.bin")).unwrap();
    assert_eq!(s1, s2, "samples.bin must be byte-identical");
    let m1 = fs::read(out1.join("metrics.json")).unwrap();
    let m2 = fs::read(out2.join("metrics.json")).unwrap();
    assert_eq!(m1, m2, "metrics.json must be byte-identical");
    // repeated evaluation is idempotent
    let (code, _, _) = run(&[
        "evaluate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(out1.join("metrics.json")).unwrap(), m1);
    // band CSV covers the 200-point grid
    let bands = fs::read_to_string(out1.join("bands.csv")).unwrap();
    assert_eq!(bands.lines().count(), 201);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_flag_changes_samples() {
    let dir = temp_dir("seeds");
    let cfg = write_config(&dir, "run.toml", SYNTH_SMOKE);
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    run(&[
        "sample",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    run(&[
        "sample",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
        "--out",
        out2.to_str().unwrap(),
    ]);
    let s1 = fs::read(out1.join("samples.bin")).unwrap();
    let s2 = fs::read(out2.join("samples.bin")).unwrap();
    assert_ne!(s1, s2);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn pretrain_prior_zero_epochs_echoes_config() {
    let dir = temp_dir("prior");
    let cfg = write_config(
        &dir,
        "run.toml",
        &format!("{SYNTH_SMOKE}\n[prior]\npretrain_epochs = 0\n"),
    );
    let out = dir.join("out");
    let (code, _, stderr) = run(&[
        "pretrain-prior",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let prior: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("prior.json")).unwrap()).unwrap();
    assert_eq!(prior["kernel"]["type"], "rbf");
    let ls = prior["kernel"]["lengthscale"].as_f64().unwrap();
    assert!((ls - 0.5).abs() < 1e-9, "lengthscale {ls}");
    assert_eq!(prior["mean"]["constant"], 0.0);
    assert!(prior["noise"]["variance"].as_f64().unwrap() > 0.0);
    fs::remove_dir_all(&dir).ok();
}

const VERIFY_SMOKE: &str = r#"
experiment = "verify"
dynamics = "sgld"
seed = 1

[verify]
target = "gaussian2d"
steps = 4000
burn_in = 500
chains = 8
epsilon = 5e-3
mean_tol = 0.5
cov_rtol = 1.0
"#;

#[test]
fn verify_pass_and_forced_fail() {
    let dir = temp_dir("verify");
    let cfg = write_config(&dir, "v.toml", VERIFY_SMOKE);
    let out = dir.join("out");
    let (code, stdout, stderr) = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stdout: {stdout} stderr: {stderr}");
    assert!(stdout.contains("pass"));
    assert!(out.join("verify_report.json").exists());

    let (code, stdout, _) = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--override",
        "verify.mean_tol=0.0",
        "--override",
        "verify.cov_rtol=0.0",
    ]);
    assert_eq!(code, 1, "stdout: {stdout}");
    assert!(stdout.contains("FAIL"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn bandit_smoke_emits_rows() {
    let dir = temp_dir("bandit");
    let cfg = write_config(
        &dir,
        "b.toml",
        r#"
experiment = "bandit"
seed = 5

[data]
path = "mushroom/mushroom.csv"

[bandit]
agent = "random"
rounds = 50
"#,
    );
    let out = dir.join("out");
    let (code, stdout, stderr) = run(&[
        "bandit",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stdout: {stdout} stderr: {stderr}");
    let csv = fs::read_to_string(out.join("regret.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51, "header plus 50 rows");
    assert!(csv.starts_with("round,action,reward,cumulative_regret\n"));
    assert!(out.join("encoding.json").exists());
    fs::remove_dir_all(&dir).ok();
}
