use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "scenario,kind,method,seed,sweep_name,sweep_value,snr_db,lambda0,N,K,b,delta,avg_user_rate_bps,goodput_bps,ber_ub,ber_mc,ber_mc_stderr,objective,iterations,wall_time_s";

fn jbac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jbac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.txt");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "\
name = small
snr_db = -5, 5
n_elements = 4
n_patterns = 4
channel_seeds = 1, 2, 3
mc_trials = 2000
max_outer_iters = 3
";

/// Every line without its last field (the wall time).
fn without_timing(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn writes_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("res/run.csv");
    let o = jbac(&["snr-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some(HEADER));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    let summary = std::fs::read_to_string(dir.path().join("res/run.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
    assert!(summary.lines().nth(1).unwrap().contains(",3,"));
}

#[test]
fn output_does_not_depend_on_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, jobs) in [(&a, "1"), (&b, "3")] {
        let o = jbac(&["imperfect-csi", "--config", &cfg, "--out", path.to_str().unwrap(), "--jobs", jobs, "--quiet"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(without_timing(&a), without_timing(&b));
}

#[test]
fn seed_and_trials_flags_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "snr_db = 0\nn_elements = 3\nseed_count = 2\nmax_outer_iters = 2\n");
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = jbac(&["lambda-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed, "--trials", "50", "--quiet"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        without_timing(&out)
    };
    let a = run("1", "a.csv");
    assert_eq!(a, run("1", "b.csv"));
    assert_ne!(a, run("2", "c.csv"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    let bad_key = write_config(dir.path(), "snr_db = 0\nwhatever = 1\n");
    for args in [
        vec!["snr-sweep", "--config", bad_key.as_str(), "--out", out],
        vec!["snr-sweep", "--config", "/nonexistent/scenario.txt", "--out", out],
        vec!["snr-sweep", "--jobs", "0", "--out", out],
        vec!["snr-sweep", "--trials", "0", "--out", out],
        vec!["snr-sweep", "--jobs", "many"],
        vec!["no-such-kind"],
    ] {
        let o = jbac(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let mismatched = write_config(dir.path(), "kind = es_compare\n");
    assert_eq!(jbac(&["snr-sweep", "--config", &mismatched, "--out", out]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "snr_db = 0\nn_elements = 2\nchannel_seeds = 1\nmax_outer_iters = 1\nmc_trials = 10\n");
    // the output path is an existing directory
    let o = jbac(&["snr-sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}
