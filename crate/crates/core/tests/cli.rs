//! End-to-end checks of the `xdiff` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xdiff_core::config::{parse_config, ConfigFile};
use xdiff_core::output::parse_checkpoint;

const A1: &str = "\
# acceptance fixture A1
[scheme]
eps = 0.1
sigma = 0.001
horizon = 0.05
grid_cells = 32
initial_data = cosine(0.5, 0.4, 1)
";

fn xdiff(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xdiff"))
        .args(args)
        .env("XDIFF_OUTPUT_DIR", out)
        .output()
        .expect("spawn xdiff")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap())
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().unwrap())
        .collect()
}

#[test]
fn run_a1_succeeds_with_monotone_entropy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "a1.toml", A1);
    let o = xdiff(&tmp.path().join("out"), &["run", cfg.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("out").join("a1");
    let diag = fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
    let e = column(&diag, "entropy");
    assert_eq!(e.len(), 51);
    assert!(e.windows(2).all(|p| p[1] <= p[0] + 1e-8 * (1.0 + p[0].abs())));
    let states = parse_checkpoint(&fs::read_to_string(dir.join("checkpoint.csv")).unwrap()).unwrap();
    assert_eq!(states.len(), 51);
    let manifest = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = ok") && manifest.contains("steps_completed = 50"));
}

#[test]
fn identical_configs_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "a1.toml", A1);
    for out in ["x", "y"] {
        let o = xdiff(&tmp.path().join(out), &["run", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for file in ["diagnostics.csv", "checkpoint.csv"] {
        let a = fs::read(tmp.path().join("x/a1").join(file)).unwrap();
        let b = fs::read(tmp.path().join("y/a1").join(file)).unwrap();
        assert!(a == b, "{file} differs between identical runs");
    }
}

#[test]
fn manifest_reruns_the_same_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "a1.toml", A1);
    assert_eq!(
        xdiff(&tmp.path().join("out"), &["run", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let manifest = tmp.path().join("out/a1/manifest.txt");
    assert_eq!(parse_config(&manifest).unwrap(), parse_config(&cfg).unwrap());
    let again = write(tmp.path(), "again.txt", &fs::read_to_string(&manifest).unwrap());
    assert_eq!(
        xdiff(&tmp.path().join("out"), &["run", again.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        fs::read(tmp.path().join("out/a1/diagnostics.csv")).unwrap(),
        fs::read(tmp.path().join("out/again/diagnostics.csv")).unwrap()
    );
}

#[test]
fn solver_failure_exits_3_and_records_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "starved.toml", &format!("{A1}newton_max_iter = 1\n"));
    let o = xdiff(&tmp.path().join("out"), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("step 1"), "{}", stderr(&o));
    let manifest = fs::read_to_string(tmp.path().join("out/starved/manifest.txt")).unwrap();
    assert!(manifest.contains("status = failed"));
    assert!(manifest.contains("failure_step = 1"));
    assert!(manifest.contains("failure_residual_trace = "));
    assert!(manifest.contains("steps_completed = 0"));
}

#[test]
fn absurd_sigma_is_reported_not_hidden() {
    let tmp = tempfile::tempdir().unwrap();
    let text = A1
        .replace("sigma = 0.001", "sigma = 10")
        .replace("horizon = 0.05", "horizon = 10");
    let cfg = write(tmp.path(), "absurd.toml", &text);
    let o = xdiff(&tmp.path().join("out"), &["run", cfg.to_str().unwrap()]);
    let manifest = fs::read_to_string(tmp.path().join("out/absurd/manifest.txt")).unwrap();
    match o.status.code() {
        Some(0) => assert!(manifest.contains("status = ok")),
        Some(3) => assert!(manifest.contains("failure_step = 1")),
        c => panic!("unexpected exit {c:?}: {}", stderr(&o)),
    }
}

#[test]
fn config_errors_exit_2_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        (A1.replace("eps = 0.1", "eps = 1.5"), ":3:", "eps must lie in (0,1)"),
        (format!("{A1}steps = 7\n"), ":8:", "steps = 7"),
        (format!("{A1}colour = red\n"), ":8:", "colour"),
        (A1.replace("grid_cells = 32\n", ""), "", "grid_cells"),
    ];
    for (i, (text, line, needle)) in cases.iter().enumerate() {
        let cfg = write(tmp.path(), &format!("bad{i}.toml"), text);
        let o = xdiff(&out, &["run", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "case {i}");
        let err = stderr(&o);
        assert!(err.contains(line) && err.contains(needle), "case {i}: {err}");
    }
    let o = xdiff(&out, &["run", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert_eq!(xdiff(&out, &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn certify_writes_rows_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("c.csv");
    let o = xdiff(
        tmp.path(),
        &[
            "certify",
            "--samples",
            "20",
            "--eps",
            "1,0.01",
            "--out",
            csv.to_str().unwrap(),
            "--check",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 400 + 1);
    assert!(text.lines().last().unwrap().starts_with("# summary: samples=800"));

    let o = xdiff(
        tmp.path(),
        &["certify", "--samples", "0", "--out", csv.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("no samples"));
}

#[test]
fn sweep_runs_every_study() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = format!(
        "{}[sweep]\nsigmas = 0.01, 0.005, 0.0025\ncells = 16, 32, 64\nsigma_per_h = 0.0125\n\
         eps_sequence = 0.5, 0.25, 0.125\nnorms = l1, sup\nparallelism = 2\n",
        A1.replace("grid_cells = 32", "grid_cells = 64")
            .replace("horizon = 0.05", "horizon = 0.1")
    );
    let cfg = write(tmp.path(), "study.toml", &plan);
    let o = xdiff(&tmp.path().join("out"), &["sweep", cfg.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("out/study");
    let sigma = fs::read_to_string(dir.join("sigma_refinement.csv")).unwrap();
    assert_eq!(sigma.lines().count(), 4);
    let mesh = fs::read_to_string(dir.join("mesh_refinement_k1p1.csv")).unwrap();
    let decay = column(&mesh, "decay_ratio");
    assert_eq!(decay.len(), 2);
    assert!(decay.iter().all(|&r| r >= 2.0));
    let cont = fs::read_to_string(dir.join("continuation.csv")).unwrap();
    assert!(cont.starts_with("n,eps,final_entropy,degeneracy_measure_max,d_n,d_sup\n"));
    assert!(dir.join("runs/sigma_2/diagnostics.csv").exists());
    assert!(dir.join("runs/cells_64/manifest.txt").exists());
}

#[test]
fn single_entry_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "a1.toml", A1);
    let out = tmp.path().join("out");
    assert_eq!(xdiff(&out, &["run", cfg.to_str().unwrap()]).status.code(), Some(0));
    let sweep_out = tmp.path().join("sweep");
    assert_eq!(
        xdiff(&sweep_out, &["sweep", cfg.to_str().unwrap()]).status.code(),
        Some(0)
    );
    assert_eq!(
        fs::read(out.join("a1/diagnostics.csv")).unwrap(),
        fs::read(sweep_out.join("a1/runs/sigma_0/diagnostics.csv")).unwrap()
    );
}

#[test]
fn oracle_command_checks_discrepancy() {
    let tmp = tempfile::tempdir().unwrap();
    let text = A1
        .replace("grid_cells = 32", "grid_cells = 64")
        .replace("horizon = 0.05", "horizon = 0.048");
    let cfg = write(tmp.path(), "smooth.toml", &text);
    let out = tmp.path().join("out");
    let o = xdiff(&out, &["oracle", cfg.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("smooth/oracle.csv").exists());
    let o = xdiff(&out, &["oracle", cfg.to_str().unwrap(), "--check", "--tol", "1e-6"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(matches!(parse_config(&cfg).unwrap(), ConfigFile::Run(_)));
}
