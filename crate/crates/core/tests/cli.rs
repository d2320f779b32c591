use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_harvest-admission");

const SMALL: &str = r#"
seeds = [1, 2]
[learn]
total_steps = 20000
snapshot_every = 5000
[sim]
horizon = 20000
burn_in = 1000
"#;

fn run(dir: &Path, config: &str, extra: &[&str]) -> std::process::Output {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    Command::new(BIN)
        .arg("run")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.extension()
                .is_some_and(|e| e == "csv" || e == "toml" || e == "txt")
        })
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn convergence_run_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(tmp.path(), SMALL, &["--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = csv_files(&out).into_iter().map(|(n, _)| n).collect();
    for f in [
        "effective_config.toml",
        "metadata.txt",
        "results.csv",
        "summary.csv",
        "trace_seed1.csv",
        "trace_seed2.csv",
    ] {
        assert!(names.iter().any(|n| n == f), "missing {f}: {names:?}");
    }
    let meta = fs::read_to_string(out.join("metadata.txt")).unwrap();
    assert!(meta.contains("ChaCha8Rng"));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(!results.contains('\r'));
    assert_eq!(results.lines().count(), 3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let cfg =
        format!("experiment = \"capacity-sweep\"\nsweep = [3, 6]\nwrite_step_log = true\n{SMALL}");
    assert!(run(tmp.path(), &cfg, &["--out-dir", a.to_str().unwrap()])
        .status
        .success());
    assert!(run(tmp.path(), &cfg, &["--out-dir", b.to_str().unwrap()])
        .status
        .success());
    let fa = csv_files(&a);
    let fb = csv_files(&b);
    assert_eq!(fa.len(), fb.len());
    for ((na, ca), (nb, cb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na != "effective_config.toml" {
            assert!(ca == cb, "{na} differs");
        }
    }
    assert!(fa.iter().any(|(n, _)| n == "steps_value3_seed1.csv"));
}

#[test]
fn flag_overrides_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(
        tmp.path(),
        SMALL,
        &[
            "--out-dir",
            out.to_str().unwrap(),
            "--seed",
            "7",
            "--steps",
            "0",
            "--algorithm",
            "regen",
            "--experiment",
            "single-eval",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echoed = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(echoed.contains("seeds = [7]"));
    assert!(echoed.contains("total_steps = 0"));
    assert!(echoed.contains("algorithm = \"regenerative\""));
    assert!(echoed.contains("experiment = \"single-eval\""));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results
        .lines()
        .nth(1)
        .unwrap()
        .starts_with(",7,1.000000000,1.000000000,1.000000000,"));
}

#[test]
fn invalid_config_names_key() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), "[model]\nharvest_success_prob = 1.5\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("harvest_success_prob"));

    let o = run(tmp.path(), "[learn]\nunknown_knob = 1\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_knob"));
}

#[test]
fn missing_config_file_fails() {
    let o = Command::new(BIN)
        .args(["run", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/config.toml"));
}
