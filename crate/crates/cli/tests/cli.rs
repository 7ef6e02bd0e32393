use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedboost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedboost"))
        .args(args)
        .env_remove("FEDBOOST_OUT")
        .output()
        .expect("spawn fedboost")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_lists_every_key() {
    let o = fedboost(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for key in [
        "imbalance_ratio",
        "concentration",
        "compute_time",
        "link_latency",
        "dropout_burst",
        "lambda",
        "eps_floor",
        "initial_interval",
        "theta1",
        "theta2",
        "step_up",
        "step_down",
        "i_min",
        "i_max",
        "max_aggregations",
        "max_virtual_time",
        "target_error",
        "plateau_tol",
        "window",
        "iteration_unit",
    ] {
        assert!(text.contains(key), "help is missing {key}");
    }
}

#[test]
fn run_with_config_writes_contract_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("default.toml");
    fs::write(&cfg, "mode = \"async_adaptive\"\n").unwrap();
    let out = dir.path().join("results");
    let o = fedboost(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "trace_adaptive.csv",
        "trace_baseline.csv",
        "report.csv",
        "report.txt",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("comm overhead (bytes)"));
}

#[test]
fn fixed_mode_names_its_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = fedboost(&[
        "run",
        "--preset",
        "iot",
        "--mode",
        "async_fixed",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("trace_fixed.csv").is_file());
}

#[test]
fn out_defaults_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_fedboost"))
        .args(["run", "--preset", "edge_vision"])
        .env("FEDBOOST_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("report.csv").is_file());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = fedboost(&[
            "run",
            "--preset",
            "edge_vision",
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn sweep_over_all_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = fedboost(&[
        "run",
        "--preset",
        "all",
        "--seeds",
        "1..2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["edge_vision", "blockchain", "mobile", "iot", "healthcare"] {
        for seed in [1, 2] {
            let d = out.join(name).join(format!("seed_{seed}"));
            assert!(d.join("report.csv").is_file(), "{}", d.display());
            assert!(d.join("trace_baseline.csv").is_file());
        }
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
    assert!(summary
        .lines()
        .next()
        .unwrap()
        .contains("comm_overhead_reduction_mean"));
    assert!(out.join("summary.txt").is_file());
}

#[test]
fn preset_list_names_all() {
    let o = fedboost(&["preset-list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["edge_vision", "blockchain", "mobile", "iot", "healthcare"] {
        assert!(text.contains(name));
    }
}

#[test]
fn validate_accepts_minimal_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "mode = \"synchronous\"\n").unwrap();
    let o = fedboost(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn unknown_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "foo = 1\n").unwrap();
    let o = fedboost(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("foo"));
}

#[test]
fn theta_order_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[scheduler]\ntheta1 = 0.01\ntheta2 = 0.0\n").unwrap();
    let o = fedboost(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("theta1"));
}

#[test]
fn missing_file_and_unknown_preset() {
    let o = fedboost(&["validate", "--config", "/nonexistent/fedboost.toml"]);
    assert_eq!(code(&o), 1);
    let o = fedboost(&["validate", "--preset", "nope"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("healthcare"));
}

#[test]
fn bad_seed_range() {
    let o = fedboost(&["run", "--seeds", "5..1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unwritable_output_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = fedboost(&[
        "run",
        "--preset",
        "edge_vision",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn non_convergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "[dataset]\nn = 200\n[stop]\nmax_aggregations = 2\n[convergence]\ntarget_error = 0.0\n",
    )
    .unwrap();
    let out = dir.path().join("r");
    let args = [
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let o = fedboost(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut strict = args.to_vec();
    strict.push("--require-convergence");
    let o = fedboost(&strict);
    assert_eq!(code(&o), 3);
    assert!(fs::read_to_string(out.join("report.txt"))
        .unwrap()
        .contains("NON-COMPARABLE"));
}
