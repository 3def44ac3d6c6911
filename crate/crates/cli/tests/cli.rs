//! End-to-end checks of the command-line surface: reported values, exit
//! codes, and byte-identical reruns.

use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::sync::atomic::{AtomicUsize, Ordering};

use freundlich_cli::{run_cli, EXIT_NO_CONVERGENCE, EXIT_OK, EXIT_USAGE};

static STAMP: AtomicUsize = AtomicUsize::new(0);

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "freundlich-cli-{}-{tag}-{}",
        std::process::id(),
        STAMP.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn solve_with_zero_control_reports_trivial_state() {
    let dir = scratch_dir("solve-zero");
    let cfg = write_cfg(&dir, "n = 16\nalpha = 0.5\ncontrol = zero\n");
    let out = dir.join("out");
    let code = run_cli(&args(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, EXIT_OK);
    let report = read(&out.join("report.txt"));
    assert!(report.contains("pde_residual: 0\n"), "{report}");
    assert!(report.contains("dead_zone_fraction: 1\n"), "{report}");
    assert!(out.join("state.csv").exists());
}

#[test]
fn convergence_study_reports_second_order() {
    let dir = scratch_dir("convergence");
    let cfg = write_cfg(
        &dir,
        "alpha = 0.5\ninstance = sine\nn_list = 32,64,128\ntol = 1e-10\n",
    );
    let out = dir.join("out");
    let code = run_cli(&args(&[
        "study",
        "convergence",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, EXIT_OK);
    let report = read(&out.join("report.txt"));
    let order: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("fitted_order: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(order >= 1.8, "order {order}");
    let table = read(&out.join("study.csv"));
    assert!(table.starts_with("h,value\n"));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = scratch_dir("determinism");
    let cfg = write_cfg(
        &dir,
        "n = 24\nalpha = 0.4\ncontrol = random:2\ndirection = random:1\n",
    );
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    for out in [&out1, &out2] {
        let code = run_cli(&args(&[
            "differentiate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "9",
        ]));
        assert_eq!(code, EXIT_OK);
    }
    for name in ["report.txt", "state.csv", "delta.csv"] {
        assert_eq!(
            read(&out1.join(name)),
            read(&out2.join(name)),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn field_file_round_trips_through_solve() {
    let dir = scratch_dir("file-source");
    // first produce a control dump, then feed it back in
    let cfg1 = write_cfg(&dir, "n = 16\nalpha = 0.5\ncontrol = constant:3\n");
    let out1 = dir.join("first");
    assert_eq!(
        run_cli(&args(&[
            "solve",
            "--config",
            cfg1.to_str().unwrap(),
            "--out",
            out1.to_str().unwrap(),
        ])),
        EXIT_OK
    );
    let control_path = out1.join("control.csv");
    let cfg2 = write_cfg(
        &dir,
        &format!(
            "n = 16\nalpha = 0.5\ncontrol = file:{}\n",
            control_path.to_str().unwrap()
        ),
    );
    let out2 = dir.join("second");
    assert_eq!(
        run_cli(&args(&[
            "solve",
            "--config",
            cfg2.to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
        ])),
        EXIT_OK
    );
    assert_eq!(read(&out1.join("state.csv")), read(&out2.join("state.csv")));
}

#[test]
fn optimize_writes_history_and_fields() {
    let dir = scratch_dir("optimize");
    let cfg = write_cfg(
        &dir,
        "n = 24\nalpha = 0.5\nnu = 1e-2\ndesired = nodal:sinpi\nlower = 0\nupper = 2\ntol = 1e-8\nstart = constant:1\nsamples = 40\n",
    );
    let out = dir.join("out");
    let code = run_cli(&args(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, EXIT_OK);
    let report = read(&out.join("report.txt"));
    assert!(report.contains("converged: true"), "{report}");
    let history = read(&out.join("history.csv"));
    assert!(history.starts_with("iter,objective,kkt_residual,step\n"));
    for name in ["control.csv", "state.csv", "adjoint.csv"] {
        assert!(out.join(name).exists());
    }
}

#[test]
fn deadzone_study_empty_zone_is_reported() {
    let dir = scratch_dir("deadzone-empty");
    // strictly positive instance: thresholded zone of the solved state is empty
    let cfg = write_cfg(
        &dir,
        "n = 16\nalpha = 0.5\ncontrol = constant:10\ndirection = constant:1\ntau_list = 1e-1,1e-2\n",
    );
    let out = dir.join("out");
    let code = run_cli(&args(&[
        "study",
        "deadzone",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, EXIT_OK);
    let report = read(&out.join("report.txt"));
    assert!(report.contains("outcome: empty_zone"), "{report}");
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(run_cli(&args(&["frobnicate"])), EXIT_USAGE);
    assert_eq!(run_cli(&args(&["study"])), EXIT_USAGE);
    assert_eq!(run_cli(&args(&["study", "sideways"])), EXIT_USAGE);
    assert_eq!(run_cli(&args(&["solve", "--seed", "not-a-number"])), EXIT_USAGE);

    let dir = scratch_dir("bad-config");
    let cfg = write_cfg(&dir, "unknown_key = 1\n");
    assert_eq!(
        run_cli(&args(&["solve", "--config", cfg.to_str().unwrap()])),
        EXIT_USAGE
    );
    let cfg2 = write_cfg(&dir, "alpha = 1.5\n");
    assert_eq!(
        run_cli(&args(&["solve", "--config", cfg2.to_str().unwrap()])),
        EXIT_USAGE
    );
}

#[test]
fn missing_files_exit_3() {
    let dir = scratch_dir("missing-file");
    assert_eq!(
        run_cli(&args(&["solve", "--config", "/nonexistent/path.cfg"])),
        freundlich_cli::EXIT_IO
    );
    // referenced field file does not exist
    let cfg = write_cfg(&dir, "n = 16\nalpha = 0.5\ncontrol = file:/nonexistent/field.csv\n");
    let out = dir.join("out");
    assert_eq!(
        run_cli(&args(&[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])),
        freundlich_cli::EXIT_IO
    );
}

#[test]
fn nonconvergence_exits_4() {
    let dir = scratch_dir("nonconv");
    // an impossible tolerance below the representation floor
    let cfg = write_cfg(&dir, "n = 64\nalpha = 0.5\ncontrol = constant:10\ntol = 1e-15\n");
    let out = dir.join("out");
    assert_eq!(
        run_cli(&args(&[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])),
        EXIT_NO_CONVERGENCE
    );
}

#[test]
fn spawned_binary_verify_passes() {
    let dir = scratch_dir("spawn-verify");
    let out = dir.join("out");
    let status = Process::new(env!("CARGO_BIN_EXE_freundlich"))
        .args(["verify", "--out", out.to_str().unwrap(), "--seed", "3"])
        .status()
        .unwrap();
    assert!(status.success());
    let report = read(&out.join("report.txt"));
    assert!(report.contains("verify: pass"), "{report}");
    assert!(!report.contains(": fail"), "{report}");
}
