use std::path::Path;
use std::process::{Command, Output};

fn chdbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chdbc")).args(args).output().expect("binary runs")
}

fn csv_rows(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("diagnostics.csv")).unwrap().lines().map(String::from).collect()
}

#[test]
fn fig1_demo_writes_one_row_per_step() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fig1");
    let o = chdbc(&["demo", "fig1", "--nx", "8", "--steps", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 7);
    assert!(rows[0].starts_with("step,time,e_bulk"));
    // The boundary mass equals the perimeter at every step.
    for row in &rows[1..] {
        let mass_surf: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert!((mass_surf - 4.0).abs() < 1e-10 * 4.0, "{row}");
    }
    for name in ["snap_000000.vtk", "snap_000000_boundary.vtk", "snap_000005.ppm"] {
        assert!(out.join(name).exists(), "{name}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("steps             5"));
}

#[test]
fn demo_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let dir = tmp.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_chdbc"))
            .args(["demo", "fig2", "--nx", "8", "--steps", "4", "--stepper", "cc", "--out", dir.to_str().unwrap()])
            .env("CHDBC_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        dir
    };
    let (a, b) = (run("a", "1"), run("b", "3"));
    for f in ["diagnostics.csv", "snap_000004.ppm"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# tiny run\nnx = 4\nny = 4\nepsilon = 0.1\nkappa = 0.05\ntau = 1e-4\nsteps = 3\nstepper = mm\n").unwrap();
    let out = tmp.path().join("o");
    let o = chdbc(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out).len(), 5);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "nx = 4\nny = 4\nepsilon = 0.1\nkappa = -1\ntau = 1e-4\n").unwrap();
    let o = chdbc(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kappa"));

    std::fs::write(&cfg, "").unwrap();
    let o = chdbc(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nx, ny, epsilon, kappa, tau"));
}

#[test]
fn solver_failure_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("stiff.cfg");
    std::fs::write(
        &cfg,
        "nx = 4\nny = 4\nepsilon = 0.02\nkappa = 0.02\ntau = 8e-6\nsteps = 2\nnewton_max_iter = 1\nnewton_tol = 1e-15\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let o = chdbc(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 1"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let o = chdbc(&["run", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_chdbc"))
        .args(["demo", "fig1", "--nx", "2", "--steps", "1"])
        .env("CHDBC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
