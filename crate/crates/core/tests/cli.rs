use std::path::Path;
use std::process::Command;

use wcshape::cli::main_with_args;
use wcshape::export::read_field_csv;
use wcshape::runlog::RunLog;
use wcshape::StructuredMesh;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["wcshape"];
    full.extend_from_slice(args);
    let code = main_with_args(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in {stdout}"))
        .parse()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn evaluate_constant_source_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.cfg",
        "[mesh]\nnx = 100\nny = 100\n[source]\nkind = constant\nvalue = 1\n[problem]\ndelta = 0\n",
    );
    let (code, out, _) = run(&["--config", &cfg, "evaluate"]);
    assert_eq!(code, 0);
    // Double sine series: ∫u = 0.0351443..., E = −½∫u.
    assert!((value(&out, "energy") + 0.0175722).abs() < 1e-4);
}

#[test]
fn check_grad_small_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.cfg", "[mesh]\nnx = 10\nny = 10\n[problem]\ndelta = 0.25\n");
    let (code, out, _) = run(&["--config", &cfg, "check-grad"]);
    assert_eq!(code, 0);
    assert!(value(&out, "max_relative_error") <= 1e-3);
    assert_eq!(out.lines().filter(|l| l.starts_with("node ")).count(), 10);
}

#[test]
fn check_grad_reports_mismatch_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.cfg", "[mesh]\nnx = 6\nny = 6\n[problem]\ndelta = 0.25\n");
    let (code, _, err) = run(&["--config", &cfg, "check-grad", "--nodes", "3", "--threshold", "1e-30"]);
    assert_eq!(code, 12);
    assert!(err.starts_with("error kind=gradient-mismatch code=12"));
}

#[test]
fn optimize_writes_fields_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.cfg", "[mesh]\nnx = 16\nny = 16\n[optimize]\nmax_iter = 30\n");
    let out_dir = dir.path().join("run");
    let (code, out, _) = run(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "--quiet", "optimize"]);
    assert_eq!(code, 0, "{out}");
    for stem in ["potential", "state"] {
        for ext in ["csv", "vtk", "pgm"] {
            assert!(out_dir.join(format!("{stem}.{ext}")).is_file());
        }
    }
    let log = RunLog::parse(&std::fs::read_to_string(out_dir.join("runlog.txt")).unwrap()).unwrap();
    let summary = log.summary.clone().unwrap();
    assert_eq!(log.rows.len(), summary.iterations + 1);
    assert_eq!(summary.objective, value(&out, "objective"));
    let spec = log.spec().unwrap();
    assert_eq!(spec.nx, 16);

    let mesh = StructuredMesh::unit_square(16).unwrap();
    let v = read_field_csv(&mesh, &out_dir.join("potential.csv")).unwrap();
    assert!(v.iter().all(|&x| (0.0..=1000.0).contains(&x)));
}

#[test]
fn solve_and_gamma_dist_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", "[mesh]\nnx = 8\nny = 8\n");
    let out_dir = dir.path().join("s");
    let (code, out, _) = run(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "solve"]);
    assert_eq!(code, 0);
    assert!(out.contains("converged = true"));
    assert!(out_dir.join("state_report.txt").is_file());
    let state = out_dir.join("state.csv");
    let s = state.to_str().unwrap();
    let (code, out, _) = run(&["--config", &cfg, "gamma-dist", s, s]);
    assert_eq!(code, 0);
    assert_eq!(value(&out, "gamma_distance"), 0.0);
}

#[test]
fn radial_prints_table() {
    let (code, out, err) = run(&["radial", "--n", "60", "--nr", "400"]);
    let header = out.lines().next().unwrap();
    assert_eq!(header, "candidate,energy,gap,ball_not_worse");
    assert_eq!(out.lines().count(), 6);
    assert!(code == 0 || err.contains("symmetrization-failed"));
}

#[test]
fn config_errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_p = write(dir.path(), "p.cfg", "[problem]\np = 0.5\n");
    let (code, _, err) = run(&["--config", &bad_p, "evaluate"]);
    assert_eq!(code, 3);
    assert!(err.contains("kind=validation") && err.contains("p must exceed 1"));

    let unknown = write(dir.path(), "u.cfg", "[problem]\ncolour = 3\n");
    let (code, _, err) = run(&["--config", &unknown, "evaluate"]);
    assert_eq!(code, 2);
    assert!(err.contains("kind=parse"));

    let (code, _, err) = run(&["--config", "/nonexistent/cfg", "evaluate"]);
    assert_eq!(code, 4);
    assert!(err.contains("kind=io"));

    let (code, _, _) = run(&["--delta", "-1", "evaluate"]);
    assert_eq!(code, 3);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_wcshape");
    let ok = Command::new(bin).args(["--help"]).output().unwrap();
    assert!(ok.status.success());
    let bad = Command::new(bin).args(["no-such-command"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.cfg", "[mesh]\nnx = 0\n");
    let out = Command::new(bin).args(["--config", &cfg, "evaluate"]).output().unwrap();
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind="));
}

#[test]
fn identical_runs_export_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.cfg", "[mesh]\nnx = 12\nny = 12\n[problem]\ndelta = 0.25\n[optimize]\nmax_iter = 10\n");
    let mut texts = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let (code, _, _) = run(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "--quiet", "optimize"]);
        assert_eq!(code, 0);
        texts.push((
            std::fs::read(out_dir.join("potential.csv")).unwrap(),
            std::fs::read(out_dir.join("state.csv")).unwrap(),
        ));
    }
    assert_eq!(texts[0], texts[1]);
}
