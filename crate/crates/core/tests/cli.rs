use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cweno-swe")).args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

#[test]
fn missing_config_exits_with_usage_code() {
    let out = cli(&["run", "--config", "/nonexistent/thacker.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/nonexistent/thacker.cfg"));
}

#[test]
fn bad_config_value_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    write(&cfg, "scenario.name = thacker\nscheme.cfl = 1.5\n");
    let out = cli(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("scheme.cfl") && err.contains("line 2"), "{err}");
}

#[test]
fn run_writes_snapshots_and_gauges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("thacker.cfg");
    write(
        &cfg,
        "scenario.name = thacker\n\
         grid.n = 24\n\
         scheme.end_time = 0.2\n\
         output.snapshot_times = 0.1\n\
         output.gauges = 0 0; 0.5 0.25\n",
    );
    let out_dir = dir.path().join("out");
    let out = cli(&["run", "--config", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("l1 errors"), "{stdout}");
    let names: Vec<String> =
        std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().any(|n| n.starts_with("gauge_0")), "{names:?}");
    assert!(names.iter().any(|n| n.starts_with("gauge_1")), "{names:?}");
    assert!(names.iter().filter(|n| n.contains("snapshot")).count() >= 2, "{names:?}");
}

#[test]
fn override_reaches_the_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "balance",
        "--geometry",
        "cartesian",
        "--set",
        "grid.n=16",
        "--set",
        "scheme.order=4",
        "--checkpoints",
        "0.05,0.1",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("P3P1"), "{stdout}");
    assert!(dir.path().join("balance.csv").exists());
}

#[test]
fn spherical_balance_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "balance",
        "--set",
        "grid.dx=4",
        "--set",
        "grid.dy=4",
        "--set",
        "grid.y_min=-88",
        "--set",
        "grid.y_max=88",
        "--seed",
        "3",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}{}", text(&out.stdout), text(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("balance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
}

#[test]
fn convergence_needs_two_grids() {
    let out = cli(&["convergence", "--set", "scenario.name=vortex", "--grids", "50"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convergence_table_and_determinism() {
    let run = |dir: &Path| {
        let out = cli(&[
            "convergence",
            "--set",
            "scenario.name=vortex",
            "--set",
            "scheme.end_time=0.05",
            "--grids",
            "10,20",
            "--output",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        std::fs::read_to_string(dir.join("convergence.csv")).unwrap()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run(a.path());
    assert_eq!(first.lines().count(), 3);
    assert!(first.starts_with("N,err_h,rate_h"));
    assert_eq!(first, run(b.path()));
}

#[test]
fn simple_wave_has_no_exact_solution() {
    let out = cli(&["convergence", "--set", "scenario.name=simple_wave", "--grids", "10,20"]);
    assert_eq!(out.status.code(), Some(2));
}
