use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(args)
        .env_remove("AUT_CENTERLINE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn circle_csv(dir: &Path, radius: f64) -> String {
    let mut text = String::from("x_m,y_m,w_left_m,w_right_m\n");
    for i in 0..200 {
        let a = i as f64 / 200.0 * std::f64::consts::TAU;
        text.push_str(&format!("{},{},1.25,1.25\n", radius * a.cos(), radius * a.sin()));
    }
    let path = dir.join("ring.csv");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bench(&["run", "--planner", "pp", "--map", "oval", "--laps", "2", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.tsv")).unwrap();
    assert!(manifest.lines().any(|l| l.contains("summary.csv")));
    let summary = std::fs::read_to_string(dir.path().join("pp_oval_mu0.9_hz25_true/summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("pp,oval,2,2,"));
}

#[test]
fn user_track_runs_from_a_csv() {
    let dir = tempfile::tempdir().unwrap();
    let map = circle_csv(dir.path(), 6.0);
    let out = dir.path().join("out");
    let o = bench(&["run", "--map", &map, "--laps", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stats = bench(&["stats", "--map", &map, "--out", out.to_str().unwrap()]);
    assert_eq!(stats.status.code(), Some(0));
    let row = stdout(&stats).lines().nth(1).unwrap().to_string();
    let length: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    // a 200-gon inscribed in a circle of radius 6
    let want = 400.0 * 6.0 * (std::f64::consts::PI / 200.0).sin();
    assert!((length - want).abs() < 1e-3, "{row}");
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["run", "--planner", "e2e", "--out", out],
        vec!["run", "--friction", "1.5", "--out", out],
        vec!["run", "--map", "/no/such/track.csv", "--out", out],
        vec!["run", "--planner", "warp", "--out", out],
    ] {
        let o = bench(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "engine.power = 9000\n").unwrap();
    let o = bench(&["run", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_without_a_track_is_skipped() {
    let o = bench(&["stats"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("skipped"));
}

#[test]
fn plot_on_an_empty_directory_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(&["plot", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["speed_profile.dat", "trajectory.dat", "slip_box.dat"] {
        let found = walk(dir.path()).into_iter().find(|p| p.ends_with(name)).expect(name);
        let text = std::fs::read_to_string(found).unwrap();
        assert!(text.lines().all(|l| l.starts_with('#')), "{name}: {text}");
    }
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
