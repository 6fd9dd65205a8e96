use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pieri(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pieri"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_system(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn count_prints_exact_integers() {
    let o = pieri(&["count", "-m", "3", "-p", "3", "-q", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("pieri root count: 2730"));
    let o = pieri(&["count", "-m", "4", "-p", "4", "-q", "0"]);
    assert!(stdout(&o).contains("pieri root count: 24024"));
    assert_eq!(
        pieri(&["count", "-m", "0", "-p", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn solve_writes_identical_files_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for workers in ["1", "2", "4"] {
        let out = dir.path().join(format!("sol{workers}.json"));
        let o = pieri(&[
            "solve",
            "-m",
            "2",
            "-p",
            "2",
            "-q",
            "1",
            "--seed",
            "7",
            "--workers",
            workers,
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        assert!(stdout(&o).contains("solutions: 8 (expected 8)"));
        files.push(fs::read(&out).unwrap());
    }
    assert!(files.windows(2).all(|w| w[0] == w[1]));

    let file: serde_json::Value = serde_json::from_slice(&files[0]).unwrap();
    assert_eq!(file["count"], 8);
    let max_residual = file["solutions"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|s| {
            s["residuals"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| r.as_f64().unwrap())
        })
        .fold(0.0, f64::max);
    assert!(max_residual <= 1e-8);

    let o = pieri(&[
        "solve",
        "-m",
        "2",
        "-p",
        "2",
        "-q",
        "0",
        "--seed",
        "1",
        "--workers",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("solutions: 2 (expected 2)"));
}

#[test]
fn solve_reads_problem_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = pieri::ProblemInput::random(2, 3, 0, 9).unwrap();
    let path = write_system(dir.path(), "problem.json", &input.to_json());
    let o = pieri(&["solve", "-m", "2", "-p", "3", "--input", &path]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("solutions: 5 (expected 5)"));
    // sizes disagreeing with the file, and a malformed file
    assert_eq!(
        pieri(&["solve", "-m", "2", "-p", "2", "--input", &path])
            .status
            .code(),
        Some(2)
    );
    let bad = write_system(dir.path(), "bad.json", "{\"m\": 2");
    assert_eq!(
        pieri(&["solve", "-m", "2", "-p", "2", "--input", &bad])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pieri(&["solve", "-m", "2", "-p", "2", "--schedule", "static"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn track_finds_closed_form_roots() {
    let dir = tempfile::tempdir().unwrap();
    let system = write_system(
        dir.path(),
        "sys.json",
        r#"{"nvars": 2, "polys": [
            [{"re": 1, "im": 0, "exp": [2, 0]}, {"re": -4, "im": 0, "exp": [0, 0]}],
            [{"re": 1, "im": 0, "exp": [0, 2]}, {"re": -9, "im": 0, "exp": [0, 0]}]]}"#,
    );
    let out = dir.path().join("endpoints.json");
    let o = pieri(&[
        "track",
        "--input",
        &system,
        "--workers",
        "2",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("starts: 4, converged: 4, diverged: 0, failed: 0"));
    let file: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let mut roots: Vec<(i64, i64)> = file["paths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            let e = p["endpoint"].as_array().unwrap();
            let x = e[0].as_array().unwrap();
            let y = e[1].as_array().unwrap();
            assert!(x[1].as_f64().unwrap().abs() < 1e-8 && y[1].as_f64().unwrap().abs() < 1e-8);
            (
                x[0].as_f64().unwrap().round() as i64,
                y[0].as_f64().unwrap().round() as i64,
            )
        })
        .collect();
    roots.sort();
    assert_eq!(roots, vec![(-2, -3), (-2, 3), (2, -3), (2, 3)]);

    let single = write_system(
        dir.path(),
        "one.json",
        r#"{"nvars": 1, "polys": [[{"re": 1, "im": 0, "exp": [2]}, {"re": -1, "im": 0, "exp": [0]}]]}"#,
    );
    let o = pieri(&["track", "--input", &single]);
    assert!(stdout(&o).contains("converged: 2"));

    let empty = write_system(dir.path(), "empty.json", r#"{"nvars": 1, "polys": []}"#);
    assert_eq!(pieri(&["track", "--input", &empty]).status.code(), Some(2));
}

#[test]
fn bench_prints_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let o = pieri(&[
        "bench",
        "--workers",
        "1,2",
        "--profile",
        "uniform",
        "--jobs",
        "20",
        "--output",
        log.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("improvement"));
    assert_eq!(text.lines().filter(|l| l.contains('|')).count(), 3);
    let events = fs::read_to_string(&log).unwrap();
    assert!(events
        .lines()
        .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}
