use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "axis,scheme,ergodic,ci,asymptotic,cutset,alpha,flagged";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimo-relay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("sweep.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "M = 2\nN = 3\nK = [1, 4]\nschemes = [\"MF\", \"MF-ZF\", \"MF-RZF-opt\", \"AF-cutset\"]\ne = 0.1\n";

#[test]
fn sweep_writes_csv_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = run(&["sweep", &cfg, "--trials", "100", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.split(',').count() == 8));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = run(&["sweep", &cfg, "--trials", "150", "--seed", "3"]);
    let b = run(&["sweep", &cfg, "--trials", "150", "--seed", "3", "--threads", "1"]);
    let c = run(&["sweep", &cfg, "--trials", "150", "--seed", "3", "--threads", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let d = run(&["sweep", &cfg, "--trials", "150", "--seed", "4"]);
    assert_ne!(a.stdout, d.stdout);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("fig6.csv");
    let out = run(&["preset", "fig6", "--trials", "100", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&target).unwrap();
    assert!(text.starts_with(HEADER));
    // Nine QNR points, five schemes.
    assert_eq!(text.lines().count(), 1 + 9 * 5);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in ["M = 2\nN = 3\nK = 4\nbogus = 1\n", "M = 0\nN = 3\nK = 4\n", "M = 2\nN = 3\nK = 4\ntrials = 10\n", "not toml ="] {
        let cfg = write_config(dir.path(), body);
        let out = run(&["sweep", &cfg]);
        assert_eq!(out.status.code(), Some(2), "config {body:?}");
        assert!(out.stdout.is_empty());
    }
    assert_eq!(run(&["preset", "fig9"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "/nonexistent/sweep.toml"]).status.code(), Some(2));
    assert_eq!(run(&["preset", "fig2", "--trials", "5"]).status.code(), Some(2));
}

#[test]
fn all_cells_failing_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "M = 2\nN = 3\nK = [0]\nscheme = \"MF-RZF-opt\"\ntrials = 100\n");
    let out = run(&["sweep", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(",MF-RZF-opt,ERR,"));
}

#[test]
fn verify_passes() {
    let out = run(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}
