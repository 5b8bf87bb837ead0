use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const FIXTURE: &str = "i will try my best to bring jobs back\n\
                       we try my best to win every state\n\
                       they try my best to fix the roads fast\n";

const NOODLE_CANDIDATES: [&str; 4] = [
    "try my best to i eat an instant noodle",
    "i try my best to eat an instant noodle",
    "i eat try my best to an instant noodle",
    "i eat an instant noodle try my best to",
];

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cfg.toml"), "min_support = 0.5\n").unwrap();
        Env { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn cmd(&self, args: &[&str]) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_stylemirror"));
        c.arg("--config")
            .arg(self.path("cfg.toml"))
            .arg("--state")
            .arg(self.path("s.json"))
            .args(args)
            .env_remove("STYLEMIRROR_STATE")
            .env_remove("STYLEMIRROR_EMBEDDER_URL")
            .env_remove("STYLEMIRROR_CONFIG");
        c
    }

    fn run(&self, args: &[&str]) -> Output {
        self.cmd(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn ingest_fixture(&self) {
        let f = self.write("fixture.txt", FIXTURE);
        self.ok(&["ingest", f.to_str().unwrap()]);
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    let env = Env::new();
    assert_eq!(code(&env.run(&["--help"])), 0);
    assert_eq!(code(&env.run(&["frobnicate"])), 1);
    assert_eq!(code(&env.run(&["transform"])), 1);
    assert_eq!(code(&env.run(&["ingest", s(&env.path("missing.txt"))])), 2);
    env.write("cfg.toml", "min_suport = 0.5\n");
    assert_eq!(code(&env.run(&["state", "show"])), 1);
    env.write("cfg.toml", "min_support = 2.0\n");
    assert_eq!(code(&env.run(&["state", "show"])), 1);
}

#[test]
fn version_mismatch_is_state_format_error() {
    let env = Env::new();
    env.ingest_fixture();
    let text = std::fs::read_to_string(env.path("s.json")).unwrap();
    std::fs::write(env.path("s.json"), text.replacen("\"version\": 1", "\"version\": 7", 1)).unwrap();
    let out = env.run(&["state", "show"]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('7') && err.contains('1'), "{err}");
    std::fs::write(env.path("s.json"), "{ not json").unwrap();
    assert_eq!(code(&env.run(&["state", "show"])), 3);
}

#[test]
fn show_fresh_and_after_fixture() {
    let env = Env::new();
    let fresh = env.ok(&["state", "show"]);
    assert!(fresh.contains("sentences: 0"));
    assert!(fresh.contains("frequent n-grams: 0"));
    assert!(fresh.contains("patterns: 0"));
    assert!(!env.path("s.json").exists());
    env.ingest_fixture();
    let shown = env.ok(&["state", "show"]);
    let line = shown.lines().find(|l| l.ends_with("* try my best to *")).unwrap();
    let contexts: usize = line.split_whitespace().next().unwrap().parse().unwrap();
    assert!(contexts >= 1);
}

#[test]
fn chunked_ingest_matches_one_shot() {
    let lines: Vec<String> = (0..40)
        .map(|i| match i % 4 {
            0 => format!("you know we win number {i}"),
            1 => format!("believe me the deal {i} is great"),
            2 => format!("i mean you know it {i}"),
            _ => format!("plain words here {i}"),
        })
        .collect();
    let one = Env::new();
    let f = one.write("all.txt", &(lines.join("\n") + "\n"));
    one.ok(&["ingest", s(&f)]);
    let chunked = Env::new();
    let files: Vec<PathBuf> = lines
        .chunks(10)
        .enumerate()
        .map(|(i, c)| chunked.write(&format!("part{i}.txt"), &(c.join("\n") + "\n")))
        .collect();
    for f in &files[..2] {
        chunked.ok(&["ingest", s(f)]);
    }
    chunked.ok(&["ingest", s(&files[2]), s(&files[3])]);
    assert_eq!(
        std::fs::read(one.path("s.json")).unwrap(),
        std::fs::read(chunked.path("s.json")).unwrap()
    );
}

#[test]
fn repeated_ingest_doubles_counts() {
    let env = Env::new();
    env.ingest_fixture();
    env.ingest_fixture();
    let shown = env.ok(&["state", "show"]);
    assert!(shown.contains("sentences: 6"));
    assert!(shown.lines().any(|l| l.trim_start().starts_with("1.0000       6  try my best to")));
}

#[test]
fn empty_file_is_a_noop() {
    let env = Env::new();
    let f = env.write("empty.txt", "\n  \n");
    let out = env.run(&["ingest", s(&f)]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(!env.path("s.json").exists());
}

#[test]
fn failed_ingest_commits_nothing() {
    let env = Env::new();
    env.ingest_fixture();
    let before = std::fs::read(env.path("s.json")).unwrap();
    let good = env.write("more.txt", "another line here\n");
    let out = env.run(&["ingest", s(&good), s(&env.path("missing.txt"))]);
    assert_eq!(code(&out), 2);
    assert_eq!(before, std::fs::read(env.path("s.json")).unwrap());
}

#[test]
fn transform_noodle_example() {
    let env = Env::new();
    env.ingest_fixture();
    let out = env.ok(&["transform", "I eat an instant noodle"]);
    assert!(NOODLE_CANDIDATES.contains(&out.trim()), "{out}");
    let verbose = env.ok(&["transform", "--verbose", "I eat an instant noodle"]);
    assert!(verbose.contains("pattern: * try my best to *"));
    assert_eq!(verbose.lines().filter(|l| l.starts_with("  ")).count(), 4);
}

#[test]
fn transform_without_patterns() {
    let env = Env::new();
    let out = env.run(&["transform", "hello there"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no patterns available; ingest more data"));
}

#[test]
fn transform_file_and_repl() {
    let env = Env::new();
    env.ingest_fixture();
    let f = env.write("in.txt", "i eat an instant noodle\nwe go home\n\nthey fly planes\n");
    let out = env.ok(&["transform", "--file", s(&f)]);
    assert_eq!(out.lines().count(), 3);
    assert!(out.lines().all(|l| l.contains("try my best to")));

    let mut child = env
        .cmd(&["transform", "--repl"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"we go home\nwe go home\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], lines[1]);
}

#[test]
fn eval_identity_and_determinism() {
    let env = Env::new();
    env.ingest_fixture();
    let inputs = env.write("in.txt", "i eat an instant noodle\nwe go home\n");
    let out_dir = env.path("report");
    env.ok(&["eval", "--inputs", s(&inputs), "--outputs", s(&inputs), "--out-dir", s(&out_dir)]);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("eval.json")).unwrap()).unwrap();
    assert!((summary["mean_similarity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(summary["n"], 2);

    env.ok(&["eval", "--inputs", s(&inputs), "--run", "--out-dir", s(&out_dir)]);
    let first = std::fs::read(out_dir.join("eval.csv")).unwrap();
    env.ok(&["eval", "--inputs", s(&inputs), "--run", "--out-dir", s(&out_dir)]);
    assert_eq!(first, std::fs::read(out_dir.join("eval.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("input,output,perplexity,similarity\n"));
    assert_eq!(text.lines().count(), 3);

    let mismatch = env.write("one.txt", "only one\n");
    assert_eq!(code(&env.run(&["eval", "--inputs", s(&inputs), "--outputs", s(&mismatch)])), 2);
}

#[test]
fn eval_fraction_sweep() {
    let env = Env::new();
    env.ingest_fixture();
    let inputs = env.write("in.txt", "i eat an instant noodle\n");
    let out_dir = env.path("sweep");
    let out = env.ok(&[
        "eval", "--inputs", s(&inputs), "--fractions", "0.05,0.5,1", "--out-dir", s(&out_dir),
    ]);
    assert_eq!(out.lines().count(), 4);
    for f in ["sweep-0.05.csv", "sweep-0.5.csv", "sweep-1.csv", "sweep.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn save_load_save_is_byte_identical() {
    let env = Env::new();
    env.ingest_fixture();
    let copy = env.path("copy.json");
    env.ok(&["state", "save", s(&copy)]);
    let first = std::fs::read(&copy).unwrap();
    let other = Env::new();
    other.ok(&["state", "load", s(&copy)]);
    other.ok(&["state", "save", s(&copy)]);
    assert_eq!(first, std::fs::read(&copy).unwrap());
}

#[test]
fn state_path_from_environment() {
    let env = Env::new();
    let f = env.write("fixture.txt", FIXTURE);
    let state = env.path("env-state.json");
    let out = Command::new(env!("CARGO_BIN_EXE_stylemirror"))
        .args(["--config", s(&env.path("cfg.toml")), "ingest", s(&f)])
        .env("STYLEMIRROR_STATE", &state)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(state.exists());
}
