//! The `mlci` binary: exit codes, atomic outputs, determinism and rendering.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GOLDEN_NOMINAL: &str = include_str!("golden/paper_9x9_nominal.txt");

fn mlci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlci")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

struct World {
    dir: tempfile::TempDir,
}

impl World {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let out = mlci(&[
            "build-grid",
            "--config",
            config,
            "--out-mdp",
            p(&dir.path().join("nominal.json")),
            "--out-truth",
            p(&dir.path().join("truth.json")),
            "--out-true-mdp",
            p(&dir.path().join("true.json")),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&mlci(&["--help"])), 0);
    assert_eq!(code(&mlci(&["infer", "--help"])), 0);
    assert_eq!(code(&mlci(&["frobnicate"])), 64);
    let w = World::new("tiny_3x3_oracle");
    let out = w.path("d.json");
    assert_eq!(code(&mlci(&["sample", "--mdp", p(&w.path("true.json")), "--n", "0", "--out", p(&out)])), 64);
    assert!(!out.exists());
}

#[test]
fn corrupt_input_exits_3_without_output() {
    let w = World::new("tiny_3x3_oracle");
    let bad = w.path("bad.json");
    std::fs::write(&bad, b"{\"schema\": \"mlci-demos/1\", \"trajectories\": [").unwrap();
    let out = w.path("r.json");
    let res = mlci(&["infer", "--mdp", p(&w.path("nominal.json")), "--demos", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&res), 3);
    assert!(!res.stderr.is_empty());
    assert!(!out.exists());
    let missing = mlci(&["infer", "--mdp", p(&w.path("nope.json")), "--demos", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&missing), 3);
}

#[test]
fn infeasible_demo_exits_2() {
    let w = World::new("tiny_3x3_oracle");
    let demos = w.path("demos.json");
    // a demo from the nominal grid that enters a planted constraint
    std::fs::write(&demos, br#"{"schema": "mlci-demos/1", "trajectories": [{"states": [0, 0], "actions": [0]}]}"#)
        .unwrap();
    let out = w.path("r.json");
    let res = mlci(&["infer", "--mdp", p(&w.path("nominal.json")), "--demos", p(&demos), "--out", p(&out)]);
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(!out.exists());
}

#[test]
fn sample_infer_eval_pipeline() {
    let w = World::new("paper_9x9");
    let demos = w.path("demos.json");
    let res = mlci(&[
        "sample",
        "--mdp",
        p(&w.path("nominal.json")),
        "--constraints",
        p(&w.path("truth.json")),
        "--n",
        "100",
        "--seed",
        "1",
        "--out",
        p(&demos),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let result = w.path("result.json");
    let res =
        mlci(&["infer", "--mdp", p(&w.path("nominal.json")), "--demos", p(&demos), "--seed", "1", "--out", p(&result)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&result).unwrap();
    assert!(text.contains("\"schema\": \"mlci-result/1\""), "{text}");
    let csv = w.path("eval.csv");
    let res = mlci(&[
        "eval",
        "--result",
        p(&result),
        "--truth",
        p(&w.path("truth.json")),
        "--mdp",
        p(&w.path("nominal.json")),
        "--out",
        p(&csv),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let rows: Vec<String> = std::fs::read_to_string(&csv).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("n_demos,threshold,seed,fp_rate,final_kl,n_selected"), "{}", rows[0]);
    assert!(rows[1].starts_with("100,0.1,1,0,"), "{}", rows[1]);
}

#[test]
fn state_hypothesis_on_room_grid() {
    let w = World::new("human_room_grid");
    let demos = w.path("demos.json");
    assert_eq!(code(&mlci(&["sample", "--mdp", p(&w.path("true.json")), "--n", "30", "--out", p(&demos)])), 0);
    let result = w.path("result.json");
    let res = mlci(&[
        "infer",
        "--mdp",
        p(&w.path("nominal.json")),
        "--demos",
        p(&demos),
        "--hypothesis",
        "state",
        "--out",
        p(&result),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&result).unwrap();
    assert!(text.contains("\"kind\": \"state\""));
    assert!(!text.contains("\"kind\": \"action\"") && !text.contains("\"kind\": \"feature\""));
}

#[test]
fn nominal_render_matches_golden() {
    let w = World::new("paper_9x9");
    let res = mlci(&["render", "--mdp", p(&w.path("nominal.json"))]);
    assert_eq!(code(&res), 0);
    assert_eq!(String::from_utf8(res.stdout).unwrap(), GOLDEN_NOMINAL);
    // the bottom row carries the brightest band
    let rows: Vec<&str> = GOLDEN_NOMINAL.lines().collect();
    assert!(rows[10].chars().filter(|c| "#%@".contains(*c)).count() >= 7);
    assert!(rows[2..9].iter().all(|r| r.trim_matches(|c| c == '|' || c == ' ').is_empty()));
}

#[test]
fn svg_render_is_deterministic_and_marks_constraints() {
    let w = World::new("paper_9x9");
    let (a, b) = (w.path("a.svg"), w.path("b.svg"));
    for out in [&a, &b] {
        let res = mlci(&[
            "render",
            "--mdp",
            p(&w.path("nominal.json")),
            "--constraints",
            p(&w.path("truth.json")),
            "--format",
            "svg",
            "--out",
            p(out),
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    let svg = std::fs::read(&a).unwrap();
    assert_eq!(svg, std::fs::read(&b).unwrap());
    // blue, two diagonals and three states
    assert_eq!(String::from_utf8(svg).unwrap().matches("<path").count(), 6);
}

#[test]
fn learn_reward_writes_weights() {
    let w = World::new("tiny_3x3_oracle");
    let demos = w.path("demos.json");
    assert_eq!(code(&mlci(&["sample", "--mdp", p(&w.path("true.json")), "--n", "50", "--out", p(&demos)])), 0);
    let weights = w.path("w.json");
    let res = mlci(&[
        "learn-reward",
        "--mdp-skeleton",
        p(&w.path("nominal.json")),
        "--demos",
        p(&demos),
        "--iters",
        "20",
        "--out",
        p(&weights),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(std::fs::read_to_string(&weights).unwrap().contains("\"diverged\": false"));
    let res = mlci(&[
        "learn-reward",
        "--mdp-skeleton",
        p(&w.path("nominal.json")),
        "--demos",
        p(&demos),
        "--lr=-5",
        "--iters",
        "100",
        "--out",
        p(&weights),
    ]);
    assert_eq!(code(&res), 64);
}

#[test]
fn sweep_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (runs, summary) = (dir.path().join("runs.csv"), dir.path().join("summary.csv"));
    let res = mlci(&[
        "eval",
        "--grid",
        "tiny_3x3_oracle",
        "--n-demos",
        "1,10",
        "--thresholds",
        "0.1",
        "--seeds",
        "3",
        "--out",
        p(&runs),
        "--summary",
        p(&summary),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(std::fs::read_to_string(&runs).unwrap().lines().count(), 1 + 2 * 3);
    assert_eq!(std::fs::read_to_string(&summary).unwrap().lines().count(), 1 + 2);
}
