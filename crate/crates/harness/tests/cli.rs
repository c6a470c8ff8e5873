mod common;

use std::path::Path;

use common::*;
use improvevolve::bench::{table_fixture, KNOWN_BEST};
use improvevolve::svg::polyline_points;
use serde_json::Value;

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "one.json", r#"{"problem":"hex","n":1,"centers":[[0,0]],"angles":[0]}"#);
    write(d, "overlap.json", r#"{"problem":"hex","n":2,"centers":[[0,0],[0.5,0]],"angles":[0,0]}"#);
    write(d, "negative.json", r#"{"problem":"aci","values":[1,-0.5,1]}"#);
    write(d, "garbage.json", "nope");
    write(d, "short.json", r#"{"problem":"hex","n":2,"centers":[[0,0]],"angles":[0,0]}"#);

    let (code, out, _) = run(&["validate", "one.json"], d);
    assert_eq!(code, 0);
    assert!(out.contains("L = 1.0000000000"), "{out}");
    let (code, out, _) = run(&["validate", "overlap.json"], d);
    assert_eq!(code, 1);
    assert!(out.contains("hexagons 0 and 1"), "{out}");
    let (code, out, _) = run(&["validate", "negative.json"], d);
    assert_eq!(code, 1);
    assert!(out.contains("negative sample"), "{out}");
    for bad in ["garbage.json", "short.json", "missing.json"] {
        assert_eq!(run(&["validate", bad], d).0, 2, "{bad}");
    }
    assert_eq!(run(&["frobnicate"], d).0, 2);
}

fn fitness_line(out: &str) -> f64 {
    let line = out.lines().find_map(|l| l.strip_prefix("fitness ")).unwrap_or_else(|| panic!("no fitness in {out}"));
    line.trim().parse().unwrap()
}

#[test]
fn solving_one_hexagon_gives_side_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run(&["solve", "hex", "--n", "1", "--preset", "table3-hex", "--out", "best.json"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert!((fitness_line(&out) + 1.0).abs() <= 1e-6, "{out}");
    assert_eq!(run(&["validate", "best.json"], dir.path()).0, 0);
}

#[test]
fn a_only_runs_no_stage_b() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "solve", "aci", "--resolution", "32", "--stage-mode", "A-only", "--k", "2", "--grid", "extended", "--extended-cap",
        "32", "--trace", "t.jsonl", "--out", "f.json",
    ];
    let (code, out, err) = run(&args, dir.path());
    assert_eq!(code, 0, "{err}");
    assert!(fitness_line(&out) > 0.5);
    let trace = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    let stages: Vec<String> =
        trace.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["stage"].as_str().unwrap().to_string()).collect();
    assert_eq!(stages, ["A", "A"]);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(&["solve", "hex", "--resolution", "64"], d).0, 2);
    assert_eq!(run(&["solve", "aci", "--hex-mode", "sqp"], d).0, 2);
    assert_eq!(run(&["solve", "hex", "--preset", "huge"], d).0, 2);
    assert_eq!(run(&["solve", "hex", "--sigmas", "1,-1"], d).0, 2);
    assert_eq!(run(&["evolve", "hex", "--archive", "a.json", "--mutation", "external"], d).0, 2);
    write(d, "cfg.json", r#"{"k": 2, "bogus": 1}"#);
    assert_eq!(run(&["solve", "hex", "--config", "cfg.json"], d).0, 2);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "cfg.json", r#"{"k": 3, "rounds": 1, "sigmas": [0.5], "stage-mode": "A-only"}"#);
    let (code, _, err) = run(&["solve", "hex", "--n", "3", "--config", "cfg.json", "--k", "2", "--trace", "t.jsonl"], d);
    assert_eq!(code, 0, "{err}");
    assert_eq!(std::fs::read_to_string(d.join("t.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn render_structure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "one.json", r#"{"problem":"hex","n":1,"centers":[[0,0]],"angles":[0]}"#);
    write(d, "flat.json", &format!(r#"{{"problem":"aci","values":{:?}}}"#, vec![1.0; 9]));
    assert_eq!(run(&["render", "one.json", "one.svg"], d).0, 0);
    let svg = std::fs::read_to_string(d.join("one.svg")).unwrap();
    assert_eq!(svg.matches("<polygon").count(), 2);
    assert!(svg.contains("L = 1.0000"));

    assert_eq!(run(&["render", "flat.json", "flat.svg"], d).0, 0);
    let svg = std::fs::read_to_string(d.join("flat.svg")).unwrap();
    let g = polyline_points(&svg, "autoconvolution").unwrap();
    assert_eq!(g.len(), 17);
    // screen y grows downward, so the peak has the smallest y
    let peak = (0..g.len()).min_by(|&a, &b| g[a].1.total_cmp(&g[b].1)).unwrap();
    assert_eq!(peak, 8);

    let (code, _, err) = run(&["solve", "hex", "--n", "4", "--k", "3", "--rounds", "2", "--trace", "t.jsonl"], d);
    assert_eq!(code, 0, "{err}");
    assert_eq!(run(&["render", "t.jsonl", "t.svg"], d).0, 0);
    let curve = polyline_points(&std::fs::read_to_string(d.join("t.svg")).unwrap(), "best-fitness").unwrap();
    assert!(curve.len() > 3);
    assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9), "{curve:?}");

    write(d, "junk.json", "{}");
    assert_eq!(run(&["render", "junk.json", "junk.svg"], d).0, 2);
}

#[test]
fn bench_strings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, _, err) = run(&["solve", "hex", "--n", "13", "--k", "1", "--rounds", "0", "--out", "l13.json"], d);
    assert_eq!(code, 0, "{err}");
    let (code, out, _) = run(&["bench", "l13.json"], d);
    assert_eq!(code, 0);
    assert!(out.contains("matches Human 4.0000"), "{out}");
    write(d, "aci.json", r#"{"problem":"aci","values":[1,1,1,1]}"#);
    let (code, out, _) = run(&["bench", "aci.json"], d);
    assert_eq!(code, 0);
    assert!(out.contains("0.96258") && out.contains("gap"), "{out}");
    write(d, "overlap.json", r#"{"problem":"hex","n":2,"centers":[[0,0],[0.5,0]],"angles":[0,0]}"#);
    assert_eq!(run(&["bench", "overlap.json"], d).0, 1);
}

fn evolve(dir: &Path, generations: &str, resume: bool) -> i32 {
    let mut args = vec![
        "evolve", "hex", "--n", "4", "--generations", generations, "--seed", "0", "--k", "2", "--rounds", "1",
        "--sigmas", "0.5,0.05", "--offspring", "3", "--archive", "archive.json",
    ];
    if resume {
        args.push("--resume");
    }
    let (code, _, err) = run(&args, dir);
    assert_eq!(code, 0, "{err}");
    code
}

fn report(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("archive.report.jsonl")).unwrap()
}

#[test]
fn evolution_reports_are_reproducible_and_resumable() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    evolve(a.path(), "5", false);
    evolve(b.path(), "5", false);
    assert_eq!(report(a.path()), report(b.path()));
    assert_eq!(report(a.path()).lines().count(), 15);

    evolve(c.path(), "3", false);
    evolve(c.path(), "2", true);
    assert_eq!(report(a.path()), report(c.path()));
}

#[test]
fn known_best_table_matches_the_fixture() {
    let fixture = include_str!("fixtures/known_best.tsv");
    assert_eq!(table_fixture(), fixture);
    assert_eq!(fixture.lines().count(), KNOWN_BEST.len());
}
