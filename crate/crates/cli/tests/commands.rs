use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensionlab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn values(record: &Value) -> Vec<(f64, f64)> {
    record["values"].as_array().unwrap().iter().map(|v| (v[0].as_f64().unwrap(), v[1].as_f64().unwrap())).collect()
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap()
}

fn sample(dir: &TempDir, name: &str, fixture: &str, grid: &str) -> PathBuf {
    let out = path(dir, name);
    let o = run(&["sample", "--fixture", fixture, "--grid", grid, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn solve_reproduces_linear_boundary() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "lin.json");
    let o = run(&["solve", "--metric", "euclid", "--grid", "-1,-1,33,33,0.0625", "--boundary-from", "linear:2,0.5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fixture = sample(&dir, "fix.json", "linear:2,0.5", "-1,-1,33,33,0.0625");
    let err = values(&json(&out))
        .iter()
        .zip(values(&json(&fixture)))
        .map(|(a, b)| (a.0 - b.0).hypot(a.1 - b.1))
        .fold(0.0, f64::max);
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn solve_tanh_then_audit_passes_with_ratios() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "tanh.json");
    let o = run(&["solve", "--metric", "exp_x", "--grid", "0.5,0,129,65,0.015625", "--boundary-from", "tanh", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("converged=true"));

    let report = path(&dir, "report.json");
    let o = run(&["audit", "--in", s(&out), "--refine", "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&report);
    assert_eq!(r["environment"]["metric"], "exp_x");
    let ratio = check(&r, "lemma1")["refinement_ratio"].as_f64().unwrap();
    assert!((3.0..5.0).contains(&ratio), "{ratio}");
}

#[test]
fn solve_from_boundary_file() {
    let dir = TempDir::new().unwrap();
    let boundary = sample(&dir, "b.json", "tanh:-0.5", "0,0,33,17,0.0625");
    let out = path(&dir, "out.json");
    let o = run(&["solve", "--boundary", s(&boundary), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&out)["metric"]["id"], "exp_x");
    assert!(json(&out).get("source").is_none());
}

#[test]
fn solve_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "x.json");
    let o = run(&["solve", "--metric", "euclid", "--grid", "0,0,2,3,0.1", "--boundary-from", "identity", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("grid-too-small") && stderr(&o).contains("--grid"), "{}", stderr(&o));

    let o = run(&["solve", "--metric", "exp_x", "--grid", "0.5,0,33,17,0.0625", "--boundary-from", "tanh", "--max-iters", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(out.exists());

    let o = run(&["solve", "--metric", "nowhere", "--grid", "0,0,3,3,0.1", "--boundary-from", "identity", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--metric"));

    let o = run(&["solve", "--metric", "euclid", "--grid", "0,0,3,3,0.1", "--boundary-from", "spiral", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--boundary-from"));

    let o = run(&["solve", "--metric", "euclid", "--grid", "0,0,3,3", "--boundary-from", "identity", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn construct_identity_and_errors() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "id.json");
    let o = run(&["construct", "--alpha", "0,0", "--metric", "euclid", "--grid", "-1,-1,17,17,0.125", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rec = json(&out);
    assert_eq!(rec["alpha"][0], 0.0);
    for (k, (re, im)) in values(&rec).into_iter().enumerate() {
        let (i, j) = (k % 17, k / 17);
        let (x, y) = (-1.0 + i as f64 * 0.125, -1.0 + j as f64 * 0.125);
        assert!((re - x).hypot(im - y) < 1e-8, "node {i},{j}: {re},{im}");
    }

    let o = run(&["construct", "--alpha", "0.3,0", "--metric", "gauss_nonflat", "--grid", "-1,-1,17,17,0.125", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("not-flat"));
    let o = run(&["construct", "--alpha", "0.6,0.8", "--metric", "euclid", "--grid", "-1,-1,17,17,0.125", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--alpha"));
}

#[test]
fn constructed_member_has_constant_modulus() {
    let dir = TempDir::new().unwrap();
    let (f, g) = (path(&dir, "f.json"), path(&dir, "g.json"));
    let o = run(&["construct", "--alpha", "0.3,0", "--metric", "exp_x", "--grid", "-1,-1,65,65,0.03125", "--out", s(&f), "--out-inverse", s(&g)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = path(&dir, "r.json");
    run(&["audit", "--in", s(&f), "--out", s(&report)]);
    let r = json(&report);
    assert_eq!(check(&r, "modulus_spread")["verdict"], "pass");
    assert_eq!(check(&r, "tension")["verdict"], "pass");

    let o = run(&["audit", "--in", s(&g), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(json(&report)["environment"]["kind"], "inverse");
}

#[test]
fn audit_controls() {
    let dir = TempDir::new().unwrap();
    let report = path(&dir, "r.json");

    let tanh = sample(&dir, "tanh.json", "tanh", "0.5,0,65,33,0.03125");
    let o = run(&["audit", "--in", s(&tanh), "--refine", "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(check(&json(&report), "hopf_holomorphy")["refinement_ratio"].is_f64());

    let peaked = sample(&dir, "peaked.json", "peaked", "-1,-1,65,65,0.03125");
    let o = run(&["audit", "--in", s(&peaked), "--out", s(&report)]);
    assert_eq!(code(&o), 3);
    assert_eq!(check(&json(&report), "lemma1")["verdict"], "fail");

    let conformal = sample(&dir, "conf.json", "conformal", "-1,-1,65,65,0.03125");
    let o = run(&["audit", "--in", s(&conformal), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(check(&json(&report), "lemma1")["verdict"], "not_applicable");

    let o = run(&["audit", "--in", s(&conformal), "--tol-lemma2", "1e-9"]);
    assert_eq!(code(&o), 3);

    let o = run(&["audit", "--in", s(&path(&dir, "missing.json"))]);
    assert_eq!(code(&o), 1);
    std::fs::write(path(&dir, "garbage.json"), "{\"format_version\": 1").unwrap();
    let o = run(&["audit", "--in", s(&path(&dir, "garbage.json"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn refine_needs_a_source() {
    let dir = TempDir::new().unwrap();
    let boundary = sample(&dir, "b.json", "tanh", "0.5,0,17,9,0.125");
    let out = path(&dir, "o.json");
    run(&["solve", "--boundary", s(&boundary), "--out", s(&out)]);
    let o = run(&["audit", "--in", s(&out), "--refine"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--refine"));
}

#[test]
fn distance_of_linear_maps() {
    let dir = TempDir::new().unwrap();
    let a = sample(&dir, "a.json", "linear:2,0", "-1,-1,9,9,0.25");
    let b = sample(&dir, "b.json", "linear:1,0", "-1,-1,9,9,0.25");
    let csv = path(&dir, "d.csv");
    let inputs = format!("{},{}", s(&a), s(&b));
    let o = run(&["distance", "--in", &inputs, "--out", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let d: f64 = text.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((d - 3f64.ln()).abs() <= 1e-12, "{d}");

    let inputs = format!("{},{}", s(&a), s(&a));
    run(&["distance", "--in", &inputs, "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "a,0,0");

    let c = sample(&dir, "c.json", "linear:1,0", "-1,-1,9,7,0.25");
    let inputs = format!("{},{}", s(&a), s(&c));
    let o = run(&["distance", "--in", &inputs, "--out", s(&csv)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("grid-mismatch"));

    let o = run(&["distance", "--in", s(&a), "--out", s(&csv)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn distance_between_members_matches_the_disk() {
    let dir = TempDir::new().unwrap();
    let mut inputs = Vec::new();
    for (k, alpha) in ["0,0", "0.3,0", "-0.2,0.4"].iter().enumerate() {
        let (f, g) = (path(&dir, &format!("f{k}.json")), path(&dir, &format!("g{k}.json")));
        let o = run(&["construct", "--alpha", alpha, "--metric", "exp_x", "--grid", "-1,-1,65,65,0.03125", "--out", s(&f), "--out-inverse", s(&g)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        inputs.push(s(&g).to_string());
    }
    let csv = path(&dir, "d.csv");
    let o = run(&["distance", "--in", &inputs.join(","), "--out", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains("d_hyperbolic,g0,g1,g2"), "{text}");
    let last = text.lines().last().unwrap();
    let (name, value) = last.split_once(',').unwrap();
    assert_eq!(name, "max_discrepancy");
    assert!(value.parse::<f64>().unwrap() <= 2e-2, "{last}");
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    text.lines().skip(1).map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn example51_table() {
    let dir = TempDir::new().unwrap();
    let csv = path(&dir, "e.csv");
    let summary = path(&dir, "s.json");
    let o = run(&["example51", "--c", "1", "--variant", "paper", "--xrange", "-20,20,401", "--out", s(&csv), "--summary", s(&summary)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let (x, mu, up) = (column(&text, "x"), column(&text, "mu"), column(&text, "uprime"));
    let k = x.iter().position(|x| *x == 0.0).unwrap();
    assert!((mu[k] + 0.2679492).abs() < 1e-7);
    assert!((up[k] - 0.5773503).abs() < 1e-7);
    let (left, right) = (column(&text, "left_ratio"), column(&text, "right_ratio"));
    assert!((0.99..=1.01).contains(&left[0]), "{}", left[0]);
    assert!((0.99..=1.01).contains(right.last().unwrap()), "{}", right.last().unwrap());
    let nu = column(&text, "nu_residual");
    for (m, r) in mu.iter().zip(&nu) {
        assert!((r - (m * (1.0 + m)).abs() / 2.0).abs() <= 1e-6);
    }
    let sm = json(&summary);
    assert!(sm["sup_u_bound"].as_f64().unwrap() < 1.32);
    assert_eq!(sm["variant"], "paper_literal");

    let o = run(&["example51", "--c", "1", "--variant", "corrected", "--xrange", "-10,10,101", "--out", s(&csv), "--summary", s(&summary)]);
    assert_eq!(code(&o), 0);
    let nu = column(&std::fs::read_to_string(&csv).unwrap(), "nu_residual");
    assert!(nu.iter().all(|r| *r <= 1e-12));

    for c in ["0", "-1"] {
        let o = run(&["example51", "--c", c, "--out", s(&csv)]);
        assert_eq!(code(&o), 1);
        assert!(stderr(&o).contains("--c"));
    }
    let o = run(&["example51", "--c", "1", "--variant", "other", "--out", s(&csv)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let out = path(&dir, &format!("m{k}.json"));
            run(&["construct", "--alpha", "-0.2,0.4", "--metric", "exp_y", "--grid", "-1,-1,17,17,0.125", "--out", s(&out)]);
            std::fs::read(&out).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);

    let csvs: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let out = path(&dir, &format!("e{k}.csv"));
            run(&["example51", "--c", "0.5", "--out", s(&out), "--summary", s(&path(&dir, "s.json"))]);
            std::fs::read(&out).unwrap()
        })
        .collect();
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn theta_metric_is_recorded() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "t.json");
    let o = run(&["solve", "--theta", "1,0", "--grid", "0.5,0,17,9,0.125", "--boundary-from", "tanh", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rec = json(&out);
    assert_eq!(rec["metric"]["id"], "theta");
    assert_eq!(rec["metric"]["coefficients"], serde_json::json!([[0.0, 0.0], [2.0, 0.0]]));
    assert_eq!(rec["metric"]["flat"], true);
}
