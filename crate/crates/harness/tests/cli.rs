use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn adapair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adapair")).args(args).output().expect("spawn adapair")
}

fn ok(args: &[&str]) -> String {
    let out = adapair(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    adapair(args).status.code().unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Parses a CSV body into a header and rows of fields.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const SMALL: &str = "synthetic:n=200,d=4,sep=2,seed=1";

#[test]
fn train_writes_schema_and_summary() {
    let out = ok(&["train", "--data", SMALL, "--repeats", "3", "--gamma0", "0.2"]);
    assert!(out.starts_with("dataset,algorithm,seed,auc,objective,seconds,grad_evals,stages\n"));
    let (h, rows) = table(&out);
    assert_eq!(rows.len(), 5);
    let seeds: Vec<_> = rows.iter().map(|r| r[col(&h, "seed")].as_str()).collect();
    assert_eq!(seeds, ["0", "1", "2", "summary", "summary"]);
    assert_eq!(rows[3][col(&h, "algorithm")], "adaptive/mean");
    assert_eq!(rows[4][col(&h, "algorithm")], "adaptive/stderr");
    for r in &rows[..3] {
        let auc: f64 = r[col(&h, "auc")].parse().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert_eq!(r[col(&h, "seconds")], "NA");
    }
}

#[test]
fn single_repeat_has_na_stderr() {
    let (h, rows) = table(&ok(&["train", "--data", SMALL, "--repeats", "1", "--gamma0", "0.2"]));
    let stderr = rows.iter().find(|r| r[col(&h, "algorithm")] == "adaptive/stderr").unwrap();
    assert_eq!(stderr[col(&h, "auc")], "NA");
}

#[test]
fn timing_flag_fills_seconds() {
    let (h, rows) = table(&ok(&["train", "--data", SMALL, "--repeats", "1", "--gamma0", "0.2", "--timing"]));
    assert!(rows[0][col(&h, "seconds")].parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn plain_flag_names_algorithm() {
    let (h, rows) = table(&ok(&["train", "--data", SMALL, "--repeats", "1", "--gamma0", "0.2", "--plain"]));
    assert_eq!(rows[0][col(&h, "algorithm")], "plain");
    assert_eq!(rows[0][col(&h, "stages")], "1");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["train", "--data", "/no/such/file"]), 1);
    assert_eq!(code(&["train", "--data", SMALL, "--loss", "cubic"]), 1);
    assert_eq!(code(&["train", "--data", SMALL, "--beta", "1"]), 1);
    assert_eq!(code(&["stability", "--loss", "squared"]), 1);
    assert_eq!(code(&["gen-synth", "--n", "1"]), 1);

    let dir = TempDir::new().unwrap();
    let garbage = write(&dir, "bad.svm", "+1 1:0.5\nnot a libsvm line\n");
    assert_eq!(code(&["train", "--data", s(&garbage)]), 2);
    let one_class = write(&dir, "one.csv", "0.1,1\n0.2,1\n");
    assert_eq!(code(&["auc", "--input", s(&one_class)]), 2);
}

#[test]
fn divergence_is_a_runtime_failure_with_marker_rows() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.csv");
    let c = code(&["train", "--data", "synthetic:n=200,d=4,sep=10,seed=1", "--gamma0", "100", "--repeats", "2", "--out", s(&out)]);
    assert_eq!(c, 2);
    let (h, rows) = table(&std::fs::read_to_string(&out).unwrap());
    assert!(rows.iter().any(|r| r[col(&h, "algorithm")] == "adaptive/failed" && r[col(&h, "auc")] == "NA"));
    assert!(rows.iter().all(|r| r[col(&h, "seed")] != "summary"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.cfg", &format!("# small run\ndata = {SMALL}\nrepeats = 2\nseed = 5\ngamma0 = 0.2\n"));
    let (h, rows) = table(&ok(&["train", "--config", s(&cfg), "--seed", "7"]));
    let seeds: Vec<_> = rows.iter().map(|r| r[col(&h, "seed")].as_str()).collect();
    assert_eq!(seeds, ["7", "8", "summary", "summary"]);
    let bad = write(&dir, "bad.cfg", "repeats = lots\n");
    assert_eq!(code(&["train", "--config", s(&bad)]), 1);
}

#[test]
fn bench_accounting_and_traces() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench.csv");
    // 400 training rows, m0 = 60, β = 2: stages 60, 120, 240, 400
    ok(&["bench", "--data", "synthetic:n=500,d=5,sep=2,seed=3", "--m0", "60", "--beta", "2", "--gamma0", "0.2", "--repeats", "2", "--out", s(&out)]);
    let (h, rows) = table(&std::fs::read_to_string(&out).unwrap());
    let (th, trace) = table(&std::fs::read_to_string(dir.path().join("bench.trace.csv")).unwrap());
    assert_eq!(th.join(","), "algorithm,seed,stage,m,inner_iters,gamma,grad_evals,objective,test_auc,seconds");
    let expected_stages = (400f64 / 60.0).log2().ceil() as usize + 1;
    for r in rows.iter().filter(|r| r[col(&h, "seed")] != "summary") {
        let (alg, seed) = (&r[col(&h, "algorithm")], &r[col(&h, "seed")]);
        let stages: Vec<_> = trace.iter().filter(|t| &t[0] == alg && &t[1] == seed).collect();
        let total: u64 = stages.iter().map(|t| t[col(&th, "inner_iters")].parse::<u64>().unwrap()).sum();
        assert_eq!(r[col(&h, "grad_evals")], total.to_string());
        let last: u64 = stages.last().unwrap()[col(&th, "grad_evals")].parse().unwrap();
        assert_eq!(last, total, "trace grad_evals is cumulative");
        assert_eq!(r[col(&h, "stages")], stages.len().to_string());
        if alg == "adaptive" {
            assert_eq!(stages.len(), expected_stages);
            let ms: Vec<_> = stages.iter().map(|t| t[col(&th, "m")].as_str()).collect();
            assert_eq!(ms, ["60", "120", "240", "400"]);
        }
    }
    // plain runs at the adaptive budget
    let evals = |alg: &str| -> Vec<String> {
        rows.iter()
            .filter(|r| r[col(&h, "algorithm")] == alg && r[col(&h, "seed")] != "summary")
            .map(|r| r[col(&h, "grad_evals")].clone())
            .collect()
    };
    assert_eq!(evals("adaptive"), evals("plain"));
}

fn variance_table(args: &[&str]) -> Vec<(f64, f64, f64, f64)> {
    let (h, rows) = table(&ok(args));
    assert_eq!(h.join(","), "probe,var_uniform,var_opposite,stderr_uniform,stderr_opposite");
    rows.iter()
        .map(|r| {
            let f = |i: usize| r[i].parse::<f64>().unwrap();
            (f(1), f(2), f(3), f(4))
        })
        .collect()
}

#[test]
fn variance_opposite_below_uniform_on_small_fixture() {
    let rows = variance_table(&["variance", "--data", "synthetic:n=20,d=3,sep=1,seed=2"]);
    assert_eq!(rows.len(), 11);
    for (u, o, _, _) in rows {
        assert!(o < u, "opposite {o} not below uniform {u}");
    }
}

#[test]
fn variance_vanishes_on_duplicated_pair() {
    let dir = TempDir::new().unwrap();
    let line = "+1 1:0.5 2:-1\n-1 1:0.5 2:-1\n";
    let data = write(&dir, "dup.svm", &line.repeat(3));
    for loss in ["squared", "hinge"] {
        for (u, o, _, _) in variance_table(&["variance", "--data", s(&data), "--loss", loss]) {
            assert_eq!((u, o), (0.0, 0.0));
        }
    }
}

#[test]
fn variance_monte_carlo_agrees_with_enumeration() {
    let data = "synthetic:n=20,d=3,sep=1,seed=2";
    let exact = variance_table(&["variance", "--data", data, "--probes", "4"]);
    let mc = variance_table(&["variance", "--data", data, "--probes", "4", "--mc-draws", "20000"]);
    for ((u, o, _, _), (mu, mo, su, so)) in exact.into_iter().zip(mc) {
        assert!((mu - u).abs() <= 3.0 * su, "uniform: mc {mu} ± {su} vs exact {u}");
        assert!((mo - o).abs() <= 3.0 * so, "opposite: mc {mo} ± {so} vs exact {o}");
    }
}

#[test]
fn stability_emits_grid_rows() {
    let (h, rows) = table(&ok(&["stability", "--n-grid", "40,80", "--repeats", "2", "--probe-pairs", "10", "--gamma0", "0.2"]));
    assert_eq!(h.join(","), "n,measured_mean,measured_stderr,bound_mean");
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["40", "80"]);
    for r in rows {
        assert!(r[1].parse::<f64>().unwrap() >= 0.0);
        assert!(r[3].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn gen_synth_round_trips_through_train() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("s.svm");
    ok(&["gen-synth", "--n", "150", "--d", "3", "--seed", "4", "--out", s(&path)]);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 150);
    assert!(text.lines().all(|l| l.starts_with("+1 ") || l.starts_with("-1 ")));
    assert_eq!(ok(&["gen-synth", "--n", "150", "--d", "3", "--seed", "4"]), text);
    let (h, rows) = table(&ok(&["train", "--data", s(&path), "--repeats", "1", "--gamma0", "0.2"]));
    assert_eq!(rows[0][col(&h, "dataset")], "s");
}

#[test]
fn auc_command_matches_hand_count() {
    let dir = TempDir::new().unwrap();
    // positives 0.9, 0.5; negatives 0.5, 0.1: 3 wins and one tie of 4 pairs
    let input = write(&dir, "scores.csv", "0.9,1\n0.5,1\n0.5,-1\n0.1,0\n");
    let (_, rows) = table(&ok(&["auc", "--input", s(&input)]));
    assert_eq!(rows, [["rank", "0.875"], ["bruteforce", "0.875"]]);
    let (_, rows) = table(&ok(&["auc", "--input", s(&input), "--ties", "strict"]));
    assert_eq!(rows, [["rank", "0.75"], ["bruteforce", "0.75"]]);
}
