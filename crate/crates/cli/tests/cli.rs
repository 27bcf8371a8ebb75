use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fdclass::data::load_dataset;
use fdclass::eval::{JPrior, ModelAveragingReport};
use fdclass::mcmc::McmcConfig;
use fdclass::pipeline::{run_model, FitOptions, ModelKind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fdclass"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const CONFIG: &str = r#"
model = "omp"
seed = 7
train = "sim/train.csv"
out = "runs/omp"

[j_prior]
min = 5
max = 6
kind = "geometric"
p = 0.5

[mcmc]
iterations = 300
burn_in = 100
"#;

fn prepare(dir: &Path) {
    ok(dir, &["simulate", "--kind", "omp", "--seed", "3", "--n-per-class", "20", "--out", "sim"]);
    ok(dir, &["split", "--data", "sim/data.csv", "--seed", "1", "--out", "sim"]);
    fs::write(dir.join("run.toml"), CONFIG).unwrap();
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(d: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        prepare(d);
        ok(d, &["fit", "--config", "run.toml"]);
        ok(d, &["evaluate", "--run", "runs/omp", "--test", "sim/test.csv"]);
        ok(d, &["fit", "--config", "run.toml", "--model", "lda", "--out", "runs/lda"]);
        ok(d, &["evaluate", "--run", "runs/lda", "--test", "sim/test.csv"]);
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{} differs between reruns", k.display());
    }
    for f in ["runs/omp/j05/gamma2_trace.csv", "runs/omp/j06/summary.json", "runs/omp/manifest.json", "sim/provenance.json"] {
        assert!(ta.contains_key(Path::new(f)), "missing {f}");
    }
    let data = String::from_utf8(ta[Path::new("sim/data.csv")].clone()).unwrap();
    assert_eq!(data.lines().count(), 61);
}

#[test]
fn evaluate_replays_the_in_process_pipeline_exactly() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    prepare(d);
    ok(d, &["fit", "--config", "run.toml"]);
    ok(d, &["evaluate", "--run", "runs/omp", "--test", "sim/test.csv"]);
    let stored = ModelAveragingReport::from_json(&fs::read_to_string(d.join("runs/omp/report.json")).unwrap()).unwrap();
    let train = load_dataset(d.join("sim/train.csv"), None).unwrap();
    let test = load_dataset(d.join("sim/test.csv"), None).unwrap();
    let opts = FitOptions {
        mcmc: McmcConfig {
            iterations: 300,
            burn_in: 100,
            ..McmcConfig::default()
        },
        ..FitOptions::default()
    };
    let prior = JPrior { min: 5, max: 6, ..JPrior::default() };
    let direct = run_model(ModelKind::Omp, "sim", &train, &test, &prior, &opts, 7).unwrap();
    assert_eq!(direct, stored);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    let out = run(d, &["simulate", "--kind", "svm", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("svm"));

    prepare(d);
    fs::write(d.join("bad.toml"), CONFIG.replace("iterations = 300", "iterations = 50")).unwrap();
    let out = run(d, &["fit", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("burn-in"));
    let out = run(d, &["fit", "--config", "run.toml", "--j-min", "2"]);
    assert_eq!(out.status.code(), Some(2));

    ok(d, &["fit", "--config", "run.toml"]);
    fs::remove_file(d.join("runs/omp/j06/draws.csv")).unwrap();
    let out = run(d, &["evaluate", "--run", "runs/omp", "--test", "sim/test.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("J = 6"));

    let mut flat = String::from("t,0,0.5,1\n");
    for i in 0..12 {
        flat.push_str(&format!("{},1,1,1\n", i % 3 + 1));
    }
    fs::create_dir_all(d.join("flat")).unwrap();
    fs::write(d.join("flat/train.csv"), flat).unwrap();
    let out = run(d, &["fit", "--config", "run.toml", "--model", "qda", "--train", "flat/train.csv", "--out", "runs/flat"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn report_marks_missing_cells() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    let a = ModelAveragingReport::single("lda", "omp", 180, 0.1);
    let b = ModelAveragingReport::single("qda", "ump", 180, 0.2);
    fs::write(d.join("a.json"), a.to_json().unwrap()).unwrap();
    fs::write(d.join("b.json"), b.to_json().unwrap()).unwrap();
    let out = run(d, &["report", "a.json", "b.json", "--out", "table.txt"]);
    assert!(out.status.success());
    let table = fs::read_to_string(d.join("table.txt")).unwrap();
    assert_eq!(table, String::from_utf8(out.stdout).unwrap());
    assert_eq!(table.matches('—').count(), 2);
    assert!(table.contains("10.00%") && table.contains("20.00%"));
}

#[test]
fn simulate_spec_file_and_overrides() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    fs::write(d.join("spec.toml"), "kind = \"qda\"\nn_per_class = 5\nseed = 4\n").unwrap();
    ok(d, &["simulate", "--spec", "spec.toml", "--out", "a"]);
    ok(d, &["simulate", "--spec", "spec.toml", "--seed", "5", "--out", "b"]);
    let a = fs::read(d.join("a/data.csv")).unwrap();
    let b = fs::read(d.join("b/data.csv")).unwrap();
    assert_ne!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 16);
    fs::write(d.join("bad.toml"), "kind = \"qda\"\nn_per_class = 5\nseed = 4\ncolour = 1\n").unwrap();
    let out = run(d, &["simulate", "--spec", "bad.toml", "--out", "c"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}
