use std::path::Path;
use std::process::Command;

use equisteer::intertwiner::BasisCatalog;
use equisteer::net::{Network, ParamSet};
use equisteer::rep::{regular_rep, Irrep, Representation};
use equisteer::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

const NET: &str = r#"{"grid": 7, "layers": [
    {"kind": "steerable-conv", "in": [["A1", 1]], "out": [["regular", 1], ["E", 1]], "s": 3},
    {"kind": "nonlinearity", "tag": "crelu"},
    {"kind": "steerable-conv", "in": [["crelu(regular)", 1], ["crelu(E)", 1]], "out": [["qm", 1], ["E", 1]], "s": 3},
    {"kind": "nonlinearity", "tag": "norm-relu", "bias": 0.1},
    {"kind": "steerable-conv", "in": [["qm", 1], ["E", 1]], "out": [["A1", 2]], "s": 1}]}"#;

const BAD_RESIDUAL: &str = r#"{"grid": 5, "layers": [
    {"kind": "steerable-conv", "in": [["A1", 1]], "out": [["regular", 3]], "s": 3},
    {"kind": "steerable-conv", "in": [["regular", 3]], "out": [["qm", 6]], "s": 3},
    {"kind": "residual-add", "from": 1}]}"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

fn cli(dir: &TempDir, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_equisteer"))
        .args(args)
        .env("EQUISTEER_CACHE", dir.path().join("bases.sftb"))
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn irreps_listing_and_unknown_group() {
    let dir = TempDir::new().unwrap();
    let r = cli(&dir, &["irreps", "--group", "d4", "--json"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    assert_eq!(v["command"], "irreps");
    let irreps = v["result"]["irreps"].as_array().unwrap();
    assert_eq!(irreps.len(), 5);
    for (entry, irrep) in irreps.iter().zip(Irrep::ALL) {
        assert_eq!(entry["label"], irrep.label());
        assert_eq!(entry["matrices"], serde_json::to_value(irrep.rep().to_json().matrices).unwrap());
    }
    let text = cli(&dir, &["irreps", "--group", "d4"]);
    assert_eq!(text.code, 0);
    assert!(text.stdout.contains("E dim 2"));

    let r = cli(&dir, &["irreps", "--group", "d5"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("d5"));
}

#[test]
fn decompose_builtins_files_and_failures() {
    let dir = TempDir::new().unwrap();
    let r = cli(&dir, &["decompose", "--rep", "pi0:3x3", "--json"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.json()["result"]["type"], serde_json::json!([3, 0, 1, 1, 2]));
    let r = cli(&dir, &["decompose", "--rep", "builtin:regular", "--json"]);
    assert_eq!(r.json()["result"]["type"], serde_json::json!([1, 1, 1, 1, 2]));

    let good = write(&dir, "regular.json", &serde_json::to_string(&regular_rep().to_json()).unwrap());
    let r = cli(&dir, &["decompose", "--rep", &good]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("(1, 1, 1, 1, 2)"));

    let corrupted = write(&dir, "corrupt.json", r#"{"dim": 2, "matrices": {"e": [[1, 0], [0"#);
    assert_eq!(cli(&dir, &["decompose", "--rep", &corrupted]).code, 2);

    // r ↦ −1 with every other element trivial is not a homomorphism.
    let mut json = Representation::trivial(1).to_json();
    json.matrices.insert("r".into(), vec![vec![-1.0]]);
    let broken = write(&dir, "broken.json", &serde_json::to_string(&json).unwrap());
    let r = cli(&dir, &["decompose", "--rep", &broken]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn homs_dimensions_and_emitted_basis() {
    let dir = TempDir::new().unwrap();
    let emit = dir.path().join("basis.sft");
    let r = cli(
        &dir,
        &["homs", "--in", "A1", "--out", "regular", "--size", "3", "--json", "--emit", emit.to_str().unwrap()],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    assert_eq!(v["result"]["dim"], 9);
    assert_eq!(v["result"]["utilization"], 8.0);
    assert_eq!(Tensor::load(&emit).unwrap().dims, vec![72, 9]);

    let v = cli(&dir, &["homs", "--in", "A1", "--out", "A1", "--size", "1", "--json"]).json();
    assert_eq!((v["result"]["dim"].clone(), v["result"]["utilization"].clone()), (1.into(), 1.0.into()));
    let v = cli(&dir, &["homs", "--in", "E", "--out", "A1", "--size", "1", "--json"]).json();
    assert_eq!(v["result"]["dim"], 0);
    assert!(v["result"]["utilization"].is_null());

    assert_eq!(cli(&dir, &["homs", "--in", "A1", "--out", "A1", "--size", "4"]).code, 2);
    assert_eq!(cli(&dir, &["homs", "--in", "A1", "--out", "Z9", "--size", "3"]).code, 2);
    assert!(dir.path().join("bases.sftb").exists());
}

#[test]
fn verify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "net.json", NET);
    let r = cli(&dir, &["verify", "--net", &net, "--trials", "1", "--seed", "3", "--tol", "1e-4", "--json"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    assert_eq!(v["pass"], true);
    assert_eq!(v["result"]["per_layer"].as_array().unwrap().len(), 5);
    assert_eq!(v["result"]["layers"].as_array().unwrap().len(), 3);

    let r = cli(&dir, &["verify", "--net", &net, "--trials", "1", "--seed", "3", "--tol", "0"]);
    assert_eq!(r.code, 1);

    let bad = write(&dir, "bad.json", BAD_RESIDUAL);
    let r = cli(&dir, &["verify", "--net", &bad, "--trials", "1", "--seed", "0", "--tol", "1e-4"]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("layer 2"), "{}", r.stderr);

    let junk = write(&dir, "junk.json", "{\"grid\": 5, \"layers\": [");
    assert_eq!(cli(&dir, &["verify", "--net", &junk]).code, 2);
    assert_eq!(cli(&dir, &["verify"]).code, 2);
}

#[test]
fn verify_with_saved_params() {
    let dir = TempDir::new().unwrap();
    let net_path = write(&dir, "net.json", NET);
    let cat = BasisCatalog::new();
    let net = Network::from_json(NET).unwrap();
    let params = ParamSet::random(&net, &cat, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let p = dir.path().join("params.sftb");
    params.save(&p).unwrap();
    let r = cli(
        &dir,
        &["verify", "--net", &net_path, "--params", p.to_str().unwrap(), "--trials", "1", "--precision", "f64", "--tol", "1e-10", "--json"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    assert_eq!(v["result"]["params_source"], "file");
    assert_eq!(v["result"]["precision"], "f64");
}

#[test]
fn reports_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let net = write(&dir, "net.json", NET);
    let args = ["verify", "--net", &net, "--trials", "1", "--seed", "5", "--json"];
    let a = cli(&dir, &args);
    let b = cli(&dir, &args);
    assert_eq!(a.stdout, b.stdout);
    let c = cli(&dir, &["verify", "--net", &net, "--trials", "1", "--seed", "6", "--json"]);
    assert_ne!(a.json()["input_digest"], c.json()["input_digest"]);
}

#[test]
fn train_demo_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("metrics.json");
    let cfg = write(&dir, "zero.json", r#"{"epochs": 0, "train_size": 40, "test_size": 8}"#);
    let r = cli(&dir, &["train-demo", "--config", &cfg, "--out", out.to_str().unwrap(), "--json"]);
    // an untrained net misses the accuracy threshold
    assert_eq!(r.code, 1, "{}", r.stderr);
    let v = r.json();
    let acc = v["result"]["metrics"]["train_accuracy"].as_f64().unwrap();
    assert!((acc - 0.25).abs() <= 0.2, "{acc}");
    assert_eq!(std::fs::read_to_string(&out).unwrap(), r.stdout);

    let diverge = write(&dir, "diverge.json", r#"{"epochs": 30, "train_size": 16, "test_size": 4, "step": 1000.0}"#);
    assert_eq!(cli(&dir, &["train-demo", "--config", &diverge]).code, 4);

    let typo = write(&dir, "typo.json", r#"{"epoch": 3}"#);
    assert_eq!(cli(&dir, &["train-demo", "--config", &typo]).code, 2);
    assert!(!Path::new(&dir.path().join("absent.json")).exists());
    assert_eq!(cli(&dir, &["train-demo", "--config", dir.path().join("absent.json").to_str().unwrap()]).code, 2);
}

#[test]
fn unreadable_cache_is_ignored() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bases.sftb"), b"not a bundle").unwrap();
    let r = cli(&dir, &["homs", "--in", "A1", "--out", "E", "--size", "3"]);
    assert_eq!(r.code, 0);
    assert!(r.stderr.contains("warning"));
    // rewritten with a valid bundle
    let r = cli(&dir, &["homs", "--in", "A1", "--out", "E", "--size", "3"]);
    assert!(r.stderr.is_empty(), "{}", r.stderr);
}
