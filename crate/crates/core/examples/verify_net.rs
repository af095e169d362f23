//! Two-path equivariance check of a small mixed network in both precisions.

use equisteer::intertwiner::BasisCatalog;
use equisteer::net::{verify_equivariance, Network, ParamSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const NET: &str = r#"{"grid": 9, "layers": [
    {"kind": "steerable-conv", "in": [["A1", 1]], "out": [["regular", 2], ["E", 2]], "s": 3},
    {"kind": "nonlinearity", "tag": "crelu"},
    {"kind": "steerable-conv", "in": [["crelu(regular)", 2], ["crelu(E)", 2]], "out": [["E", 2], ["qm", 1]], "s": 3},
    {"kind": "nonlinearity", "tag": "norm-relu", "bias": 0.1},
    {"kind": "steerable-conv", "in": [["E", 2], ["qm", 1]], "out": [["A1", 4]], "s": 3},
    {"kind": "global-pool"},
    {"kind": "affine-readout", "classes": 3}]}"#;

pub fn run_example() -> equisteer::Result<()> {
    let catalog = BasisCatalog::new();
    let net = Network::from_json(NET)?;
    let params = ParamSet::random(&net, &catalog, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("{} parameters", params.num_params());
    let f32_report = verify_equivariance::<f32>(&net, &params, &catalog, 2, 0, 1e-5)?;
    let f64_report = verify_equivariance::<f64>(&net, &params, &catalog, 2, 0, 1e-10)?;
    for r in [&f32_report, &f64_report] {
        println!(
            "{}: max {:.2e} over {} elements, pass {}",
            r.precision, r.max_rel_error, r.elements, r.pass
        );
        let layers: Vec<String> = r.per_layer.iter().map(|e| format!("{e:.1e}")).collect();
        println!("    per layer {}", layers.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
