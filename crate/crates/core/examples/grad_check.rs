//! Backpropagated gradients through the filter-bank pullback against
//! central differences.

use equisteer::field::FeatureField;
use equisteer::group::TorusGrid;
use equisteer::intertwiner::BasisCatalog;
use equisteer::net::{finite_difference_check, Network, ParamSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const NET: &str = r#"{"grid": 5, "layers": [
    {"kind": "steerable-conv", "in": [["A1", 1]], "out": [["E", 1], ["regular", 1]], "s": 3},
    {"kind": "nonlinearity", "tag": "norm-relu", "bias": 0.05},
    {"kind": "steerable-conv", "in": [["E", 1], ["regular", 1]], "out": [["A1", 2]], "s": 3},
    {"kind": "global-pool"},
    {"kind": "affine-readout", "classes": 3}]}"#;

pub fn run_example() -> equisteer::Result<()> {
    let catalog = BasisCatalog::new();
    let net = Network::from_json(NET)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = ParamSet::random(&net, &catalog, &mut rng)?;
    let grid = TorusGrid::new(5)?;
    let batch = (0..3)
        .map(|y| Ok((FeatureField::random(grid, net.input_fiber().clone(), &mut rng)?, y)))
        .collect::<equisteer::Result<Vec<_>>>()?;
    for h in [1e-3, 1e-5] {
        let r = finite_difference_check(&net, &params, &batch, &catalog, h, 1e-8)?;
        println!(
            "h = {h:e}: {} parameters, max relative error {:.2e}, max absolute {:.2e}",
            r.params, r.max_rel_error, r.max_abs_error
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
