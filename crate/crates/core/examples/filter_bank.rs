//! Builds an equivariant filter bank from a few coefficients, convolves a
//! random field with it and checks that rotating the input rotates the output.

use equisteer::capsules::FiberSpec;
use equisteer::field::FeatureField;
use equisteer::group::{Dihedral, Isometry, TorusGrid};
use equisteer::induction::steer;
use equisteer::intertwiner::{assemble_filter_bank, BasisCatalog, FilterBankParams};
use equisteer::net::correlate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> equisteer::Result<()> {
    let catalog = BasisCatalog::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = TorusGrid::new(11)?;
    let input = FiberSpec::new(&[("A1", 1)]);
    let output = FiberSpec::new(&[("regular", 1), ("E", 2)]);

    let params = FilterBankParams::random(&input, &output, 3, &catalog, &mut rng)?;
    let bank = assemble_filter_bank(&input, &output, 3, &params, &catalog)?;
    println!(
        "{} coefficients fill a {:?} filter bank",
        params.num_params(),
        bank.shape()
    );

    let f = FeatureField::<f64>::random(grid, input, &mut rng)?;
    let out = correlate(&f, &bank)?;
    for h in Dihedral::all() {
        let g = Isometry::new(h, [3, 7], grid);
        let lhs = correlate(&steer(&g, &f)?, &bank)?;
        let rhs = steer(&g, &out)?;
        println!("{:>12}  max deviation {:.2e}", g.label(), lhs.max_abs_diff(&rhs));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
