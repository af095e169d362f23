//! On regular fibers, steerable convolution is ordinary group convolution
//! over p4m. Compares the two on random inputs.

use equisteer::capsules::FiberSpec;
use equisteer::field::FeatureField;
use equisteer::group::TorusGrid;
use equisteer::intertwiner::{assemble_filter_bank, BasisCatalog, FilterBankParams};
use equisteer::net::{correlate, gcnn_oracle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> equisteer::Result<()> {
    let catalog = BasisCatalog::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = TorusGrid::new(7)?;
    let input = FiberSpec::single("regular", 2);
    let output = FiberSpec::single("regular", 1);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let params = FilterBankParams::random(&input, &output, 3, &catalog, &mut rng)?;
        let bank = assemble_filter_bank(&input, &output, 3, &params, &catalog)?;
        let f = FeatureField::<f64>::random(grid, input.clone(), &mut rng)?;
        let a = correlate(&f, &bank)?;
        let b = gcnn_oracle(&f, &bank)?;
        worst = worst.max(a.distance(&b) / b.norm());
    }
    println!("worst relative difference over 5 inputs: {worst:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
