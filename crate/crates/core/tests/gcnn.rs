use equisteer::capsules::FiberSpec;
use equisteer::field::FeatureField;
use equisteer::group::TorusGrid;
use equisteer::intertwiner::{assemble_filter_bank, BasisCatalog, FilterBankParams};
use equisteer::net::{correlate, gcnn_oracle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn delta_inputs_read_out_the_filter_window() {
    let catalog = BasisCatalog::new();
    let grid = TorusGrid::new(7).unwrap();
    let fiber = FiberSpec::single("regular", 1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = FilterBankParams::random(&fiber, &fiber, 3, &catalog, &mut rng).unwrap();
    let bank = assemble_filter_bank(&fiber, &fiber, 3, &params, &catalog).unwrap();
    for channel in 0..8 {
        let mut f = FeatureField::<f64>::zeros(grid, fiber.clone()).unwrap();
        f.at_mut([3, 3])[channel] = 1.0;
        let a = correlate(&f, &bank).unwrap();
        let b = gcnn_oracle(&f, &bank).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-12, "channel {channel}");
        // nothing leaks outside the 3x3 neighbourhood of the impulse
        for p in grid.points() {
            let far = grid.centered(p[0] as i64 - 3).abs() > 1 || grid.centered(p[1] as i64 - 3).abs() > 1;
            if far {
                assert!(a.at(p).iter().all(|v| *v == 0.0));
            }
        }
        assert!(a.norm() > 0.0);
    }
}

#[test]
fn oracle_rejects_non_regular_fibers() {
    let catalog = BasisCatalog::new();
    let a = FiberSpec::single("A1", 1);
    let b = FiberSpec::single("E", 1);
    let params = FilterBankParams::zeros(&a, &b, 3, &catalog).unwrap();
    let bank = assemble_filter_bank(&a, &b, 3, &params, &catalog).unwrap();
    let f = FeatureField::<f64>::zeros(TorusGrid::new(5).unwrap(), a).unwrap();
    assert!(gcnn_oracle(&f, &bank).is_err());
}
