//! Convolving a transformed field equals transforming the convolved field
//! with the induced action, checked in 32-bit.

use equisteer::capsules::FiberSpec;
use equisteer::induction::{check_induction_identity, InductionCheck};
use equisteer::intertwiner::BasisCatalog;

pub fn run_example() -> equisteer::Result<()> {
    let catalog = BasisCatalog::new();
    let cases = [
        ("regular", "regular"),
        ("A1", "E"),
        ("E", "qm"),
    ];
    for (a, b) in cases {
        let cfg = InductionCheck {
            in_fiber: FiberSpec::single(a, 1),
            out_fiber: FiberSpec::single(b, 1),
            samples: 5,
            ..InductionCheck::default()
        };
        let r = check_induction_identity::<f32>(&cfg, &catalog)?;
        println!(
            "{a:>8} -> {b:<8} {} trials x {} elements, max deviation {:.2e}",
            r.trials, r.elements_per_trial, r.max_deviation
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
