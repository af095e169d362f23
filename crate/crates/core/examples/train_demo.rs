//! Trains the built-in classifier on stamped p4m-invariant patterns and
//! prints the metrics. Pass a JSON config path to override the defaults.

use equisteer::intertwiner::BasisCatalog;
use equisteer::net::{train_demo, DemoConfig};

pub fn run_example() -> equisteer::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => DemoConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => DemoConfig::default(),
    };
    let start = std::time::Instant::now();
    let m = train_demo(&cfg, &BasisCatalog::new())?;
    println!("params            {}", m.params);
    println!("loss              {:.4} -> {:.4}", m.initial_loss, m.final_loss);
    println!("train accuracy    {:.3}", m.train_accuracy);
    println!("test accuracy     {:.3}", m.test_accuracy);
    println!("transformed test  {:.3}", m.transformed_test_accuracy);
    println!("invariance gap    {:.5}", m.invariance_gap);
    println!("elapsed           {:.1?}", start.elapsed());
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
