//! Splits the action of D4 on 3x3 patches into irreducibles and finds the
//! change of basis that makes it block diagonal.

use equisteer::induction::build_pi0;
use equisteer::rep::{block_diagonalize, decompose_type, regular_rep};

pub fn run_example() -> equisteer::Result<()> {
    for s in [1, 3, 5] {
        let pi0 = build_pi0(s, 1)?;
        println!("pi0 on {s}x{s} patches: type {}", decompose_type(pi0.rep())?);
    }

    let pi0 = build_pi0(3, 1)?;
    let dec = block_diagonalize(pi0.rep())?;
    let labels: Vec<&str> = dec.irreps.iter().map(|i| i.label()).collect();
    println!("blocks {:?}, residual {:.2e}", labels, dec.residual(pi0.rep())?);

    // The regular representation contains every irrep as often as its dimension.
    println!("regular: type {}", decompose_type(&regular_rep())?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
