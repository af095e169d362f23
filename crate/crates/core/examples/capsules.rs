//! The capsule catalogue: subgroups of D4, the permutation capsules they
//! induce, and which nonlinearities each capsule admits.

use equisteer::capsules::capsule_catalog;
use equisteer::group::enumerate_subgroups;

pub fn run_example() -> equisteer::Result<()> {
    let subgroups = enumerate_subgroups();
    println!("{} subgroups of D4", subgroups.len());
    for k in &subgroups {
        println!("  order {} -> quotient capsule {}", k.order(), k.quotient_name());
    }
    println!();
    for c in capsule_catalog() {
        println!(
            "{:>8}  dim {}  type {}  {:?}  admits {:?}",
            c.id,
            c.dim(),
            c.rep_type(),
            c.realization,
            c.admissible
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
