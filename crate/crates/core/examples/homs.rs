//! Size of the equivariant filter space between capsule pairs and the
//! resulting parameter utilization.

use equisteer::capsules::capsule;
use equisteer::induction::build_patch_rep;
use equisteer::intertwiner::{intertwining_number, parameter_utilization, BasisCatalog};

const CAPSULES: [&str; 5] = ["A1", "B1", "E", "qm", "regular"];

pub fn run_example() -> equisteer::Result<()> {
    let catalog = BasisCatalog::new();
    for s in [1, 3] {
        println!("s = {s}   (rows: in, columns: out; entries dim Hom / mu)");
        print!("{:>8}", "");
        for out in CAPSULES {
            print!("{out:>14}");
        }
        println!();
        for input in CAPSULES {
            print!("{input:>8}");
            let pi = build_patch_rep(&capsule(input)?.rep, s)?;
            for out in CAPSULES {
                let rho = &capsule(out)?.rep;
                let basis = catalog.get(input, out, s)?;
                // the SVD null space and the character formula agree
                assert_eq!(basis.dim(), intertwining_number(pi.rep(), rho)?);
                let cell = match parameter_utilization(pi.rep(), rho) {
                    Ok(mu) => format!("{} / {:.2}", basis.dim(), mu.value()),
                    Err(_) => "0 / -".to_string(),
                };
                print!("{cell:>14}");
            }
            println!();
        }
        println!();
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
