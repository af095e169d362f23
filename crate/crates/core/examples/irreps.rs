//! Character table of D4 and the orthogonality of its irreducible characters.

use equisteer::group::Dihedral;
use equisteer::rep::{char_inner, Irrep};

pub fn run_example() -> equisteer::Result<()> {
    print!("{:>4}", "");
    for g in Dihedral::all() {
        print!("{:>6}", g.label());
    }
    println!();
    let chars: Vec<_> = Irrep::ALL.iter().map(|i| i.rep().character()).collect();
    for (irrep, chi) in Irrep::ALL.iter().zip(&chars) {
        assert!(irrep.rep().is_representation(0.0));
        print!("{:>4}", irrep.label());
        for v in chi.0 {
            print!("{v:>6}");
        }
        println!();
    }

    println!("\ncharacter inner products:");
    for a in &chars {
        let row: Vec<String> = chars.iter().map(|b| format!("{}", char_inner(a, b))).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> equisteer::Result<()> {
    run_example()
}
