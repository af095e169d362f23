//! Reference group convolution over p4m for regular-capsule layers.
//!
//! A stack of `n` regular capsules is read as `n` functions on p4m with
//! `f_c(t_y b) = F(y)[8c + b]`, where `b` runs over D4 in index order. Under
//! this identification the induced action becomes the left-regular action
//! and no channel permutation is needed.

use crate::error::{Error, Result};
use crate::field::{FeatureField, Scalar};
use crate::group::{Dihedral, Isometry};
use crate::intertwiner::FilterBank;

fn regular_copies(f: &crate::capsules::FiberSpec) -> Option<usize> {
    let mut n = 0;
    for e in f.entries() {
        if e.capsule != "regular" {
            return None;
        }
        n += e.mult;
    }
    Some(n)
}

/// Correlation on the group, `out_{c'}(k) = Σ_{k', c} f_c(k') ψ_{c'c}(k⁻¹k')`.
///
/// The filter `ψ_{c'c}(t_u b)` is read from the identity row of output copy
/// `c'` of the steerable bank; every other output row is produced by
/// transforming that filter, so the steerable bank's remaining rows are not
/// consulted.
pub fn gcnn_oracle<T: Scalar>(f: &FeatureField<T>, bank: &FilterBank<T>) -> Result<FeatureField<T>> {
    let (Some(n_in), Some(n_out)) = (regular_copies(&bank.in_fiber), regular_copies(&bank.out_fiber)) else {
        return Err(Error::InvalidArgument(format!(
            "group-convolution oracle needs regular fibers, got {} -> {}",
            bank.in_fiber, bank.out_fiber
        )));
    };
    if f.fiber() != &bank.in_fiber {
        return Err(Error::FiberMismatch {
            expected: bank.in_fiber.to_string(),
            found: f.fiber().to_string(),
        });
    }
    let grid = f.grid();
    let s = bank.size();
    let s2 = s * s;
    let c = (s / 2) as i64;
    let cols = bank.patch_len();
    let w = bank.weights();
    let mut out = FeatureField::zeros(grid, bank.out_fiber.clone())?;
    let k_in = f.channels();
    let k_out = out.channels();
    let data = f.data();
    let elements = Dihedral::all();
    let out_data = out.data_mut();
    for x in grid.points() {
        for a in elements {
            let k_inv = Isometry::new(a, [x[0] as i64, x[1] as i64], grid).inverse();
            for y in grid.points() {
                for b in elements {
                    let rel = k_inv.compose(&Isometry::new(b, [y[0] as i64, y[1] as i64], grid))?;
                    let t = rel.t();
                    let u = [grid.centered(t[0] as i64), grid.centered(t[1] as i64)];
                    if u[0].abs() > c || u[1].abs() > c {
                        continue;
                    }
                    let pos = ((u[0] + c) as usize) * s + (u[1] + c) as usize;
                    let h = rel.h.index();
                    for ci in 0..n_in {
                        let v = data[grid.linear(y) * k_in + 8 * ci + b.index()];
                        if v == T::zero() {
                            continue;
                        }
                        let col = (8 * ci + h) * s2 + pos;
                        for co in 0..n_out {
                            let psi = w[(8 * co) * cols + col];
                            let o = &mut out_data[grid.linear(x) * k_out + 8 * co + a.index()];
                            *o = *o + v * psi;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
