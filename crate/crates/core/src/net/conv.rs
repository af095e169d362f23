//! Circular correlation of feature fields with filter banks.

use crate::error::{Error, Result};
use crate::field::{FeatureField, Scalar};
use crate::group::TorusGrid;
use crate::induction::patch_offsets;
use crate::intertwiner::FilterBank;

/// Wrapped grid positions of the `s×s` patch centred at every point:
/// `table[x * s² + pos]` is the linear index of `x + offset(pos)`.
fn patch_table(grid: TorusGrid, size: usize) -> Vec<usize> {
    let offsets = patch_offsets(size);
    let mut table = Vec::with_capacity(grid.num_points() * offsets.len());
    for x in grid.points() {
        for u in &offsets {
            let y = grid.wrap_point([x[0] as i64 + u[0], x[1] as i64 + u[1]]);
            table.push(grid.linear(y));
        }
    }
    table
}

fn gather_patch<T: Scalar>(f: &FeatureField<T>, table: &[usize], x: usize, s2: usize, out: &mut [T]) {
    let k = f.channels();
    let data = f.data();
    let idx = &table[x * s2..(x + 1) * s2];
    for c in 0..k {
        for (pos, y) in idx.iter().enumerate() {
            out[c * s2 + pos] = data[y * k + c];
        }
    }
}

fn check_fiber<T: Scalar>(f: &FeatureField<T>, bank: &FilterBank<T>) -> Result<()> {
    if f.fiber() != &bank.in_fiber {
        return Err(Error::FiberMismatch {
            expected: bank.in_fiber.to_string(),
            found: f.fiber().to_string(),
        });
    }
    Ok(())
}

/// `[Ψ ⋆ f](x) = Ψ · patch_x(f)`, with patch coordinates wrapped mod N.
pub fn correlate<T: Scalar>(f: &FeatureField<T>, bank: &FilterBank<T>) -> Result<FeatureField<T>> {
    check_fiber(f, bank)?;
    let grid = f.grid();
    let s2 = bank.size() * bank.size();
    let table = patch_table(grid, bank.size());
    let cols = bank.patch_len();
    let k_out = bank.out_channels();
    let w = bank.weights();
    let mut patch = vec![T::zero(); cols];
    let mut out = FeatureField::zeros(grid, bank.out_fiber.clone())?;
    let out_data = out.data_mut();
    for x in 0..grid.num_points() {
        gather_patch(f, &table, x, s2, &mut patch);
        for o in 0..k_out {
            let row = &w[o * cols..(o + 1) * cols];
            out_data[x * k_out + o] = row.iter().zip(&patch).map(|(a, b)| *a * *b).sum();
        }
    }
    Ok(out)
}

/// Gradients of `correlate` w.r.t. its input field and the flattened weights.
pub fn correlate_backward<T: Scalar>(
    f: &FeatureField<T>,
    bank: &FilterBank<T>,
    grad_out: &FeatureField<T>,
) -> Result<(FeatureField<T>, Vec<T>)> {
    check_fiber(f, bank)?;
    let grid = f.grid();
    let s2 = bank.size() * bank.size();
    let table = patch_table(grid, bank.size());
    let cols = bank.patch_len();
    let k_in = f.channels();
    let k_out = bank.out_channels();
    let w = bank.weights();
    let g = grad_out.data();
    let mut patch = vec![T::zero(); cols];
    let mut grad_patch = vec![T::zero(); cols];
    let mut grad_w = vec![T::zero(); w.len()];
    let mut grad_in = FeatureField::zeros(grid, f.fiber().clone())?;
    let gin = grad_in.data_mut();
    for x in 0..grid.num_points() {
        gather_patch(f, &table, x, s2, &mut patch);
        grad_patch.iter_mut().for_each(|v| *v = T::zero());
        for o in 0..k_out {
            let go = g[x * k_out + o];
            if go == T::zero() {
                continue;
            }
            let row = &w[o * cols..(o + 1) * cols];
            let grow = &mut grad_w[o * cols..(o + 1) * cols];
            for c in 0..cols {
                grow[c] = grow[c] + go * patch[c];
                grad_patch[c] = grad_patch[c] + go * row[c];
            }
        }
        let idx = &table[x * s2..(x + 1) * s2];
        for c in 0..k_in {
            for (pos, y) in idx.iter().enumerate() {
                gin[y * k_in + c] = gin[y * k_in + c] + grad_patch[c * s2 + pos];
            }
        }
    }
    Ok((grad_in, grad_w))
}
