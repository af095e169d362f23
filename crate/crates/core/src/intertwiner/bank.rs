//! Filter banks assembled from per-capsule-pair parameters.
//!
//! For input entry `i` (capsule `ρⁱ`, `nᵢ` copies) and output entry `j`
//! (capsule `σʲ`, `mⱼ` copies), `Θ^{ij}` has shape `dim Hom × (nᵢ·mⱼ)`.
//! Column `a·mⱼ + b` holds the coefficients of the block mapping input copy
//! `a` to output copy `b`; that block is `Σₖ Θ^{ij}[k, a·mⱼ+b] ψₖ^{ij}`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BasisCatalog;
use crate::capsules::FiberSpec;
use crate::error::{Error, Result};
use crate::field::Scalar;

/// One `Θ^{ij}` per (input entry, output entry), row-major over the pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBankParams {
    in_entries: usize,
    out_entries: usize,
    blocks: Vec<DMatrix<f64>>,
}

/// `(dim Hom, nᵢ·mⱼ)` for every pair, row-major.
pub fn param_shapes(
    in_fiber: &FiberSpec,
    out_fiber: &FiberSpec,
    size: usize,
    catalog: &BasisCatalog,
) -> Result<Vec<(usize, usize)>> {
    let mut shapes = Vec::new();
    for ie in in_fiber.entries() {
        for oe in out_fiber.entries() {
            let basis = catalog.get(&ie.capsule, &oe.capsule, size)?;
            shapes.push((basis.dim(), ie.mult * oe.mult));
        }
    }
    Ok(shapes)
}

impl FilterBankParams {
    pub fn from_blocks(
        in_fiber: &FiberSpec,
        out_fiber: &FiberSpec,
        size: usize,
        catalog: &BasisCatalog,
        blocks: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let shapes = param_shapes(in_fiber, out_fiber, size, catalog)?;
        if shapes.len() != blocks.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter blocks, got {}",
                shapes.len(),
                blocks.len()
            )));
        }
        for (idx, (shape, b)) in shapes.iter().zip(&blocks).enumerate() {
            if b.shape() != *shape {
                return Err(Error::Shape(format!(
                    "parameter block {idx} has shape {:?}, expected {shape:?}",
                    b.shape()
                )));
            }
        }
        Ok(FilterBankParams {
            in_entries: in_fiber.entries().len(),
            out_entries: out_fiber.entries().len(),
            blocks,
        })
    }

    pub fn zeros(
        in_fiber: &FiberSpec,
        out_fiber: &FiberSpec,
        size: usize,
        catalog: &BasisCatalog,
    ) -> Result<Self> {
        let blocks = param_shapes(in_fiber, out_fiber, size, catalog)?
            .into_iter()
            .map(|(r, c)| DMatrix::zeros(r, c))
            .collect();
        Self::from_blocks(in_fiber, out_fiber, size, catalog, blocks)
    }

    /// Gaussian coefficients scaled by `sqrt(2 / fan-in)`; the bases are
    /// orthonormal so this keeps activations of order one.
    pub fn random<R: Rng + ?Sized>(
        in_fiber: &FiberSpec,
        out_fiber: &FiberSpec,
        size: usize,
        catalog: &BasisCatalog,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = (in_fiber.channels()? * size * size).max(1) as f64;
        let scale = (2.0 / fan_in).sqrt();
        let mut out = Self::zeros(in_fiber, out_fiber, size, catalog)?;
        for b in out.blocks.iter_mut() {
            for v in b.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v = z * scale;
            }
        }
        Ok(out)
    }

    pub fn block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.blocks[i * self.out_entries + j]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.blocks
    }

    /// Total trainable scalars, `Σ_{ij} dim Hom · nᵢ · mⱼ`.
    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn entry_counts(&self) -> (usize, usize) {
        (self.in_entries, self.out_entries)
    }
}

/// A `K′ × K × s × s` filter bank; flattened it is `K′ × (K·s²)` with
/// column `k·s² + p·s + q`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank<T> {
    pub in_fiber: FiberSpec,
    pub out_fiber: FiberSpec,
    size: usize,
    in_channels: usize,
    out_channels: usize,
    weights: Vec<T>,
}

impl<T: Scalar> FilterBank<T> {
    pub fn from_weights(
        in_fiber: FiberSpec,
        out_fiber: FiberSpec,
        size: usize,
        weights: Vec<T>,
    ) -> Result<Self> {
        let in_channels = in_fiber.channels()?;
        let out_channels = out_fiber.channels()?;
        if weights.len() != out_channels * in_channels * size * size {
            return Err(Error::Shape(format!(
                "filter bank needs {}x{}x{}x{} weights, got {}",
                out_channels,
                in_channels,
                size,
                size,
                weights.len()
            )));
        }
        Ok(FilterBank {
            in_fiber,
            out_fiber,
            size,
            in_channels,
            out_channels,
            weights,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// Row length `K·s²` of the flattened bank.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.size * self.size
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    /// `[K′, K, s, s]`.
    pub fn shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.size, self.size]
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        let cols = self.patch_len();
        DMatrix::from_fn(self.out_channels, cols, |i, j| self.weights[i * cols + j].as_f64())
    }

    pub fn cast<U: Scalar>(&self) -> FilterBank<U> {
        FilterBank {
            in_fiber: self.in_fiber.clone(),
            out_fiber: self.out_fiber.clone(),
            size: self.size,
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            weights: self.weights.iter().map(|w| U::lift(w.as_f64())).collect(),
        }
    }
}

/// Fills every superblock with `ψ^{ij} Θ^{ij}` reshaped into place.
pub fn assemble_filter_bank(
    in_fiber: &FiberSpec,
    out_fiber: &FiberSpec,
    size: usize,
    params: &FilterBankParams,
    catalog: &BasisCatalog,
) -> Result<FilterBank<f64>> {
    if size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("patch size must be odd, got {size}")));
    }
    if params.entry_counts() != (in_fiber.entries().len(), out_fiber.entries().len()) {
        return Err(Error::Shape("parameters were built for different fibers".into()));
    }
    let s2 = size * size;
    let k_in = in_fiber.channels()?;
    let k_out = out_fiber.channels()?;
    let cols = k_in * s2;
    let mut weights = vec![0.0; k_out * cols];
    let in_caps = in_fiber.capsules()?;
    let out_caps = out_fiber.capsules()?;
    let in_off = in_fiber.entry_offsets()?;
    let out_off = out_fiber.entry_offsets()?;

    for (i, ie) in in_fiber.entries().iter().enumerate() {
        let d_in = in_caps[i].dim();
        for (j, oe) in out_fiber.entries().iter().enumerate() {
            let d_out = out_caps[j].dim();
            let basis = catalog.get(&ie.capsule, &oe.capsule, size)?;
            let theta = params.block(i, j);
            if theta.shape() != (basis.dim(), ie.mult * oe.mult) {
                return Err(Error::Shape(format!(
                    "Θ for ({}, {}) has shape {:?}, expected ({}, {})",
                    ie.capsule,
                    oe.capsule,
                    theta.shape(),
                    basis.dim(),
                    ie.mult * oe.mult
                )));
            }
            if basis.dim() == 0 {
                continue;
            }
            let psi = basis.as_columns();
            let filled = &psi * theta;
            for a in 0..ie.mult {
                let col0 = (in_off[i] + a * d_in) * s2;
                for b in 0..oe.mult {
                    let row0 = out_off[j] + b * d_out;
                    let c = a * oe.mult + b;
                    for r in 0..d_out {
                        for q in 0..d_in * s2 {
                            weights[(row0 + r) * cols + col0 + q] = filled[(r * d_in * s2 + q, c)];
                        }
                    }
                }
            }
        }
    }
    FilterBank::from_weights(in_fiber.clone(), out_fiber.clone(), size, weights)
}

/// Gradient w.r.t. `Θ` given the gradient w.r.t. the flattened bank:
/// `∂L/∂Θ^{ij}[k, a·mⱼ+b] = ⟨ψₖ^{ij}, ∂L/∂H_{ab}⟩_F`.
pub fn pullback_to_params(
    in_fiber: &FiberSpec,
    out_fiber: &FiberSpec,
    size: usize,
    grad_weights: &[f64],
    catalog: &BasisCatalog,
) -> Result<FilterBankParams> {
    let s2 = size * size;
    let k_in = in_fiber.channels()?;
    let cols = k_in * s2;
    let in_caps = in_fiber.capsules()?;
    let out_caps = out_fiber.capsules()?;
    let in_off = in_fiber.entry_offsets()?;
    let out_off = out_fiber.entry_offsets()?;
    let mut out = FilterBankParams::zeros(in_fiber, out_fiber, size, catalog)?;
    let n_out = out_fiber.entries().len();
    for (i, ie) in in_fiber.entries().iter().enumerate() {
        let d_in = in_caps[i].dim();
        for (j, oe) in out_fiber.entries().iter().enumerate() {
            let d_out = out_caps[j].dim();
            let basis = catalog.get(&ie.capsule, &oe.capsule, size)?;
            if basis.dim() == 0 {
                continue;
            }
            let psi = basis.as_columns();
            let mut g = DMatrix::zeros(d_out * d_in * s2, ie.mult * oe.mult);
            for a in 0..ie.mult {
                let col0 = (in_off[i] + a * d_in) * s2;
                for b in 0..oe.mult {
                    let row0 = out_off[j] + b * d_out;
                    let c = a * oe.mult + b;
                    for r in 0..d_out {
                        for q in 0..d_in * s2 {
                            g[(r * d_in * s2 + q, c)] = grad_weights[(row0 + r) * cols + col0 + q];
                        }
                    }
                }
            }
            out.blocks[i * n_out + j] = psi.transpose() * g;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::induction::build_patch_rep;
    use crate::intertwiner::equivariance_residual;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_zero_bank() {
        let cat = BasisCatalog::new();
        let fin = FiberSpec::new(&[("regular", 2), ("E", 1)]);
        let fout = FiberSpec::new(&[("qm", 1), ("A1", 2)]);
        let p = FilterBankParams::zeros(&fin, &fout, 3, &cat).unwrap();
        let bank = assemble_filter_bank(&fin, &fout, 3, &p, &cat).unwrap();
        assert_eq!(bank.shape(), [6, 18, 3, 3]);
        assert!(bank.weights().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn unit_coefficient_selects_basis_element() {
        let cat = BasisCatalog::new();
        let reg = FiberSpec::single("regular", 1);
        let basis = cat.get("regular", "regular", 3).unwrap();
        for k in [0, 5, basis.dim() - 1] {
            let mut theta = DMatrix::zeros(basis.dim(), 1);
            theta[(k, 0)] = 1.0;
            let p = FilterBankParams::from_blocks(&reg, &reg, 3, &cat, vec![theta]).unwrap();
            let bank = assemble_filter_bank(&reg, &reg, 3, &p, &cat).unwrap();
            assert_eq!(bank.as_matrix(), basis.elements()[k]);
        }
    }

    #[test]
    fn random_bank_is_equivariant() {
        let cat = BasisCatalog::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fin = FiberSpec::new(&[("regular", 2), ("E", 1), ("qm", 1)]);
        let fout = FiberSpec::new(&[("r2m", 1), ("regular", 1), ("B1", 2)]);
        let p = FilterBankParams::random(&fin, &fout, 3, &cat, &mut rng).unwrap();
        let bank = assemble_filter_bank(&fin, &fout, 3, &p, &cat).unwrap();
        let pi = build_patch_rep(&fin.fiber_rep().unwrap(), 3).unwrap();
        let rho = fout.fiber_rep().unwrap();
        assert!(equivariance_residual(&bank.as_matrix(), pi.rep(), &rho) <= 1e-12);
        let bank32 = bank.cast::<f32>();
        assert!(equivariance_residual(&bank32.as_matrix(), pi.rep(), &rho) <= 1e-5);
    }

    #[test]
    fn param_count_matches_cost_model() {
        let cat = BasisCatalog::new();
        let fin = FiberSpec::new(&[("regular", 2), ("E", 3)]);
        let fout = FiberSpec::new(&[("regular", 1), ("A1", 4)]);
        let p = FilterBankParams::zeros(&fin, &fout, 3, &cat).unwrap();
        let mut expected = 0;
        for ie in fin.entries() {
            for oe in fout.entries() {
                expected += cat.get(&ie.capsule, &oe.capsule, 3).unwrap().dim() * ie.mult * oe.mult;
            }
        }
        assert_eq!(p.num_params(), expected);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cat = BasisCatalog::new();
        let reg = FiberSpec::single("regular", 1);
        assert!(FilterBankParams::from_blocks(&reg, &reg, 3, &cat, vec![DMatrix::zeros(2, 1)]).is_err());
        let p = FilterBankParams::zeros(&reg, &reg, 3, &cat).unwrap();
        assert!(assemble_filter_bank(&reg, &reg, 4, &p, &cat).is_err());
        let other = FiberSpec::single("Z", 1);
        assert!(matches!(
            FilterBankParams::zeros(&other, &reg, 3, &cat),
            Err(Error::UnknownCapsule(_))
        ));
    }

    #[test]
    fn pullback_is_adjoint_of_assembly() {
        // <assemble(Θ), G>_F == <Θ, pullback(G)> for linear assembly
        let cat = BasisCatalog::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fin = FiberSpec::new(&[("regular", 1), ("E", 2)]);
        let fout = FiberSpec::new(&[("qm", 2), ("A2", 1)]);
        let theta = FilterBankParams::random(&fin, &fout, 3, &cat, &mut rng).unwrap();
        let bank = assemble_filter_bank(&fin, &fout, 3, &theta, &cat).unwrap();
        let g: Vec<f64> = (0..bank.weights().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs: f64 = bank.weights().iter().zip(&g).map(|(a, b)| a * b).sum();
        let pulled = pullback_to_params(&fin, &fout, 3, &g, &cat).unwrap();
        let rhs: f64 = theta
            .blocks()
            .iter()
            .zip(pulled.blocks())
            .map(|(a, b)| a.dot(b))
            .sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
