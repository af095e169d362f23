//! Solving the equivariance constraint `ρ(h) Ψ = Ψ π(h)` for filter banks.
//!
//! A basis of `Hom_H(π, ρ)` is read off the right singular vectors of the
//! stacked constraint system over the generators `{r, m}`. The null-space
//! dimension is always cross-checked against the character inner product
//! `⟨χ_π, χ_ρ⟩`; a disagreement is reported as a numerical failure.

mod bank;
mod catalog;

pub use bank::{assemble_filter_bank, param_shapes, pullback_to_params, FilterBank, FilterBankParams};
pub use catalog::{BasisCatalog, BasisKey};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::group::Dihedral;
use crate::rep::{char_inner, max_abs_diff, round_multiplicity, Representation};

/// Relative singular-value cutoff used by [`hom_basis`].
pub const NULL_SPACE_TOL: f64 = 1e-10;

/// Row-major index of `Ψ[i, j]` in `vec(Ψ)` for a `rows × cols` map.
#[inline]
fn vec_index(i: usize, j: usize, cols: usize) -> usize {
    i * cols + j
}

/// Stacked system `[ρ(h) ⊗ I − I ⊗ π(h)ᵀ]` over the given elements, acting on
/// the row-major `vec(Ψ)` of a `dim ρ × dim π` map.
pub fn constraint_matrix_over(
    pi: &Representation,
    rho: &Representation,
    elements: &[Dihedral],
) -> DMatrix<f64> {
    let (dp, dr) = (pi.dim(), rho.dim());
    let n = dp * dr;
    let mut c = DMatrix::zeros(n * elements.len(), n);
    for (block, h) in elements.iter().enumerate() {
        let ph = pi.matrix(*h);
        let rh = rho.matrix(*h);
        let base = block * n;
        for i in 0..dr {
            for j in 0..dp {
                let row = base + vec_index(i, j, dp);
                for k in 0..dr {
                    let v = rh[(i, k)];
                    if v != 0.0 {
                        c[(row, vec_index(k, j, dp))] += v;
                    }
                }
                for k in 0..dp {
                    let v = ph[(k, j)];
                    if v != 0.0 {
                        c[(row, vec_index(i, k, dp))] -= v;
                    }
                }
            }
        }
    }
    c
}

/// The constraint system over the generators `r` and `m`.
pub fn constraint_matrix(pi: &Representation, rho: &Representation) -> DMatrix<f64> {
    constraint_matrix_over(pi, rho, &[Dihedral::R, Dihedral::M])
}

/// Orthonormal basis of the null space of `c`, from the right singular
/// vectors whose singular values are at most `rel_tol · σ_max`.
pub fn null_space(c: &DMatrix<f64>, rel_tol: f64) -> Vec<DVector<f64>> {
    let n = c.ncols();
    if n == 0 {
        return Vec::new();
    }
    if c.nrows() == 0 || c.iter().all(|x| *x == 0.0) {
        return (0..n)
            .map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
    }
    // pad short systems so V is square
    let c = if c.nrows() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
        padded
    } else {
        c.clone()
    };
    let svd = c.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let sigma = &svd.singular_values;
    let cutoff = rel_tol * sigma.max();
    let mut out: Vec<(usize, DVector<f64>)> = sigma
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= cutoff)
        .map(|(k, _)| (k, v_t.row(k).transpose()))
        .collect();
    out.sort_by_key(|(k, _)| *k);
    out.into_iter().map(|(_, v)| canonical_sign(v)).collect()
}

/// Flips `v` so its first non-negligible coefficient is positive.
fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// Orthonormal basis `ψ₁..ψₙ` of `Hom_H(π, ρ)`; each `ψₖ` is `dim ρ × dim π`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntertwinerBasis {
    in_dim: usize,
    out_dim: usize,
    elements: Vec<DMatrix<f64>>,
}

impl IntertwinerBasis {
    pub fn from_elements(in_dim: usize, out_dim: usize, elements: Vec<DMatrix<f64>>) -> Self {
        IntertwinerBasis {
            in_dim,
            out_dim,
            elements,
        }
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn elements(&self) -> &[DMatrix<f64>] {
        &self.elements
    }

    /// The basis as a `(dim ρ · dim π) × n` matrix of row-major `vec(ψₖ)` columns.
    pub fn as_columns(&self) -> DMatrix<f64> {
        let rows = self.in_dim * self.out_dim;
        DMatrix::from_fn(rows, self.dim(), |r, k| {
            self.elements[k][(r / self.in_dim, r % self.in_dim)]
        })
    }

    /// Inverse of [`IntertwinerBasis::as_columns`].
    pub fn from_columns(in_dim: usize, out_dim: usize, cols: &DMatrix<f64>) -> Result<Self> {
        if cols.nrows() != in_dim * out_dim {
            return Err(Error::Shape(format!(
                "basis matrix has {} rows, expected {}",
                cols.nrows(),
                in_dim * out_dim
            )));
        }
        let elements = (0..cols.ncols())
            .map(|k| DMatrix::from_fn(out_dim, in_dim, |i, j| cols[(i * in_dim + j, k)]))
            .collect();
        Ok(Self::from_elements(in_dim, out_dim, elements))
    }

    /// `Σₖ coeffs[k] ψₖ`.
    pub fn combine(&self, coeffs: &[f64]) -> DMatrix<f64> {
        assert_eq!(coeffs.len(), self.dim(), "coefficient count");
        let mut out = DMatrix::zeros(self.out_dim, self.in_dim);
        for (c, psi) in coeffs.iter().zip(&self.elements) {
            if *c != 0.0 {
                out += psi * *c;
            }
        }
        out
    }

    /// Worst `‖ρ(h)ψₖ − ψₖπ(h)‖_max` over all basis elements and all of D4.
    pub fn residual(&self, pi: &Representation, rho: &Representation) -> f64 {
        self.elements
            .iter()
            .map(|psi| equivariance_residual(psi, pi, rho))
            .fold(0.0, f64::max)
    }

    /// Largest deviation of the Frobenius Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, pa) in self.elements.iter().enumerate() {
            for (b, pb) in self.elements.iter().enumerate() {
                let ip = pa.dot(pb);
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }
}

/// `max_h ‖ρ(h)Ψ − Ψπ(h)‖_max` over all eight elements.
pub fn equivariance_residual(psi: &DMatrix<f64>, pi: &Representation, rho: &Representation) -> f64 {
    Dihedral::all()
        .into_iter()
        .map(|h| max_abs_diff(&(rho.matrix(h) * psi), &(psi * pi.matrix(h))))
        .fold(0.0, f64::max)
}

/// `dim Hom_H(π, ρ) = ⟨χ_π, χ_ρ⟩`.
pub fn intertwining_number(pi: &Representation, rho: &Representation) -> Result<usize> {
    if pi.dim() == 0 || rho.dim() == 0 {
        return Ok(0);
    }
    round_multiplicity(
        char_inner(&pi.character(), &rho.character()),
        "<chi_pi, chi_rho>",
    )
}

pub fn hom_basis(pi: &Representation, rho: &Representation) -> Result<IntertwinerBasis> {
    hom_basis_with_tol(pi, rho, NULL_SPACE_TOL)
}

/// Null-space basis of the generator constraint, checked against the
/// character formula.
pub fn hom_basis_with_tol(
    pi: &Representation,
    rho: &Representation,
    tol: f64,
) -> Result<IntertwinerBasis> {
    let expected = intertwining_number(pi, rho)?;
    let c = constraint_matrix(pi, rho);
    let null = null_space(&c, tol);
    if null.len() != expected {
        return Err(Error::NumericalFailure(format!(
            "null space has dimension {} but <chi_pi, chi_rho> = {expected} \
             (dim pi = {}, dim rho = {}, tol = {tol:e})",
            null.len(),
            pi.dim(),
            rho.dim()
        )));
    }
    let elements = null
        .into_iter()
        .map(|v| DMatrix::from_row_slice(rho.dim(), pi.dim(), v.as_slice()))
        .collect();
    Ok(IntertwinerBasis::from_elements(pi.dim(), rho.dim(), elements))
}

/// `µ = dim π · dim ρ / dim Hom_H(π, ρ)`, kept as an exact fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Utilization {
    pub numerator: usize,
    pub denominator: usize,
}

impl Utilization {
    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// Reduced `(numerator, denominator)`.
    pub fn reduced(&self) -> (usize, usize) {
        fn gcd(a: usize, b: usize) -> usize {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let g = gcd(self.numerator, self.denominator).max(1);
        (self.numerator / g, self.denominator / g)
    }
}

pub fn parameter_utilization(pi: &Representation, rho: &Representation) -> Result<Utilization> {
    let n = intertwining_number(pi, rho)?;
    if n == 0 {
        return Err(Error::UndefinedUtilization);
    }
    Ok(Utilization {
        numerator: pi.dim() * rho.dim(),
        denominator: n,
    })
}

/// Group average `(1/8) Σ_h ρ(h)⁻¹ Ψ₀ π(h)`, the projection onto `Hom_H(π, ρ)`.
pub fn project_equivariant(
    psi0: &DMatrix<f64>,
    pi: &Representation,
    rho: &Representation,
) -> Result<DMatrix<f64>> {
    if psi0.nrows() != rho.dim() || psi0.ncols() != pi.dim() {
        return Err(Error::Shape(format!(
            "filter is {}x{}, expected {}x{}",
            psi0.nrows(),
            psi0.ncols(),
            rho.dim(),
            pi.dim()
        )));
    }
    let mut acc = DMatrix::zeros(rho.dim(), pi.dim());
    for h in Dihedral::all() {
        acc += rho.matrix(h.inverse()) * psi0 * pi.matrix(h);
    }
    Ok(acc / 8.0)
}
