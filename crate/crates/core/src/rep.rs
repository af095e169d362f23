//! Real representations of D4: the irrep table, characters, type
//! decomposition, direct sums, block diagonalization, and the
//! regular / quotient permutation representations.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Dihedral, Subgroup};
use crate::intertwiner;

/// Tolerance for rounding character inner products to multiplicities.
pub const MULTIPLICITY_TOL: f64 = 1e-6;

/// A homomorphism from D4 into invertible real `dim × dim` matrices,
/// stored densely, one matrix per element in [`Dihedral::all`] order.
#[derive(Clone, PartialEq)]
pub struct Representation {
    dim: usize,
    mats: Vec<DMatrix<f64>>,
}

impl Representation {
    /// Wraps eight square matrices of equal size. The homomorphism property
    /// is *not* checked here; see [`Representation::is_representation`].
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if mats.len() != 8 {
            return Err(Error::Shape(format!(
                "a D4 representation needs 8 matrices, got {}",
                mats.len()
            )));
        }
        let dim = mats[0].nrows();
        for (g, m) in Dihedral::all().iter().zip(&mats) {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::Shape(format!(
                    "matrix for {g} is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Representation { dim, mats })
    }

    /// Builds a representation by evaluating `f` on every element.
    pub fn from_fn(f: impl Fn(Dihedral) -> DMatrix<f64>) -> Result<Self> {
        Self::new(Dihedral::all().into_iter().map(f).collect())
    }

    /// The `dim`-dimensional trivial representation.
    pub fn trivial(dim: usize) -> Self {
        Representation {
            dim,
            mats: vec![DMatrix::identity(dim, dim); 8],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self, g: Dihedral) -> &DMatrix<f64> {
        &self.mats[g.index()]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    /// `ρ(e) = I` and `ρ(g)ρ(h) = ρ(gh)` for all 64 pairs, entrywise within `tol`.
    pub fn is_representation(&self, tol: f64) -> bool {
        let id = DMatrix::<f64>::identity(self.dim, self.dim);
        if max_abs_diff(self.matrix(Dihedral::E), &id) > tol {
            return false;
        }
        for g in Dihedral::all() {
            for h in Dihedral::all() {
                let lhs = self.matrix(g) * self.matrix(h);
                if max_abs_diff(&lhs, self.matrix(g.compose(h))) > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn character(&self) -> Character {
        let mut values = [0.0; 8];
        for (v, m) in values.iter_mut().zip(&self.mats) {
            *v = m.trace();
        }
        Character(values)
    }

    /// `A ρ(g) A⁻¹` for every `g`.
    pub fn conjugate(&self, a: &DMatrix<f64>) -> Result<Representation> {
        let inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("conjugating matrix is singular".into()))?;
        Representation::new(self.mats.iter().map(|m| a * m * &inv).collect())
    }

    pub fn to_json(&self) -> RepJson {
        let matrices = Dihedral::all()
            .into_iter()
            .map(|g| {
                let m = self.matrix(g);
                let rows = (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                    .collect();
                (g.label().to_string(), rows)
            })
            .collect();
        RepJson {
            dim: self.dim,
            matrices,
        }
    }

    pub fn from_json(json: &RepJson) -> Result<Self> {
        let mut mats = Vec::with_capacity(8);
        for g in Dihedral::all() {
            let rows = json
                .matrices
                .get(g.label())
                .ok_or_else(|| Error::Parse(format!("missing matrix for element '{}'", g)))?;
            if rows.len() != json.dim || rows.iter().any(|r| r.len() != json.dim) {
                return Err(Error::Parse(format!(
                    "matrix for '{g}' is not {0}x{0}",
                    json.dim
                )));
            }
            mats.push(DMatrix::from_fn(json.dim, json.dim, |i, j| rows[i][j]));
        }
        if let Some(extra) = json.matrices.keys().find(|k| k.parse::<Dihedral>().is_err()) {
            return Err(Error::Parse(format!("unknown element '{extra}'")));
        }
        Representation::new(mats)
    }
}

impl fmt::Debug for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Representation")
            .field("dim", &self.dim)
            .field("character", &self.character().0)
            .finish()
    }
}

/// Serialized form `{"dim": d, "matrices": {"e": [[...]], ...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepJson {
    pub dim: usize,
    pub matrices: BTreeMap<String, Vec<Vec<f64>>>,
}

pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// The five irreducible representations of D4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Irrep {
    A1,
    A2,
    B1,
    B2,
    E,
}

impl Irrep {
    pub const ALL: [Irrep; 5] = [Irrep::A1, Irrep::A2, Irrep::B1, Irrep::B2, Irrep::E];

    pub fn label(self) -> &'static str {
        match self {
            Irrep::A1 => "A1",
            Irrep::A2 => "A2",
            Irrep::B1 => "B1",
            Irrep::B2 => "B2",
            Irrep::E => "E",
        }
    }

    pub fn dim(self) -> usize {
        if self == Irrep::E {
            2
        } else {
            1
        }
    }

    pub fn from_label(s: &str) -> Option<Irrep> {
        Irrep::ALL.into_iter().find(|i| i.label() == s)
    }

    pub fn rep(self) -> Representation {
        Representation::from_fn(|g| self.matrix(g)).expect("irrep matrices are well formed")
    }

    /// The matrix of `g` in this irrep.
    pub fn matrix(self, g: Dihedral) -> DMatrix<f64> {
        // sign of m and of r in the one-dimensional irreps
        let scalar = |m_sign: f64, r_sign: f64| {
            let v = m_sign.powi(g.reflect_exp() as i32) * r_sign.powi(g.rotate_exp() as i32);
            DMatrix::from_element(1, 1, v)
        };
        match self {
            Irrep::A1 => scalar(1.0, 1.0),
            Irrep::A2 => scalar(-1.0, 1.0),
            Irrep::B1 => scalar(1.0, -1.0),
            Irrep::B2 => scalar(-1.0, -1.0),
            Irrep::E => {
                let m = g.matrix();
                DMatrix::from_fn(2, 2, |i, j| m[i][j] as f64)
            }
        }
    }
}

impl fmt::Display for Irrep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The irreps A1, A2, B1, B2, E in table order.
pub fn irrep_catalog() -> Vec<Representation> {
    Irrep::ALL.iter().map(|i| i.rep()).collect()
}

/// `χ(g) = tr ρ(g)`, indexed like [`Dihedral::all`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Character(pub [f64; 8]);

impl Character {
    pub fn at(&self, g: Dihedral) -> f64 {
        self.0[g.index()]
    }

    /// `(1/|H|) Σ_h χ₁(h) χ₂(h)`.
    pub fn inner(&self, other: &Character) -> f64 {
        char_inner(self, other)
    }
}

impl std::ops::Add for Character {
    type Output = Character;
    fn add(self, rhs: Character) -> Character {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        Character(out)
    }
}

pub fn char_inner(a: &Character, b: &Character) -> f64 {
    a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum::<f64>() / 8.0
}

/// Rounds a character inner product to a non-negative multiplicity.
pub(crate) fn round_multiplicity(value: f64, what: &str) -> Result<usize> {
    let rounded = value.round();
    if (value - rounded).abs() > MULTIPLICITY_TOL || rounded < 0.0 {
        return Err(Error::NotARepresentation(format!(
            "{what} = {value} is not a non-negative integer"
        )));
    }
    Ok(rounded as usize)
}

/// Irrep multiplicities `(m_A1, m_A2, m_B1, m_B2, m_E)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepType(pub [usize; 5]);

impl RepType {
    pub fn multiplicity(&self, irrep: Irrep) -> usize {
        self.0[irrep as usize]
    }

    /// `Σ mᵢ · dim φᵢ`.
    pub fn dim(&self) -> usize {
        Irrep::ALL
            .iter()
            .map(|i| self.multiplicity(*i) * i.dim())
            .sum()
    }

    /// `Σ mᵢ mᵢ′`, the intertwining number of two representations of these types.
    pub fn pairing(&self, other: &RepType) -> usize {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn as_map(&self) -> BTreeMap<&'static str, usize> {
        Irrep::ALL
            .iter()
            .map(|i| (i.label(), self.multiplicity(*i)))
            .collect()
    }
}

impl std::ops::Add for RepType {
    type Output = RepType;
    fn add(self, rhs: RepType) -> RepType {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        RepType(out)
    }
}

impl fmt::Display for RepType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d, e] = self.0;
        write!(f, "({a}, {b}, {c}, {d}, {e})")
    }
}

/// Multiplicity of each irrep via character inner products.
pub fn decompose_type(rep: &Representation) -> Result<RepType> {
    let chi = rep.character();
    let mut out = [0usize; 5];
    for (slot, irrep) in out.iter_mut().zip(Irrep::ALL) {
        let ip = char_inner(&chi, &irrep.rep().character());
        *slot = round_multiplicity(ip, &format!("<chi, chi_{irrep}>"))?;
    }
    let ty = RepType(out);
    if ty.dim() != rep.dim() {
        return Err(Error::NotARepresentation(format!(
            "type {ty} accounts for dimension {} but the input has dimension {}",
            ty.dim(),
            rep.dim()
        )));
    }
    Ok(ty)
}

/// Block-diagonal stacking.
pub fn direct_sum(reps: &[Representation]) -> Result<Representation> {
    if reps.is_empty() {
        return Err(Error::InvalidArgument("direct sum of an empty list".into()));
    }
    let dim: usize = reps.iter().map(|r| r.dim()).sum();
    Representation::from_fn(|g| {
        let mut out = DMatrix::zeros(dim, dim);
        let mut off = 0;
        for r in reps {
            let d = r.dim();
            out.view_mut((off, off), (d, d)).copy_from(r.matrix(g));
            off += d;
        }
        out
    })
}

/// D4 acting on functions on D4: `ρ(a) e_b = e_{ab}`.
pub fn regular_rep() -> Representation {
    quotient_rep(&Subgroup::trivial())
}

/// D4 acting on functions on the left cosets `H/K`:
/// `[ρ(a) f](bK) = f(a⁻¹ bK)`, i.e. `ρ(a) e_{bK} = e_{abK}`.
pub fn quotient_rep(k: &Subgroup) -> Representation {
    let cosets = k.cosets();
    let n = cosets.len();
    Representation::from_fn(|a| {
        let mut m = DMatrix::zeros(n, n);
        for (j, coset) in cosets.iter().enumerate() {
            let i = k.coset_index(a.compose(coset[0]));
            m[(i, j)] = 1.0;
        }
        m
    })
    .expect("coset permutation matrices are square")
}

/// Result of [`block_diagonalize`]: `A⁻¹ ρ(g) A = blockdiag(φ_{i1}(g), ...)`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub basis: DMatrix<f64>,
    pub irreps: Vec<Irrep>,
}

impl Decomposition {
    /// `blockdiag(φ_{i1}(g), ..., φ_{ik}(g))`.
    pub fn block(&self, g: Dihedral) -> DMatrix<f64> {
        let dim: usize = self.irreps.iter().map(|i| i.dim()).sum();
        let mut out = DMatrix::zeros(dim, dim);
        let mut off = 0;
        for irrep in &self.irreps {
            let d = irrep.dim();
            out.view_mut((off, off), (d, d)).copy_from(&irrep.matrix(g));
            off += d;
        }
        out
    }

    /// `A · blockdiag(g) · A⁻¹`.
    pub fn reconstruct(&self) -> Result<Representation> {
        let inv = self
            .basis
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("basis is singular".into()))?;
        Representation::from_fn(|g| &self.basis * self.block(g) * &inv)
    }

    /// `max_g ‖A⁻¹ ρ(g) A − blockdiag(g)‖_max`.
    pub fn residual(&self, rep: &Representation) -> Result<f64> {
        let inv = self
            .basis
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("basis is singular".into()))?;
        Ok(Dihedral::all()
            .into_iter()
            .map(|g| max_abs_diff(&(&inv * rep.matrix(g) * &self.basis), &self.block(g)))
            .fold(0.0, f64::max))
    }
}

/// Residual bound accepted by [`block_diagonalize`].
pub const BLOCK_DIAG_TOL: f64 = 1e-8;
/// Largest condition number of the change of basis accepted by [`block_diagonalize`].
pub const MAX_CONDITION: f64 = 1e8;

/// Finds `A` with `A⁻¹ ρ(g) A` block diagonal in irreps.
///
/// Columns of `A` come from intertwiner bases `Hom(φᵢ, ρ)`: each basis map
/// `Ψ` satisfies `ρ(h)Ψ = Ψφᵢ(h)`, so its columns span a copy of `φᵢ`
/// inside `ρ` in exactly the irrep's own coordinates.
pub fn block_diagonalize(rep: &Representation) -> Result<Decomposition> {
    let ty = decompose_type(rep)?;
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(rep.dim());
    let mut irreps = Vec::new();
    for irrep in Irrep::ALL {
        if ty.multiplicity(irrep) == 0 {
            continue;
        }
        let basis = intertwiner::hom_basis(&irrep.rep(), rep)?;
        // Frobenius-normalized maps have columns of norm 1/sqrt(dim φ) when ρ is orthogonal
        let scale = (irrep.dim() as f64).sqrt();
        for psi in basis.elements() {
            for c in 0..irrep.dim() {
                cols.push(psi.column(c) * scale);
            }
            irreps.push(irrep);
        }
    }
    if cols.len() != rep.dim() {
        return Err(Error::NumericalFailure(format!(
            "collected {} basis vectors for a {}-dimensional representation",
            cols.len(),
            rep.dim()
        )));
    }
    let basis = DMatrix::from_columns(&cols);
    let sv = basis.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 0.0 || smax / smin > MAX_CONDITION {
        return Err(Error::NumericalFailure(format!(
            "change of basis is ill-conditioned (cond = {:e})",
            smax / smin
        )));
    }
    let dec = Decomposition { basis, irreps };
    let res = dec.residual(rep)?;
    if res > BLOCK_DIAG_TOL {
        return Err(Error::NumericalFailure(format!(
            "block-diagonalization residual {res:e} exceeds {BLOCK_DIAG_TOL:e}"
        )));
    }
    Ok(dec)
}

/// Most specific matrix class satisfied by all eight matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealizationClass {
    Permutation,
    SignedPermutation,
    Monomial,
    Orthogonal,
    General,
}

const CLASS_TOL: f64 = 1e-12;

fn one_nonzero_per_line(m: &DMatrix<f64>) -> bool {
    let rows_ok = (0..m.nrows())
        .all(|i| (0..m.ncols()).filter(|&j| m[(i, j)].abs() > CLASS_TOL).count() == 1);
    let cols_ok = (0..m.ncols())
        .all(|j| (0..m.nrows()).filter(|&i| m[(i, j)].abs() > CLASS_TOL).count() == 1);
    rows_ok && cols_ok
}

fn entries_in(m: &DMatrix<f64>, allowed: &[f64]) -> bool {
    m.iter()
        .all(|x| allowed.iter().any(|a| (x - a).abs() <= CLASS_TOL))
}

pub fn realization_class(rep: &Representation) -> RealizationClass {
    let mats = rep.matrices();
    let monomial = mats.iter().all(one_nonzero_per_line);
    if monomial && mats.iter().all(|m| entries_in(m, &[0.0, 1.0])) {
        return RealizationClass::Permutation;
    }
    if monomial && mats.iter().all(|m| entries_in(m, &[0.0, 1.0, -1.0])) {
        return RealizationClass::SignedPermutation;
    }
    if monomial {
        return RealizationClass::Monomial;
    }
    let id = DMatrix::<f64>::identity(rep.dim(), rep.dim());
    if mats
        .iter()
        .all(|m| max_abs_diff(&(m.transpose() * m), &id) <= 1e-10)
    {
        return RealizationClass::Orthogonal;
    }
    RealizationClass::General
}
