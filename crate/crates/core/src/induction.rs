//! How D4 acts on filter patches and how p4m acts on whole feature fields.
//!
//! Patch coordinates run over `{-(s-1)/2, ..., (s-1)/2}²` so that D4 fixes
//! the patch centre. A patch vector is laid out channel-major:
//! `index = k * s² + p * s + q` for the offset `(p - c, q - c)`, `c = (s-1)/2`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::capsules::FiberSpec;
use crate::error::{Error, Result};
use crate::field::{FeatureField, Scalar};
use crate::group::{Dihedral, Isometry, TorusGrid};
use crate::intertwiner::{assemble_filter_bank, BasisCatalog, FilterBank, FilterBankParams};
use crate::net::correlate;
use crate::rep::Representation;

/// Upper bound on `N²·K` for [`induced_matrix`].
pub const MATERIALIZE_LIMIT: usize = 4096;

/// D4 acting on `K·s²`-dimensional patches: `[π(h)P](u) = ρ(h) P(h⁻¹u)`.
#[derive(Clone, Debug)]
pub struct PatchRep {
    s: usize,
    fiber_rep: Representation,
    rep: Representation,
}

impl PatchRep {
    pub fn size(&self) -> usize {
        self.s
    }

    pub fn fiber_rep(&self) -> &Representation {
        &self.fiber_rep
    }

    pub fn rep(&self) -> &Representation {
        &self.rep
    }

    pub fn dim(&self) -> usize {
        self.rep.dim()
    }
}

fn check_patch_size(s: usize) -> Result<()> {
    if s.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "patch size must be odd (got {s}); even patches have no centre pixel"
        )));
    }
    Ok(())
}

/// Patch offsets in layout order.
pub fn patch_offsets(s: usize) -> Vec<[i64; 2]> {
    let c = (s as i64 - 1) / 2;
    (0..s as i64)
        .flat_map(|p| (0..s as i64).map(move |q| [p - c, q - c]))
        .collect()
}

fn offset_index(u: [i64; 2], s: usize) -> usize {
    let c = (s as i64 - 1) / 2;
    ((u[0] + c) as usize) * s + (u[1] + c) as usize
}

/// Spatial permutation of the patch combined with fiber mixing by `fiber_rep`.
pub fn build_patch_rep(fiber_rep: &Representation, s: usize) -> Result<PatchRep> {
    check_patch_size(s)?;
    let k = fiber_rep.dim();
    let s2 = s * s;
    let offsets = patch_offsets(s);
    let rep = Representation::from_fn(|h| {
        let rho = fiber_rep.matrix(h);
        let mut m = DMatrix::zeros(k * s2, k * s2);
        for (src, u) in offsets.iter().enumerate() {
            let dst = offset_index(h.apply(*u), s);
            for a in 0..k {
                for b in 0..k {
                    let v = rho[(a, b)];
                    if v != 0.0 {
                        m[(a * s2 + dst, b * s2 + src)] = v;
                    }
                }
            }
        }
        m
    })?;
    Ok(PatchRep {
        s,
        fiber_rep: fiber_rep.clone(),
        rep,
    })
}

/// `π₀` on `s×s` patches with `channels` untouched channels.
pub fn build_pi0(s: usize, channels: usize) -> Result<PatchRep> {
    if channels == 0 {
        return Err(Error::InvalidArgument("channels must be at least 1".into()));
    }
    build_patch_rep(&Representation::trivial(channels), s)
}

/// `[π′(tr) f](x) = ρ(r) f((tr)⁻¹ x)`.
pub fn induced_act_field<T: Scalar>(
    fiber_rep: &Representation,
    g: &Isometry,
    f: &FeatureField<T>,
) -> Result<FeatureField<T>> {
    if fiber_rep.dim() != f.channels() {
        return Err(Error::FiberMismatch {
            expected: format!("{} channels", fiber_rep.dim()),
            found: format!("{} ({} channels)", f.fiber(), f.channels()),
        });
    }
    if g.grid() != f.grid() {
        return Err(Error::GridMismatch {
            left: g.grid().side(),
            right: f.grid().side(),
        });
    }
    let k = f.channels();
    let rho = fiber_rep.matrix(g.h);
    // sparse rows of ρ(r): most catalogued capsules are (signed) permutations
    let rows: Vec<Vec<(usize, T)>> = (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| rho[(i, j)] != 0.0)
                .map(|j| (j, T::lift(rho[(i, j)])))
                .collect()
        })
        .collect();
    let mut out = FeatureField::zeros(f.grid(), f.fiber().clone())?;
    for y in f.grid().points() {
        let x = g.act(y);
        let src = f.at(y);
        let dst = out.at_mut(x);
        for (i, row) in rows.iter().enumerate() {
            dst[i] = row.iter().map(|(j, v)| *v * src[*j]).sum();
        }
    }
    Ok(out)
}

/// Steers a field by the representation of its own fiber.
pub fn steer<T: Scalar>(g: &Isometry, f: &FeatureField<T>) -> Result<FeatureField<T>> {
    induced_act_field(&f.fiber().fiber_rep()?, g, f)
}

/// The operator family `π′ = Ind ρ` on fields over one grid.
#[derive(Clone, Debug)]
pub struct FieldAction {
    pub grid: TorusGrid,
    pub fiber_rep: Representation,
}

impl FieldAction {
    pub fn apply<T: Scalar>(&self, g: &Isometry, f: &FeatureField<T>) -> Result<FeatureField<T>> {
        induced_act_field(&self.fiber_rep, g, f)
    }

    pub fn matrix(&self, g: &Isometry) -> Result<DMatrix<f64>> {
        induced_matrix(&self.fiber_rep, g, self.grid)
    }
}

/// Explicit `(N²K) × (N²K)` matrix of `π′(g)` acting on the flattened field.
pub fn induced_matrix(
    fiber_rep: &Representation,
    g: &Isometry,
    grid: TorusGrid,
) -> Result<DMatrix<f64>> {
    let k = fiber_rep.dim();
    let size = grid.num_points() * k;
    if size > MATERIALIZE_LIMIT {
        return Err(Error::SizeGuard {
            size,
            limit: MATERIALIZE_LIMIT,
        });
    }
    let rho = fiber_rep.matrix(g.h);
    let mut m = DMatrix::zeros(size, size);
    for y in grid.points() {
        let x = g.act(y);
        let (xi, yi) = (grid.linear(x) * k, grid.linear(y) * k);
        for a in 0..k {
            for b in 0..k {
                m[(xi + a, yi + b)] = rho[(a, b)];
            }
        }
    }
    Ok(m)
}

/// Group elements used by the equivariance checks: all of D4 at the
/// origin, `translations` random translations, and `products` random
/// elements `t·h`.
pub fn sample_elements<R: Rng + ?Sized>(
    grid: TorusGrid,
    translations: usize,
    products: usize,
    rng: &mut R,
) -> Vec<Isometry> {
    let n = grid.side() as i64;
    let mut out: Vec<Isometry> = Dihedral::all()
        .into_iter()
        .map(|h| Isometry::point_group(h, grid))
        .collect();
    for _ in 0..translations {
        out.push(Isometry::translation(
            [rng.gen_range(0..n), rng.gen_range(0..n)],
            grid,
        ));
    }
    for _ in 0..products {
        out.push(Isometry::random(rng, grid));
    }
    out
}

/// `max |Ψ ⋆ π(g) f − π′(g)(Ψ ⋆ f)|`.
pub fn induction_deviation<T: Scalar>(
    bank: &FilterBank<T>,
    f: &FeatureField<T>,
    g: &Isometry,
) -> Result<f64> {
    let lhs = correlate(&steer(g, f)?, bank)?;
    let rhs = steer(g, &correlate(f, bank)?)?;
    Ok(lhs.max_abs_diff(&rhs))
}

/// Configuration for [`check_induction_identity`].
#[derive(Clone, Debug)]
pub struct InductionCheck {
    pub grid: usize,
    pub in_fiber: FiberSpec,
    pub out_fiber: FiberSpec,
    pub size: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for InductionCheck {
    fn default() -> Self {
        InductionCheck {
            grid: 9,
            in_fiber: FiberSpec::single("regular", 1),
            out_fiber: FiberSpec::single("regular", 1),
            size: 3,
            samples: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InductionReport {
    pub trials: usize,
    pub elements_per_trial: usize,
    pub max_deviation: f64,
}

/// Draws random equivariant filter banks and inputs and measures how far
/// `Ψ ⋆ [π(tr) f]` strays from `ρ(r)[Ψ ⋆ f]((tr)⁻¹ x)`.
pub fn check_induction_identity<T: Scalar>(
    cfg: &InductionCheck,
    catalog: &BasisCatalog,
) -> Result<InductionReport> {
    let grid = TorusGrid::new(cfg.grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    let mut per_trial = 0;
    for _ in 0..cfg.samples {
        let params =
            FilterBankParams::random(&cfg.in_fiber, &cfg.out_fiber, cfg.size, catalog, &mut rng)?;
        let bank = assemble_filter_bank(&cfg.in_fiber, &cfg.out_fiber, cfg.size, &params, catalog)?
            .cast::<T>();
        let f = FeatureField::<T>::random(grid, cfg.in_fiber.clone(), &mut rng)?;
        let elements = sample_elements(grid, 5, 10, &mut rng);
        per_trial = elements.len();
        for g in &elements {
            worst = worst.max(induction_deviation(&bank, &f, g)?);
        }
    }
    Ok(InductionReport {
        trials: cfg.samples,
        elements_per_trial: per_trial,
        max_deviation: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep::{decompose_type, direct_sum, regular_rep, Irrep, RepType};

    #[test]
    fn pi0_dims_and_types() {
        let p = build_pi0(3, 1).unwrap();
        assert_eq!(p.dim(), 9);
        assert!(p.rep().is_representation(0.0));
        assert_eq!(decompose_type(p.rep()).unwrap(), RepType([3, 0, 1, 1, 2]));
        let p1 = build_pi0(1, 1).unwrap();
        assert_eq!(decompose_type(p1.rep()).unwrap(), RepType([1, 0, 0, 0, 0]));
        assert!(build_pi0(4, 1).is_err());
    }

    #[test]
    fn patch_rep_reductions() {
        let a1 = build_patch_rep(&Irrep::A1.rep(), 3).unwrap();
        assert_eq!(a1.rep(), build_pi0(3, 1).unwrap().rep());
        let reg1 = build_patch_rep(&regular_rep(), 1).unwrap();
        assert_eq!(reg1.rep(), &regular_rep());
        let a1x3 = direct_sum(&[Irrep::A1.rep(), Irrep::A1.rep(), Irrep::A1.rep()]).unwrap();
        assert_eq!(
            build_patch_rep(&a1x3, 3).unwrap().rep(),
            build_pi0(3, 3).unwrap().rep()
        );
    }

    /// Character of a patch rep computed independently: number of patch
    /// offsets fixed by `h` times the fiber character.
    fn patch_character_oracle(fiber: &Representation, s: usize) -> [f64; 8] {
        let mut out = [0.0; 8];
        for h in Dihedral::all() {
            let fixed = patch_offsets(s).iter().filter(|u| h.apply(**u) == **u).count();
            out[h.index()] = fixed as f64 * fiber.character().at(h);
        }
        out
    }

    #[test]
    fn regular_patch_type() {
        let p = build_patch_rep(&regular_rep(), 3).unwrap();
        assert_eq!(p.rep().character().0, patch_character_oracle(&regular_rep(), 3));
        assert_eq!(decompose_type(p.rep()).unwrap(), RepType([9, 9, 9, 9, 18]));
        assert!(p.rep().is_representation(0.0));
    }

    #[test]
    fn patch_characters_match_oracle() {
        for fiber in [Irrep::E.rep(), Irrep::B1.rep(), regular_rep()] {
            for s in [1, 3, 5] {
                let p = build_patch_rep(&fiber, s).unwrap();
                assert_eq!(p.rep().character().0, patch_character_oracle(&fiber, s));
            }
        }
    }

    #[test]
    fn induced_identity_and_trivial_fiber() {
        let grid = TorusGrid::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = FeatureField::<f64>::random(grid, FiberSpec::single("A1", 1), &mut rng).unwrap();
        let id = Isometry::identity(grid);
        assert_eq!(steer(&id, &f).unwrap(), f);
        let g = Isometry::new(Dihedral::R, [1, 2], grid);
        let out = steer(&g, &f).unwrap();
        let ginv = g.inverse();
        for x in grid.points() {
            assert_eq!(out.at(x), f.at(ginv.act(x)));
        }
    }

    #[test]
    fn induced_action_is_a_group_action() {
        let grid = TorusGrid::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for fiber in [
            FiberSpec::single("regular", 1),
            FiberSpec::new(&[("E", 1), ("qm", 1), ("B2", 1)]),
        ] {
            let f = FeatureField::<f64>::random_integer(grid, fiber, &mut rng).unwrap();
            for _ in 0..50 {
                let g = Isometry::random(&mut rng, grid);
                let h = Isometry::random(&mut rng, grid);
                let lhs = steer(&g.compose(&h).unwrap(), &f).unwrap();
                let rhs = steer(&g, &steer(&h, &f).unwrap()).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn induced_matrix_examples() {
        let grid = TorusGrid::new(3).unwrap();
        let a1 = Irrep::A1.rep();
        let m = induced_matrix(&a1, &Isometry::identity(grid), grid).unwrap();
        assert_eq!(m, DMatrix::identity(9, 9));
        let r = induced_matrix(&a1, &Isometry::point_group(Dihedral::R, grid), grid).unwrap();
        assert_ne!(r, DMatrix::identity(9, 9));
        assert_eq!(&r * &r * &r * &r, DMatrix::identity(9, 9));

        let grid5 = TorusGrid::new(5).unwrap();
        let e = induced_matrix(&Irrep::E.rep(), &Isometry::point_group(Dihedral::M, grid5), grid5)
            .unwrap();
        for i in 0..e.nrows() {
            let row: Vec<f64> = e.row(i).iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(row.len(), 1);
            assert!(row[0] == 1.0 || row[0] == -1.0);
        }
    }

    #[test]
    fn induced_matrix_matches_field_action() {
        let grid = TorusGrid::new(5).unwrap();
        let fiber = FiberSpec::single("E", 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = FeatureField::<f64>::random(grid, fiber.clone(), &mut rng).unwrap();
        let g = Isometry::new("mr3".parse().unwrap(), [2, 4], grid);
        let m = induced_matrix(&fiber.fiber_rep().unwrap(), &g, grid).unwrap();
        let v = nalgebra::DVector::from_column_slice(f.data());
        let out = steer(&g, &f).unwrap();
        assert_eq!((m * v).as_slice(), out.data());
    }

    #[test]
    fn size_guard() {
        let grid = TorusGrid::new(33).unwrap();
        assert!(matches!(
            induced_matrix(&regular_rep(), &Isometry::identity(grid), grid),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn fiber_mismatch_rejected() {
        let grid = TorusGrid::new(3).unwrap();
        let f = FeatureField::<f64>::zeros(grid, FiberSpec::single("E", 1)).unwrap();
        assert!(matches!(
            induced_act_field(&regular_rep(), &Isometry::identity(grid), &f),
            Err(Error::FiberMismatch { .. })
        ));
    }

    #[test]
    fn restriction_to_origin_patch_matches_patch_rep() {
        // extracting the patch around the origin commutes with steering by h ∈ D4
        let grid = TorusGrid::new(5).unwrap();
        let fiber = FiberSpec::new(&[("E", 1), ("qm", 1)]);
        let rho = fiber.fiber_rep().unwrap();
        let patch = build_patch_rep(&rho, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = FeatureField::<f64>::random(grid, fiber, &mut rng).unwrap();
        let extract = |f: &FeatureField<f64>| {
            let k = f.channels();
            let offs = patch_offsets(3);
            let mut v = nalgebra::DVector::zeros(k * 9);
            for (pos, u) in offs.iter().enumerate() {
                let x = grid.wrap_point(*u);
                for c in 0..k {
                    v[c * 9 + pos] = f.at(x)[c];
                }
            }
            v
        };
        for h in Dihedral::all() {
            let g = Isometry::point_group(h, grid);
            let lhs = extract(&steer(&g, &f).unwrap());
            let rhs = patch.rep().matrix(h) * extract(&f);
            assert!((lhs - rhs).abs().max() < 1e-12);
        }
    }

    #[test]
    fn zero_filter_has_zero_deviation() {
        let catalog = BasisCatalog::new();
        let grid = TorusGrid::new(5).unwrap();
        let fib = FiberSpec::single("regular", 1);
        let params = FilterBankParams::zeros(&fib, &fib, 3, &catalog).unwrap();
        let bank = assemble_filter_bank(&fib, &fib, 3, &params, &catalog).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = FeatureField::<f64>::random(grid, fib, &mut rng).unwrap();
        for g in sample_elements(grid, 2, 2, &mut rng) {
            assert_eq!(induction_deviation(&bank, &f, &g).unwrap(), 0.0);
        }
    }
}
