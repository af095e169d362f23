//! Capsule-wise nonlinearities and their gradients.

use crate::capsules::{CapsuleSlot, Nonlinearity};
use crate::error::Result;
use crate::field::{FeatureField, Scalar};

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

/// Applies `nl` to every capsule copy of `f`; the output fiber replaces each
/// capsule by its post-activation capsule. `bias` is only used by norm-relu.
pub fn apply_nonlinearity<T: Scalar>(
    f: &FeatureField<T>,
    nl: Nonlinearity,
    bias: f64,
) -> Result<FeatureField<T>> {
    let out_fiber = f.fiber().after(nl)?;
    let mut out = FeatureField::zeros(f.grid(), out_fiber.clone())?;
    let in_slots = f.fiber().slots()?;
    let out_slots = out_fiber.slots()?;
    let b = T::lift(bias);
    for x in f.grid().points() {
        let src = f.at(x);
        let dst = out.at_mut(x);
        for (si, so) in in_slots.iter().zip(&out_slots) {
            let d = si.capsule.dim();
            let v = &src[si.offset..si.offset + d];
            let o = &mut dst[so.offset..so.offset + so.capsule.dim()];
            apply_slot(nl, b, v, o);
        }
    }
    Ok(out)
}

fn apply_slot<T: Scalar>(nl: Nonlinearity, bias: T, v: &[T], o: &mut [T]) {
    let d = v.len();
    match nl {
        Nonlinearity::Identity => o.copy_from_slice(v),
        Nonlinearity::Relu => {
            for (oi, vi) in o.iter_mut().zip(v) {
                *oi = vi.max(T::zero());
            }
        }
        Nonlinearity::Crelu => {
            for i in 0..d {
                o[i] = v[i].max(T::zero());
                o[d + i] = (-v[i]).max(T::zero());
            }
        }
        Nonlinearity::NormRelu => {
            let n = norm(v);
            let scale = if n > bias && n > T::zero() {
                (n - bias) / n
            } else {
                T::zero()
            };
            for (oi, vi) in o.iter_mut().zip(v) {
                *oi = *vi * scale;
            }
        }
    }
}

/// Gradient w.r.t. the input of [`apply_nonlinearity`].
pub fn nonlinearity_backward<T: Scalar>(
    f: &FeatureField<T>,
    nl: Nonlinearity,
    bias: f64,
    grad_out: &FeatureField<T>,
) -> Result<FeatureField<T>> {
    let in_slots: Vec<CapsuleSlot> = f.fiber().slots()?;
    let out_slots = grad_out.fiber().slots()?;
    let b = T::lift(bias);
    let mut grad_in = FeatureField::zeros(f.grid(), f.fiber().clone())?;
    for x in f.grid().points() {
        let src = f.at(x);
        let g = grad_out.at(x);
        let dst = grad_in.at_mut(x);
        for (si, so) in in_slots.iter().zip(&out_slots) {
            let d = si.capsule.dim();
            let v = &src[si.offset..si.offset + d];
            let go = &g[so.offset..so.offset + so.capsule.dim()];
            let gi = &mut dst[si.offset..si.offset + d];
            match nl {
                Nonlinearity::Identity => gi.copy_from_slice(go),
                Nonlinearity::Relu => {
                    for i in 0..d {
                        gi[i] = if v[i] > T::zero() { go[i] } else { T::zero() };
                    }
                }
                Nonlinearity::Crelu => {
                    for i in 0..d {
                        gi[i] = if v[i] > T::zero() {
                            go[i]
                        } else if v[i] < T::zero() {
                            -go[d + i]
                        } else {
                            T::zero()
                        };
                    }
                }
                Nonlinearity::NormRelu => {
                    let n = norm(v);
                    if n > b && n > T::zero() {
                        // d/dv [v (1 - b/n)] = (1 - b/n) I + (b/n³) v vᵀ
                        let vg: T = v.iter().zip(go).map(|(a, c)| *a * *c).sum();
                        let s = T::one() - b / n;
                        let t = b / (n * n * n) * vg;
                        for i in 0..d {
                            gi[i] = s * go[i] + t * v[i];
                        }
                    } else {
                        gi.iter_mut().for_each(|x| *x = T::zero());
                    }
                }
            }
        }
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capsules::FiberSpec;
    use crate::error::Error;
    use crate::group::{Isometry, TorusGrid};
    use crate::induction::steer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_on_regular_keeps_fiber() {
        let grid = TorusGrid::new(3).unwrap();
        let fib = FiberSpec::single("regular", 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = FeatureField::<f64>::random(grid, fib.clone(), &mut rng).unwrap();
        let out = apply_nonlinearity(&f, Nonlinearity::Relu, 0.0).unwrap();
        assert_eq!(out.fiber(), &fib);
        for (a, b) in out.data().iter().zip(f.data()) {
            assert_eq!(*a, b.max(0.0));
        }
    }

    #[test]
    fn crelu_doubles_e_channels() {
        let grid = TorusGrid::new(3).unwrap();
        let f = FeatureField::<f64>::zeros(grid, FiberSpec::single("E", 2)).unwrap();
        let out = apply_nonlinearity(&f, Nonlinearity::Crelu, 0.0).unwrap();
        assert_eq!(out.fiber(), &FiberSpec::single("crelu(E)", 2));
        assert_eq!((f.channels(), out.channels()), (4, 8));
    }

    #[test]
    fn identity_is_identity() {
        let grid = TorusGrid::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = FeatureField::<f64>::random(grid, FiberSpec::single("E", 1), &mut rng).unwrap();
        assert_eq!(apply_nonlinearity(&f, Nonlinearity::Identity, 0.0).unwrap(), f);
    }

    #[test]
    fn inadmissible_rejected() {
        let grid = TorusGrid::new(3).unwrap();
        let f = FeatureField::<f64>::zeros(grid, FiberSpec::new(&[("regular", 1), ("B1", 1)])).unwrap();
        assert!(matches!(
            apply_nonlinearity(&f, Nonlinearity::Relu, 0.0),
            Err(Error::Inadmissible { .. })
        ));
    }

    #[test]
    fn nonlinearities_commute_with_steering() {
        let grid = TorusGrid::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cases = [
            (FiberSpec::new(&[("E", 2), ("B2", 1), ("qm", 1)]), Nonlinearity::Crelu),
            (FiberSpec::new(&[("E", 1), ("A2", 1)]), Nonlinearity::NormRelu),
            (FiberSpec::new(&[("regular", 1), ("r2m", 2)]), Nonlinearity::Relu),
        ];
        for (fib, nl) in cases {
            let f = FeatureField::<f64>::random(grid, fib, &mut rng).unwrap();
            for _ in 0..10 {
                let g = Isometry::random(&mut rng, grid);
                let a = apply_nonlinearity(&steer(&g, &f).unwrap(), nl, 0.3).unwrap();
                let b = steer(&g, &apply_nonlinearity(&f, nl, 0.3).unwrap()).unwrap();
                assert!(a.max_abs_diff(&b) < 1e-12, "{nl}");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let grid = TorusGrid::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (fib, nl) in [
            (FiberSpec::single("E", 2), Nonlinearity::Crelu),
            (FiberSpec::single("E", 2), Nonlinearity::NormRelu),
            (FiberSpec::single("regular", 1), Nonlinearity::Relu),
        ] {
            let f = FeatureField::<f64>::random(grid, fib, &mut rng).unwrap();
            let out = apply_nonlinearity(&f, nl, 0.2).unwrap();
            let g = FeatureField::<f64>::random(grid, out.fiber().clone(), &mut rng).unwrap();
            let gi = nonlinearity_backward(&f, nl, 0.2, &g).unwrap();
            let objective = |f: &FeatureField<f64>| -> f64 {
                let o = apply_nonlinearity(f, nl, 0.2).unwrap();
                o.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
            };
            for idx in [0, 3, 7, f.data().len() - 1] {
                let h = 1e-6;
                let mut fp = f.clone();
                fp.data_mut()[idx] += h;
                let mut fm = f.clone();
                fm.data_mut()[idx] -= h;
                let fd = (objective(&fp) - objective(&fm)) / (2.0 * h);
                assert!((fd - gi.data()[idx]).abs() < 1e-6, "{nl} idx {idx}");
            }
        }
    }
}
