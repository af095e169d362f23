//! Two-path equivariance verification of whole networks.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::forward::{Activation, AssembledNet};
use super::spec::{Network, ParamSet};
use crate::error::Result;
use crate::field::{FeatureField, Scalar};
use crate::induction::{sample_elements, steer};
use crate::intertwiner::BasisCatalog;

/// Sample sizes used for the random part of the group set.
pub const VERIFY_TRANSLATIONS: usize = 5;
pub const VERIFY_PRODUCTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub max_rel_error: f64,
    /// Worst error at each activation after the input, in layer order.
    pub per_layer: Vec<f64>,
    /// Worst error over layers and trials, keyed by the element label `h@[tx,ty]`.
    pub per_element: BTreeMap<String, f64>,
    pub tol: f64,
    pub pass: bool,
    pub trials: usize,
    pub elements: usize,
    pub precision: &'static str,
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
fn relative_error<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.as_f64(), y.as_f64());
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    let denom = na.max(nb).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        diff.sqrt() / denom
    }
}

fn precision_name<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

/// Compares forward-then-steer with steer-then-forward at every layer.
///
/// The group set is all of `H` at the origin plus random translations and
/// random products, drawn once from `seed`; inputs are drawn per trial from
/// the same stream. Fields are compared after steering, pooled vectors and
/// logits directly.
pub fn verify_assembled<T: Scalar>(
    net: &AssembledNet<T>,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<VerificationReport> {
    let grid = net.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elements = sample_elements(grid, VERIFY_TRANSLATIONS, VERIFY_PRODUCTS, &mut rng);
    let mut per_layer = vec![0.0f64; net.layers().len()];
    let mut per_element: BTreeMap<String, f64> = BTreeMap::new();
    for _ in 0..trials {
        let f = FeatureField::<T>::random(grid, net.input_fiber().clone(), &mut rng)?;
        let base = net.forward_trace(&f)?;
        for g in &elements {
            let moved = net.forward_trace(&steer(g, &f)?)?;
            let worst = per_element.entry(g.label()).or_insert(0.0);
            for (l, (b, m)) in base.iter().zip(&moved).enumerate().skip(1) {
                let err = match b {
                    Activation::Field(bf) => relative_error(m.values(), steer(g, bf)?.data()),
                    Activation::Vector(bv) => relative_error(m.values(), bv),
                };
                per_layer[l - 1] = per_layer[l - 1].max(err);
                *worst = worst.max(err);
            }
        }
    }
    let max_rel_error = per_layer.iter().copied().fold(0.0, f64::max);
    Ok(VerificationReport {
        max_rel_error,
        per_layer,
        per_element,
        tol,
        pass: max_rel_error <= tol,
        trials,
        elements: elements.len(),
        precision: precision_name::<T>(),
    })
}

/// Assembles `params` in precision `T` and runs [`verify_assembled`].
pub fn verify_equivariance<T: Scalar>(
    net: &Network,
    params: &ParamSet,
    catalog: &BasisCatalog,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<VerificationReport> {
    verify_assembled(&net.assemble::<T>(params, catalog)?, trials, seed, tol)
}
