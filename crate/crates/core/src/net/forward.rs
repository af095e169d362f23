//! Layer primitives and the forward pass.

use nalgebra::DMatrix;

use super::spec::{LayerParams, LayerSpec, Network, ParamSet};
use super::{apply_nonlinearity, correlate};
use crate::capsules::{check_addable, FiberSpec, Nonlinearity};
use crate::error::{Error, Result};
use crate::field::{FeatureField, Scalar};
use crate::group::TorusGrid;
use crate::intertwiner::{assemble_filter_bank, BasisCatalog, FilterBank};

/// Value flowing between layers.
#[derive(Clone, Debug, PartialEq)]
pub enum Activation<T> {
    Field(FeatureField<T>),
    Vector(Vec<T>),
}

impl<T: Scalar> Activation<T> {
    pub fn as_field(&self) -> Option<&FeatureField<T>> {
        match self {
            Activation::Field(f) => Some(f),
            Activation::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[T]> {
        match self {
            Activation::Vector(v) => Some(v),
            Activation::Field(_) => None,
        }
    }

    /// Flat view of the values.
    pub fn values(&self) -> &[T] {
        match self {
            Activation::Field(f) => f.data(),
            Activation::Vector(v) => v,
        }
    }
}

/// `a + b`; the fibers must be identical capsule lists.
pub fn residual_add<T: Scalar>(a: &FeatureField<T>, b: &FeatureField<T>) -> Result<FeatureField<T>> {
    if !check_addable(a.fiber(), b.fiber()) {
        return Err(Error::NotAddable {
            left: a.fiber().to_string(),
            right: b.fiber().to_string(),
        });
    }
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch {
            left: a.grid().side(),
            right: b.grid().side(),
        });
    }
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o = *o + *v;
    }
    Ok(out)
}

fn require_a1(f: &FiberSpec) -> Result<()> {
    if f.is_a1_only() {
        Ok(())
    } else {
        Err(Error::FiberMismatch {
            expected: "an A1-only fiber".into(),
            found: f.to_string(),
        })
    }
}

/// Spatial mean of every channel.
pub fn global_pool<T: Scalar>(f: &FeatureField<T>) -> Result<Vec<T>> {
    require_a1(f.fiber())?;
    let k = f.channels();
    let mut out = vec![T::zero(); k];
    for px in f.data().chunks_exact(k.max(1)) {
        for (o, v) in out.iter_mut().zip(px) {
            *o = *o + *v;
        }
    }
    let n = T::lift(f.grid().num_points() as f64);
    Ok(out.into_iter().map(|v| v / n).collect())
}

/// Affine classification head `W v + b` with `W` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout<T> {
    pub classes: usize,
    pub inputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Readout<T> {
    pub fn from_f64(weight: &DMatrix<f64>, bias: &[f64]) -> Result<Self> {
        if bias.len() != weight.nrows() {
            return Err(Error::Shape(format!(
                "readout bias has {} entries for {} classes",
                bias.len(),
                weight.nrows()
            )));
        }
        Ok(Readout {
            classes: weight.nrows(),
            inputs: weight.ncols(),
            weight: (0..weight.nrows())
                .flat_map(|i| (0..weight.ncols()).map(move |j| (i, j)))
                .map(|ij| T::lift(weight[ij]))
                .collect(),
            bias: bias.iter().map(|b| T::lift(*b)).collect(),
        })
    }

    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.inputs {
            return Err(Error::Shape(format!(
                "readout expects {} inputs, got {}",
                self.inputs,
                v.len()
            )));
        }
        Ok((0..self.classes)
            .map(|c| {
                let row = &self.weight[c * self.inputs..(c + 1) * self.inputs];
                row.iter().zip(v).map(|(w, x)| *w * *x).sum::<T>() + self.bias[c]
            })
            .collect())
    }
}

/// Global average per channel followed by the affine head. Only A1 fibers
/// are accepted, which makes the logits invariant under every `g ∈ p4m`.
pub fn invariant_readout<T: Scalar>(f: &FeatureField<T>, head: &Readout<T>) -> Result<Vec<T>> {
    head.apply(&global_pool(f)?)
}

/// A layer with its filter bank or head already materialized.
#[derive(Clone, Debug)]
pub enum AssembledLayer<T> {
    Conv(FilterBank<T>),
    Nonlinearity { nl: Nonlinearity, bias: f64 },
    ResidualAdd { from: usize },
    GlobalPool,
    Readout(Readout<T>),
}

/// A network whose parameters have been turned into raw filters.
#[derive(Clone, Debug)]
pub struct AssembledNet<T> {
    grid: TorusGrid,
    input: FiberSpec,
    layers: Vec<AssembledLayer<T>>,
}

impl Network {
    /// Builds every filter bank `ψΘ` (in 64-bit) and casts to `T`.
    pub fn assemble<T: Scalar>(&self, params: &ParamSet, catalog: &BasisCatalog) -> Result<AssembledNet<T>> {
        if params.num_layers() != self.layers().len() {
            return Err(Error::Shape("parameter set belongs to a different network".into()));
        }
        let mut layers = Vec::with_capacity(self.layers().len());
        for (i, layer) in self.layers().iter().enumerate() {
            let assembled = match (layer, params.layer(i)) {
                (
                    LayerSpec::SteerableConv {
                        in_fiber,
                        out_fiber,
                        s,
                    },
                    Some(LayerParams::Conv(p)),
                ) => AssembledLayer::Conv(
                    assemble_filter_bank(in_fiber, out_fiber, *s, p, catalog)?.cast(),
                ),
                (LayerSpec::Nonlinearity { bias, .. }, None) => AssembledLayer::Nonlinearity {
                    nl: self.nonlinearity(i).expect("validated"),
                    bias: *bias,
                },
                (LayerSpec::ResidualAdd { from }, None) => AssembledLayer::ResidualAdd { from: *from },
                (LayerSpec::GlobalPool {}, None) => AssembledLayer::GlobalPool,
                (LayerSpec::AffineReadout { .. }, Some(LayerParams::Readout { weight, bias })) => {
                    AssembledLayer::Readout(Readout::from_f64(weight, bias.as_slice())?)
                }
                _ => {
                    return Err(Error::Shape(format!(
                        "parameters for layer {i} do not match its kind"
                    )))
                }
            };
            layers.push(assembled);
        }
        Ok(AssembledNet {
            grid: self.grid(),
            input: self.input_fiber().clone(),
            layers,
        })
    }
}

impl<T: Scalar> AssembledNet<T> {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn input_fiber(&self) -> &FiberSpec {
        &self.input
    }

    pub fn layers(&self) -> &[AssembledLayer<T>] {
        &self.layers
    }

    /// Raw access, e.g. to push a filter off the equivariant subspace.
    pub fn layers_mut(&mut self) -> &mut [AssembledLayer<T>] {
        &mut self.layers
    }

    /// Every activation: index 0 is the input, `i + 1` the output of layer `i`.
    pub fn forward_trace(&self, input: &FeatureField<T>) -> Result<Vec<Activation<T>>> {
        if input.fiber() != &self.input {
            return Err(Error::FiberMismatch {
                expected: self.input.to_string(),
                found: input.fiber().to_string(),
            });
        }
        if input.grid() != self.grid {
            return Err(Error::GridMismatch {
                left: self.grid.side(),
                right: input.grid().side(),
            });
        }
        let mut acts = vec![Activation::Field(input.clone())];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = &acts[i];
            let field = || {
                cur.as_field()
                    .ok_or_else(|| Error::Shape(format!("layer {i} expects a field")))
            };
            let next = match layer {
                AssembledLayer::Conv(bank) => Activation::Field(correlate(field()?, bank)?),
                AssembledLayer::Nonlinearity { nl, bias } => {
                    Activation::Field(apply_nonlinearity(field()?, *nl, *bias)?)
                }
                AssembledLayer::ResidualAdd { from } => {
                    let other = acts
                        .get(*from)
                        .and_then(|a| a.as_field())
                        .ok_or_else(|| Error::Shape(format!("layer {i}: bad residual source")))?;
                    Activation::Field(residual_add(field()?, other).map_err(|e| match e {
                        Error::NotAddable { .. } => Error::TypeSystem {
                            layer: i,
                            reason: e.to_string(),
                        },
                        other => other,
                    })?)
                }
                AssembledLayer::GlobalPool => Activation::Vector(global_pool(field()?)?),
                AssembledLayer::Readout(head) => {
                    let v = cur
                        .as_vector()
                        .ok_or_else(|| Error::Shape(format!("layer {i} expects a vector")))?;
                    Activation::Vector(head.apply(v)?)
                }
            };
            acts.push(next);
        }
        Ok(acts)
    }

    /// Final activation, which is the logit vector for a classifier.
    pub fn forward(&self, input: &FeatureField<T>) -> Result<Activation<T>> {
        Ok(self.forward_trace(input)?.pop().expect("input activation present"))
    }

    /// Logits of a classifier network.
    pub fn logits(&self, input: &FeatureField<T>) -> Result<Vec<T>> {
        match self.forward(input)? {
            Activation::Vector(v) => Ok(v),
            Activation::Field(_) => Err(Error::Shape("network does not end in a readout".into())),
        }
    }
}

/// Assembles `params` and runs `f` through the network, returning every activation.
pub fn forward<T: Scalar>(
    net: &Network,
    params: &ParamSet,
    f: &FeatureField<T>,
    catalog: &BasisCatalog,
) -> Result<Vec<Activation<T>>> {
    net.assemble::<T>(params, catalog)?.forward_trace(f)
}
