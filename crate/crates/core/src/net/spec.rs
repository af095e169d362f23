//! Network descriptions, their type checking, and parameter sets.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::capsules::{check_addable, FiberSpec, Nonlinearity};
use crate::error::{Error, Result};
use crate::group::TorusGrid;
use crate::intertwiner::{param_shapes, BasisCatalog, FilterBankParams};
use crate::tensor::{load_bundle, save_bundle, Tensor};

/// One layer of a [`NetworkSpec`], tagged by `"kind"` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerSpec {
    SteerableConv {
        #[serde(rename = "in")]
        in_fiber: FiberSpec,
        #[serde(rename = "out")]
        out_fiber: FiberSpec,
        s: usize,
    },
    Nonlinearity {
        tag: String,
        /// Threshold of norm-relu; ignored by the other tags.
        #[serde(default, skip_serializing_if = "is_zero")]
        bias: f64,
    },
    /// Adds the activation with index `from` (0 is the network input,
    /// `i + 1` the output of layer `i`) to the current one.
    ResidualAdd { from: usize },
    /// Spatial mean per channel; needs an A1-only fiber.
    GlobalPool {},
    AffineReadout { classes: usize },
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// `{"grid": N, "input": <FiberSpec>?, "layers": [...]}`. When `input` is
/// absent the first layer must be a convolution and its input fiber is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub grid: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<FiberSpec>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("network spec: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }
}

/// What flows between layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActivationType {
    Field(FiberSpec),
    Vector(usize),
}

impl ActivationType {
    pub fn fiber(&self) -> Option<&FiberSpec> {
        match self {
            ActivationType::Field(f) => Some(f),
            ActivationType::Vector(_) => None,
        }
    }
}

/// A type-checked [`NetworkSpec`].
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    grid: TorusGrid,
    /// `types[0]` is the input, `types[i + 1]` the output of layer `i`.
    types: Vec<ActivationType>,
    nonlinearities: Vec<Option<Nonlinearity>>,
}

fn type_error(layer: usize, reason: impl Into<String>) -> Error {
    Error::TypeSystem {
        layer,
        reason: reason.into(),
    }
}

impl Network {
    /// Checks that fibers chain, nonlinearities are admissible, residual
    /// endpoints are addable and the readout sees an invariant vector.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let grid = TorusGrid::new(spec.grid)?;
        let input = match (&spec.input, spec.layers.first()) {
            (Some(f), _) => f.clone(),
            (None, Some(LayerSpec::SteerableConv { in_fiber, .. })) => in_fiber.clone(),
            (None, _) => {
                return Err(Error::InvalidArgument(
                    "network input fiber is not declared and the first layer is not a convolution".into(),
                ))
            }
        };
        input.channels()?;
        let mut types = vec![ActivationType::Field(input)];
        let mut nonlinearities = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let cur = types.last().expect("input type present").clone();
            let mut nl = None;
            let next = match layer {
                LayerSpec::SteerableConv {
                    in_fiber,
                    out_fiber,
                    s,
                } => {
                    if s % 2 == 0 {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i}: patch size must be odd, got {s}"
                        )));
                    }
                    out_fiber.channels()?;
                    match &cur {
                        ActivationType::Field(f) if f == in_fiber => {}
                        ActivationType::Field(f) => {
                            return Err(type_error(
                                i,
                                format!("convolution expects fiber {in_fiber}, receives {f}"),
                            ))
                        }
                        ActivationType::Vector(_) => {
                            return Err(type_error(i, "convolution applied to a pooled vector"))
                        }
                    }
                    ActivationType::Field(out_fiber.clone())
                }
                LayerSpec::Nonlinearity { tag, bias } => {
                    let parsed = Nonlinearity::parse(tag)?;
                    if !bias.is_finite() || *bias < 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i}: norm-relu bias must be finite and non-negative"
                        )));
                    }
                    nl = Some(parsed);
                    let f = cur
                        .fiber()
                        .ok_or_else(|| type_error(i, "nonlinearity applied to a pooled vector"))?;
                    let after = f.after(parsed).map_err(|e| type_error(i, e.to_string()))?;
                    ActivationType::Field(after)
                }
                LayerSpec::ResidualAdd { from } => {
                    if *from > i {
                        return Err(type_error(
                            i,
                            format!("residual source {from} is not an earlier activation"),
                        ));
                    }
                    let a = cur
                        .fiber()
                        .ok_or_else(|| type_error(i, "residual add on a pooled vector"))?;
                    let b = types[*from]
                        .fiber()
                        .ok_or_else(|| type_error(i, "residual source is a pooled vector"))?;
                    if !check_addable(a, b) {
                        return Err(type_error(
                            i,
                            format!("cannot add fibers {a} and {b}: capsule lists differ"),
                        ));
                    }
                    cur.clone()
                }
                LayerSpec::GlobalPool {} => {
                    let f = cur
                        .fiber()
                        .ok_or_else(|| type_error(i, "global pool on a pooled vector"))?;
                    if !f.is_a1_only() {
                        return Err(type_error(
                            i,
                            format!("global pool needs an A1-only fiber, got {f}"),
                        ));
                    }
                    ActivationType::Vector(f.channels()?)
                }
                LayerSpec::AffineReadout { classes } => {
                    if *classes == 0 {
                        return Err(Error::InvalidArgument(format!("layer {i}: zero classes")));
                    }
                    match cur {
                        ActivationType::Vector(_) => ActivationType::Vector(*classes),
                        ActivationType::Field(_) => {
                            return Err(type_error(i, "affine readout needs a pooled vector"))
                        }
                    }
                }
            };
            nonlinearities.push(nl);
            types.push(next);
        }
        Ok(Network {
            spec,
            grid,
            types,
            nonlinearities,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(NetworkSpec::from_json(text)?)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.spec.layers
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn input_fiber(&self) -> &FiberSpec {
        self.types[0].fiber().expect("input is a field")
    }

    pub fn activation_types(&self) -> &[ActivationType] {
        &self.types
    }

    /// Parsed tag of layer `i` if it is a nonlinearity.
    pub fn nonlinearity(&self, i: usize) -> Option<Nonlinearity> {
        self.nonlinearities[i]
    }

    /// Length of the final activation when it is a vector.
    pub fn num_outputs(&self) -> Option<usize> {
        match self.types.last() {
            Some(ActivationType::Vector(n)) => Some(*n),
            _ => None,
        }
    }
}

/// Trainable parameters of one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Conv(FilterBankParams),
    Readout {
        weight: DMatrix<f64>,
        bias: DVector<f64>,
    },
}

/// Parameters for every layer of a [`Network`]; `None` for parameter-free layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    layers: Vec<Option<LayerParams>>,
}

impl ParamSet {
    pub fn zeros(net: &Network, catalog: &BasisCatalog) -> Result<Self> {
        let mut layers = Vec::with_capacity(net.layers().len());
        for (i, layer) in net.layers().iter().enumerate() {
            layers.push(match layer {
                LayerSpec::SteerableConv {
                    in_fiber,
                    out_fiber,
                    s,
                } => Some(LayerParams::Conv(FilterBankParams::zeros(
                    in_fiber, out_fiber, *s, catalog,
                )?)),
                LayerSpec::AffineReadout { classes } => {
                    let fan_in = match &net.types[i] {
                        ActivationType::Vector(n) => *n,
                        ActivationType::Field(_) => unreachable!("validated"),
                    };
                    Some(LayerParams::Readout {
                        weight: DMatrix::zeros(*classes, fan_in),
                        bias: DVector::zeros(*classes),
                    })
                }
                _ => None,
            });
        }
        Ok(ParamSet { layers })
    }

    /// Gaussian coefficients; readout weights scaled by `1/sqrt(fan-in)`,
    /// readout biases zero.
    pub fn random<R: Rng + ?Sized>(net: &Network, catalog: &BasisCatalog, rng: &mut R) -> Result<Self> {
        let mut out = Self::zeros(net, catalog)?;
        for (layer, p) in net.layers().iter().zip(out.layers.iter_mut()) {
            match (layer, p) {
                (
                    LayerSpec::SteerableConv {
                        in_fiber,
                        out_fiber,
                        s,
                    },
                    Some(LayerParams::Conv(c)),
                ) => *c = FilterBankParams::random(in_fiber, out_fiber, *s, catalog, rng)?,
                (_, Some(LayerParams::Readout { weight, .. })) => {
                    let scale = 1.0 / (weight.ncols().max(1) as f64).sqrt();
                    for v in weight.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = z * scale;
                    }
                }
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn layer(&self, i: usize) -> Option<&LayerParams> {
        self.layers.get(i).and_then(|p| p.as_ref())
    }

    pub fn layer_mut(&mut self, i: usize) -> Option<&mut LayerParams> {
        self.layers.get_mut(i).and_then(|p| p.as_mut())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn arrays(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flatten().flat_map(|p| match p {
            LayerParams::Conv(c) => c.blocks().iter().map(|b| b.as_slice()).collect::<Vec<_>>(),
            LayerParams::Readout { weight, bias } => vec![weight.as_slice(), bias.as_slice()],
        })
    }

    fn arrays_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flatten().flat_map(|p| match p {
            LayerParams::Conv(c) => c
                .blocks_mut()
                .iter_mut()
                .map(|b| b.as_mut_slice())
                .collect::<Vec<_>>(),
            LayerParams::Readout { weight, bias } => {
                vec![weight.as_mut_slice(), bias.as_mut_slice()]
            }
        })
    }

    pub fn num_params(&self) -> usize {
        self.arrays().map(|a| a.len()).sum()
    }

    /// All scalars in a fixed order (layer, block, column-major).
    pub fn to_vec(&self) -> Vec<f64> {
        self.arrays().flat_map(|a| a.iter().copied()).collect()
    }

    /// Inverse of [`ParamSet::to_vec`].
    pub fn set_from_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut it = values.iter();
        for a in self.arrays_mut() {
            for v in a.iter_mut() {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamSet) -> Result<()> {
        if self.num_params() != other.num_params() {
            return Err(Error::Shape("parameter sets differ in size".into()));
        }
        let src = other.to_vec();
        let mut it = src.iter();
        for a in self.arrays_mut() {
            for v in a.iter_mut() {
                *v += alpha * it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().all(|a| a.iter().all(|v| v.is_finite()))
    }

    /// Named tensors: `layer{i}.theta.{a}.{b}`, `layer{i}.weight`, `layer{i}.bias`.
    pub fn to_tensors(&self) -> Result<Vec<(String, Tensor)>> {
        let mut out = Vec::new();
        for (i, p) in self.layers.iter().enumerate() {
            match p {
                Some(LayerParams::Conv(c)) => {
                    let (_, n_out) = c.entry_counts();
                    for (k, b) in c.blocks().iter().enumerate() {
                        out.push((
                            format!("layer{i}.theta.{}.{}", k / n_out, k % n_out),
                            matrix_tensor(b)?,
                        ));
                    }
                }
                Some(LayerParams::Readout { weight, bias }) => {
                    out.push((format!("layer{i}.weight"), matrix_tensor(weight)?));
                    out.push((
                        format!("layer{i}.bias"),
                        Tensor::from_f64(vec![bias.len()], bias.as_slice())?,
                    ));
                }
                None => {}
            }
        }
        Ok(out)
    }

    /// Reads tensors written by [`ParamSet::to_tensors`]; every tensor the
    /// network needs must be present with the shape the spec implies.
    pub fn from_tensors(net: &Network, catalog: &BasisCatalog, tensors: &[(String, Tensor)]) -> Result<Self> {
        let mut out = Self::zeros(net, catalog)?;
        let find = |name: &str| -> Result<&Tensor> {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Parse(format!("parameter file lacks tensor '{name}'")))
        };
        let expected = out.to_tensors()?.len();
        if tensors.len() != expected {
            return Err(Error::Parse(format!(
                "parameter file holds {} tensors, the network needs {expected}",
                tensors.len()
            )));
        }
        for (i, layer) in net.layers().iter().enumerate() {
            match (layer, out.layers[i].as_mut()) {
                (
                    LayerSpec::SteerableConv {
                        in_fiber,
                        out_fiber,
                        s,
                    },
                    Some(LayerParams::Conv(c)),
                ) => {
                    let shapes = param_shapes(in_fiber, out_fiber, *s, catalog)?;
                    let n_out = out_fiber.entries().len();
                    for (k, (r, cols)) in shapes.into_iter().enumerate() {
                        let name = format!("layer{i}.theta.{}.{}", k / n_out, k % n_out);
                        c.blocks_mut()[k] = tensor_matrix(find(&name)?, r, cols, &name)?;
                    }
                }
                (_, Some(LayerParams::Readout { weight, bias })) => {
                    let name = format!("layer{i}.weight");
                    *weight = tensor_matrix(find(&name)?, weight.nrows(), weight.ncols(), &name)?;
                    let name = format!("layer{i}.bias");
                    let t = find(&name)?;
                    if t.dims != [bias.len()] {
                        return Err(Error::Parse(format!("tensor '{name}' has shape {:?}", t.dims)));
                    }
                    *bias = DVector::from_iterator(bias.len(), t.data.iter().map(|v| *v as f64));
                }
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_bundle(path, &self.to_tensors()?)
    }

    pub fn load(net: &Network, catalog: &BasisCatalog, path: &Path) -> Result<Self> {
        Self::from_tensors(net, catalog, &load_bundle(path)?)
    }
}

fn matrix_tensor(m: &DMatrix<f64>) -> Result<Tensor> {
    let data: Vec<f64> = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
        .collect();
    Tensor::from_f64(vec![m.nrows(), m.ncols()], &data)
}

fn tensor_matrix(t: &Tensor, rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>> {
    if t.dims != [rows, cols] {
        return Err(Error::Parse(format!(
            "tensor '{name}' has shape {:?}, expected [{rows}, {cols}]",
            t.dims
        )));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| t.data[i * cols + j] as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SMALL: &str = r#"{
        "grid": 5,
        "layers": [
            {"kind": "steerable-conv", "in": [["A1", 1]], "out": [["regular", 2], ["E", 1]], "s": 3},
            {"kind": "nonlinearity", "tag": "crelu"},
            {"kind": "steerable-conv", "in": [["crelu(regular)", 2], ["crelu(E)", 1]], "out": [{"capsule": "A1", "mult": 3}], "s": 3},
            {"kind": "global-pool"},
            {"kind": "affine-readout", "classes": 4}
        ]
    }"#;

    #[test]
    fn parses_and_types() {
        let net = Network::from_json(SMALL).unwrap();
        let t = net.activation_types();
        assert_eq!(t.len(), 6);
        assert_eq!(t[2], ActivationType::Field(FiberSpec::new(&[("crelu(regular)", 2), ("crelu(E)", 1)])));
        assert_eq!(t[4], ActivationType::Vector(3));
        assert_eq!(net.num_outputs(), Some(4));
    }

    #[test]
    fn round_trips_json() {
        let spec = NetworkSpec::from_json(SMALL).unwrap();
        assert_eq!(NetworkSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn rejects_unknown_fields_and_kinds() {
        assert!(matches!(
            NetworkSpec::from_json(r#"{"grid": 5, "layers": [{"kind": "max-pool"}]}"#),
            Err(Error::Parse(_))
        ));
        assert!(NetworkSpec::from_json(r#"{"grid": 5, "layers": [{"kind": "global-pool", "x": 1}]}"#).is_err());
        assert!(NetworkSpec::from_json("{").is_err());
    }

    #[test]
    fn mismatched_residual_is_a_type_error() {
        let spec = r#"{
            "grid": 5,
            "layers": [
                {"kind": "steerable-conv", "in": [["A1", 1]], "out": [["regular", 3]], "s": 3},
                {"kind": "steerable-conv", "in": [["regular", 3]], "out": [["qm", 6]], "s": 3},
                {"kind": "residual-add", "from": 1}
            ]
        }"#;
        match Network::from_json(spec) {
            Err(Error::TypeSystem { layer, .. }) => assert_eq!(layer, 2),
            other => panic!("expected a type error, got {other:?}"),
        }
    }

    #[test]
    fn other_type_errors() {
        let chain = r#"{"grid": 5, "layers": [
            {"kind": "steerable-conv", "in": [["A1", 1]], "out": [["E", 1]], "s": 1},
            {"kind": "steerable-conv", "in": [["A1", 1]], "out": [["A1", 1]], "s": 1}]}"#;
        assert!(matches!(Network::from_json(chain), Err(Error::TypeSystem { layer: 1, .. })));
        let relu_on_e = r#"{"grid": 5, "input": [["E", 1]], "layers": [{"kind": "nonlinearity", "tag": "relu"}]}"#;
        assert!(matches!(Network::from_json(relu_on_e), Err(Error::TypeSystem { layer: 0, .. })));
        let pool_e = r#"{"grid": 5, "input": [["E", 1]], "layers": [{"kind": "global-pool"}]}"#;
        assert!(matches!(Network::from_json(pool_e), Err(Error::TypeSystem { layer: 0, .. })));
        let readout_field = r#"{"grid": 5, "input": [["A1", 1]], "layers": [{"kind": "affine-readout", "classes": 2}]}"#;
        assert!(matches!(Network::from_json(readout_field), Err(Error::TypeSystem { layer: 0, .. })));
        let even = r#"{"grid": 5, "layers": [{"kind": "steerable-conv", "in": [["A1", 1]], "out": [["A1", 1]], "s": 2}]}"#;
        assert!(matches!(Network::from_json(even), Err(Error::InvalidArgument(_))));
        let even_grid = r#"{"grid": 4, "input": [["A1", 1]], "layers": []}"#;
        assert!(Network::from_json(even_grid).is_err());
    }

    #[test]
    fn param_counts_follow_the_spec() {
        let cat = BasisCatalog::new();
        let net = Network::from_json(SMALL).unwrap();
        let p = ParamSet::zeros(&net, &cat).unwrap();
        // the A1 patch has type (3,0,1,1,2): dim Hom is 9 into regular, 2 into E
        let conv0: usize = param_shapes(&FiberSpec::single("A1", 1), &FiberSpec::new(&[("regular", 2), ("E", 1)]), 3, &cat)
            .unwrap()
            .iter()
            .map(|(r, c)| r * c)
            .sum();
        assert_eq!(conv0, 9 * 2 + 2);
        let conv1: usize = param_shapes(
            &FiberSpec::new(&[("crelu(regular)", 2), ("crelu(E)", 1)]),
            &FiberSpec::single("A1", 3),
            3,
            &cat,
        )
        .unwrap()
        .iter()
        .map(|(r, c)| r * c)
        .sum();
        assert_eq!(p.num_params(), conv0 + conv1 + 4 * 3 + 4);
    }

    #[test]
    fn flatten_and_bundle_round_trip() {
        let cat = BasisCatalog::new();
        let net = Network::from_json(SMALL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ParamSet::random(&net, &cat, &mut rng).unwrap();
        let mut q = ParamSet::zeros(&net, &cat).unwrap();
        q.set_from_slice(&p.to_vec()).unwrap();
        assert_eq!(p, q);
        q.axpy(-1.0, &p).unwrap();
        assert!(q.to_vec().iter().all(|v| *v == 0.0));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.sftb");
        p.save(&path).unwrap();
        let back = ParamSet::load(&net, &cat, &path).unwrap();
        for (a, b) in p.to_vec().iter().zip(back.to_vec()) {
            assert_eq!(*a as f32 as f64, b);
        }
    }

    #[test]
    fn rejects_foreign_param_file() {
        let cat = BasisCatalog::new();
        let net = Network::from_json(SMALL).unwrap();
        let other = Network::from_json(
            r#"{"grid": 5, "layers": [{"kind": "steerable-conv", "in": [["A1", 1]], "out": [["A1", 1]], "s": 3}]}"#,
        )
        .unwrap();
        let p = ParamSet::zeros(&other, &cat).unwrap();
        assert!(matches!(
            ParamSet::from_tensors(&net, &cat, &p.to_tensors().unwrap()),
            Err(Error::Parse(_))
        ));
    }
}
