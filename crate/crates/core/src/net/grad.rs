//! Reverse-mode gradients of softmax cross-entropy w.r.t. a [`ParamSet`].

use nalgebra::{DMatrix, DVector};

use super::forward::{Activation, AssembledLayer, AssembledNet};
use super::spec::{LayerParams, LayerSpec, Network, ParamSet};
use super::{correlate_backward, nonlinearity_backward};
use crate::error::{Error, Result};
use crate::field::{FeatureField, Scalar};
use crate::intertwiner::{pullback_to_params, BasisCatalog};

/// Mean loss and gradient over a batch.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub loss: f64,
    pub grads: ParamSet,
    /// Samples whose arg-max logit equals the label.
    pub correct: usize,
}

/// `(−log softmax(z)[label], softmax(z) − e_label)`, computed stably in 64-bit.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() + m - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Index of the largest logit; ties go to the lower class.
pub fn argmax<T: Scalar>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate() {
        if *v > logits[best] {
            best = i;
        }
    }
    best
}

fn add_into<T: Scalar>(slot: &mut Option<Activation<T>>, g: Activation<T>) {
    match slot {
        None => *slot = Some(g),
        Some(Activation::Field(acc)) => {
            if let Activation::Field(gf) = g {
                for (a, b) in acc.data_mut().iter_mut().zip(gf.data()) {
                    *a = *a + *b;
                }
            }
        }
        Some(Activation::Vector(acc)) => {
            if let Activation::Vector(gv) = g {
                for (a, b) in acc.iter_mut().zip(&gv) {
                    *a = *a + *b;
                }
            }
        }
    }
}

/// Raw gradients per layer: conv filter weights or readout `(W, b)`.
enum RawGrad {
    Conv(Vec<f64>),
    Readout(DMatrix<f64>, DVector<f64>),
}

/// Back-propagates `dlogits` through one forward trace.
fn backward_sample<T: Scalar>(
    net: &AssembledNet<T>,
    acts: &[Activation<T>],
    dlogits: Vec<T>,
    raw: &mut [Option<RawGrad>],
) -> Result<()> {
    let layers = net.layers();
    let mut grads: Vec<Option<Activation<T>>> = vec![None; acts.len()];
    grads[layers.len()] = Some(Activation::Vector(dlogits));
    for i in (0..layers.len()).rev() {
        let Some(g) = grads[i + 1].take() else {
            continue;
        };
        let input = &acts[i];
        let field = || {
            input
                .as_field()
                .ok_or_else(|| Error::Shape(format!("layer {i} input is not a field")))
        };
        let gfield = |g: &Activation<T>| -> Result<FeatureField<T>> {
            g.as_field()
                .cloned()
                .ok_or_else(|| Error::Shape(format!("layer {i} gradient is not a field")))
        };
        match &layers[i] {
            AssembledLayer::Conv(bank) => {
                let (gin, gw) = correlate_backward(field()?, bank, &gfield(&g)?)?;
                match &mut raw[i] {
                    Some(RawGrad::Conv(acc)) => {
                        for (a, b) in acc.iter_mut().zip(&gw) {
                            *a += b.as_f64();
                        }
                    }
                    slot => *slot = Some(RawGrad::Conv(gw.iter().map(|v| v.as_f64()).collect())),
                }
                add_into(&mut grads[i], Activation::Field(gin));
            }
            AssembledLayer::Nonlinearity { nl, bias } => {
                let gin = nonlinearity_backward(field()?, *nl, *bias, &gfield(&g)?)?;
                add_into(&mut grads[i], Activation::Field(gin));
            }
            AssembledLayer::ResidualAdd { from } => {
                add_into(&mut grads[*from], g.clone());
                add_into(&mut grads[i], g);
            }
            AssembledLayer::GlobalPool => {
                let f = field()?;
                let gv = g.as_vector().ok_or_else(|| Error::Shape("pool gradient".into()))?;
                let n = T::lift(f.grid().num_points() as f64);
                let mut gin = FeatureField::zeros(f.grid(), f.fiber().clone())?;
                let k = f.channels();
                for px in gin.data_mut().chunks_exact_mut(k.max(1)) {
                    for (o, v) in px.iter_mut().zip(gv) {
                        *o = *v / n;
                    }
                }
                add_into(&mut grads[i], Activation::Field(gin));
            }
            AssembledLayer::Readout(head) => {
                let v = input
                    .as_vector()
                    .ok_or_else(|| Error::Shape("readout input".into()))?;
                let gv = g.as_vector().ok_or_else(|| Error::Shape("readout gradient".into()))?;
                let gw = DMatrix::from_fn(head.classes, head.inputs, |c, j| gv[c].as_f64() * v[j].as_f64());
                let gb = DVector::from_iterator(head.classes, gv.iter().map(|x| x.as_f64()));
                match &mut raw[i] {
                    Some(RawGrad::Readout(w, b)) => {
                        *w += gw;
                        *b += gb;
                    }
                    slot => *slot = Some(RawGrad::Readout(gw, gb)),
                }
                let gin: Vec<T> = (0..head.inputs)
                    .map(|j| {
                        (0..head.classes)
                            .map(|c| head.weight[c * head.inputs + j] * gv[c])
                            .sum()
                    })
                    .collect();
                add_into(&mut grads[i], Activation::Vector(gin));
            }
        }
    }
    Ok(())
}

/// Mean softmax cross-entropy over `batch` and its gradient w.r.t. every
/// `Θ` block and readout parameter. Filter-bank gradients are pulled back
/// through the fixed bases, `∂L/∂Θ = ψᵀ ∂L/∂Ψ`.
pub fn grad_params<T: Scalar>(
    net: &Network,
    params: &ParamSet,
    batch: &[(FeatureField<T>, usize)],
    catalog: &BasisCatalog,
) -> Result<Gradient> {
    let assembled = net.assemble::<T>(params, catalog)?;
    grad_assembled(net, &assembled, batch, catalog)
}

/// As [`grad_params`] with the filter banks already built.
pub fn grad_assembled<T: Scalar>(
    net: &Network,
    assembled: &AssembledNet<T>,
    batch: &[(FeatureField<T>, usize)],
    catalog: &BasisCatalog,
) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut raw: Vec<Option<RawGrad>> = (0..net.layers().len()).map(|_| None).collect();
    let mut loss = 0.0;
    let mut correct = 0;
    for (f, label) in batch {
        let acts = assembled.forward_trace(f)?;
        let logits: Vec<f64> = acts
            .last()
            .and_then(|a| a.as_vector())
            .ok_or_else(|| Error::Shape("network does not end in a readout".into()))?
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let (l, dz) = softmax_cross_entropy(&logits, *label)?;
        loss += l * scale;
        if argmax(&logits) == *label {
            correct += 1;
        }
        let dz: Vec<T> = dz.into_iter().map(|v| T::lift(v * scale)).collect();
        backward_sample(assembled, &acts, dz, &mut raw)?;
    }

    let mut grads = ParamSet::zeros(net, catalog)?;
    for (i, layer) in net.layers().iter().enumerate() {
        match (layer, raw[i].take(), grads.layer_mut(i)) {
            (
                LayerSpec::SteerableConv {
                    in_fiber,
                    out_fiber,
                    s,
                },
                Some(RawGrad::Conv(gw)),
                Some(LayerParams::Conv(slot)),
            ) => *slot = pullback_to_params(in_fiber, out_fiber, *s, &gw, catalog)?,
            (_, Some(RawGrad::Readout(gw, gb)), Some(LayerParams::Readout { weight, bias })) => {
                *weight = gw;
                *bias = gb;
            }
            _ => {}
        }
    }
    Ok(Gradient {
        loss,
        grads,
        correct,
    })
}

/// Mean loss only, for finite-difference checks.
pub fn batch_loss<T: Scalar>(
    net: &Network,
    params: &ParamSet,
    batch: &[(FeatureField<T>, usize)],
    catalog: &BasisCatalog,
) -> Result<f64> {
    let assembled = net.assemble::<T>(params, catalog)?;
    let mut loss = 0.0;
    for (f, label) in batch {
        let logits: Vec<f64> = assembled.logits(f)?.iter().map(|v| v.as_f64()).collect();
        loss += softmax_cross_entropy(&logits, *label)?.0;
    }
    Ok(loss / batch.len() as f64)
}

/// Worst elementwise disagreement between analytic and central-difference gradients.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GradCheckReport {
    pub params: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Central differences with step `h` over every parameter, in 64-bit.
/// The relative error of each entry is `|a − n| / max(|a|, |n|, floor)`;
/// the floor keeps entries that are zero in both computations from
/// dividing by zero.
pub fn finite_difference_check(
    net: &Network,
    params: &ParamSet,
    batch: &[(FeatureField<f64>, usize)],
    catalog: &BasisCatalog,
    h: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let analytic = grad_params(net, params, batch, catalog)?.grads.to_vec();
    let base = params.to_vec();
    let mut work = params.clone();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for (idx, a) in analytic.iter().enumerate() {
        let mut v = base.clone();
        v[idx] = base[idx] + h;
        work.set_from_slice(&v)?;
        let up = batch_loss(net, &work, batch, catalog)?;
        v[idx] = base[idx] - h;
        work.set_from_slice(&v)?;
        let down = batch_loss(net, &work, batch, catalog)?;
        let numeric = (up - down) / (2.0 * h);
        let abs = (a - numeric).abs();
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(abs / a.abs().max(numeric.abs()).max(floor));
    }
    Ok(GradCheckReport {
        params: analytic.len(),
        max_rel_error: max_rel,
        max_abs_error: max_abs,
    })
}
