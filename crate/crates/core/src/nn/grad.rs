use super::model::{ActivationTrace, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-parameter gradients, aligned with [`Model::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Gradients {
            tensors: model
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f32) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v *= c;
            }
        }
    }
}

/// Softmax in `f64`, shifted by the maximum for stability.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    if label >= logits.len() {
        return Err(Error::arg(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let p = softmax(logits.data());
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    let grad = p
        .iter()
        .enumerate()
        .map(|(i, &pi)| (pi - if i == label { 1.0 } else { 0.0 }) as f32)
        .collect();
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Backpropagates `grad_logits` through the recorded trace.
///
/// Returns the parameter gradients and, when `need_input_grad`, `dL/dx⁽⁰⁾`.
pub fn backprop(
    model: &Model,
    trace: &ActivationTrace,
    grad_logits: &Tensor,
    need_input_grad: bool,
) -> Result<(Gradients, Option<Tensor>)> {
    if trace.inputs.len() != model.layers.len() + 1 {
        return Err(Error::dim("trace does not belong to this model"));
    }
    let mut per_layer: Vec<Vec<Tensor>> = vec![Vec::new(); model.layers.len()];
    let mut grad = grad_logits.clone();
    let mut input_grad = None;
    for (k, layer) in model.layers.iter().enumerate().rev() {
        let want_dx = k > 0 || need_input_grad;
        let (dx, pg) = layer.backward(
            &trace.inputs[k],
            trace.pool_argmax[k].as_ref(),
            &grad,
            want_dx,
        )?;
        if let Some(pg) = pg {
            per_layer[k] = vec![pg.weight, pg.bias];
        }
        match dx {
            Some(dx) if k > 0 => grad = dx,
            Some(dx) => input_grad = Some(dx),
            None => break,
        }
    }
    Ok((
        Gradients {
            tensors: per_layer.into_iter().flatten().collect(),
        },
        input_grad,
    ))
}

/// Cross-entropy loss of the traced sample and the gradients of every
/// parameter.
pub fn loss_and_grad(model: &Model, trace: &ActivationTrace, label: usize) -> Result<(f64, Gradients)> {
    let (loss, grad_logits) = cross_entropy(trace.logits(), label)?;
    let (grads, _) = backprop(model, trace, &grad_logits, false)?;
    Ok((loss, grads))
}
