use super::{LstmModel, Params};
use crate::error::{Error, Result};

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        }
    }
}

/// One Adam update of `model` in place:
/// `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(model: &mut LstmModel, grads: &Params, state: &mut AdamState, lr: f64) -> Result<()> {
    if !model.params.same_shape(grads) || !model.params.same_shape(&state.m) {
        return Err(Error::Shape("gradient or optimizer state does not match the model".into()));
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let tensors = model
        .params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for (((p, g), m), v) in tensors {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
        }
    }
    model.generation += 1;
    Ok(())
}
