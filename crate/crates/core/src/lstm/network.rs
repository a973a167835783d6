use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cell::{step, StepActivations};
use super::{LstmModel, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Layer input at each step, `batch x in`.
    inputs: Vec<Array2<f64>>,
    steps: Vec<StepActivations>,
    /// Inverted-dropout multipliers applied to this layer's outputs.
    masks: Option<Vec<Array2<f64>>>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    mode: Mode,
    batch: usize,
    layers: Vec<LayerCache>,
    /// Top-layer final state after dropout, `batch x hidden`.
    head_input: Array2<f64>,
    /// Pre-activation of the optional ReLU head layer.
    head_hidden_pre: Option<Array2<f64>>,
    pub predictions: Vec<f64>,
}

fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Stacks sample `t`-th rows into a `batch x features` matrix.
fn time_slice(inputs: &[ArrayView2<f64>], t: usize) -> Array2<f64> {
    let width = inputs[0].ncols();
    let mut x = Array2::zeros((inputs.len(), width));
    for (b, sample) in inputs.iter().enumerate() {
        x.row_mut(b).assign(&sample.row(t));
    }
    x
}

/// Runs a batch of equally shaped `lookback x features` sequences.
///
/// In train mode with a non-zero rate, inverted dropout masks are drawn
/// from `seed` for every layer output (lower layers at every step, the top
/// layer at its final state). Eval mode never drops.
pub fn forward_batch(inputs: &[ArrayView2<f64>], model: &LstmModel, mode: Mode, seed: u64) -> Result<ForwardCache> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Shape("empty batch".into()))?;
    let (steps, width) = first.dim();
    if steps == 0 {
        return Err(Error::Shape("sequence with no time steps".into()));
    }
    if width != model.input_dim {
        return Err(Error::Shape(format!(
            "model expects {} features per step, got {width}",
            model.input_dim
        )));
    }
    if let Some(bad) = inputs.iter().find(|x| x.dim() != (steps, width)) {
        return Err(Error::Shape(format!("mixed sample shapes {:?} and {:?}", first.dim(), bad.dim())));
    }
    let batch = inputs.len();
    let hd = model.config.hidden;
    let rate = model.config.dropout;
    let mut rng = (mode == Mode::Train && rate > 0.0).then(|| ChaCha8Rng::seed_from_u64(seed));
    let n_layers = model.params.layers.len();

    let mut layer_inputs: Vec<Array2<f64>> = (0..steps).map(|t| time_slice(inputs, t)).collect();
    let mut caches = Vec::with_capacity(n_layers);
    let mut head_input = Array2::zeros((batch, hd));
    for (l, p) in model.params.layers.iter().enumerate() {
        let top = l + 1 == n_layers;
        let mut h = Array2::zeros((batch, hd));
        let mut c = Array2::zeros((batch, hd));
        let mut acts = Vec::with_capacity(steps);
        for x in &layer_inputs {
            let a = step(x.view(), h.view(), c.view(), p);
            h = a.h.clone();
            c = a.c.clone();
            acts.push(a);
        }
        let masks = rng.as_mut().map(|rng| {
            let n = if top { 1 } else { steps };
            (0..n).map(|_| dropout_mask(rng, batch, hd, rate)).collect::<Vec<_>>()
        });
        let next: Vec<Array2<f64>> = if top {
            let mut last = acts[steps - 1].h.clone();
            if let Some(m) = &masks {
                last *= &m[0];
            }
            head_input = last;
            Vec::new()
        } else {
            acts.iter()
                .enumerate()
                .map(|(t, a)| match &masks {
                    Some(m) => &a.h * &m[t],
                    None => a.h.clone(),
                })
                .collect()
        };
        caches.push(LayerCache { inputs: std::mem::replace(&mut layer_inputs, next), steps: acts, masks });
    }

    let (head_hidden_pre, features) = match &model.params.head_hidden {
        Some(dense) => {
            let pre = head_input.dot(&dense.w.t()) + &dense.b;
            let act = pre.mapv(|v| v.max(0.0));
            (Some(pre), act)
        }
        None => (None, head_input.clone()),
    };
    let out = features.dot(&model.params.head.w.t()) + &model.params.head.b;
    Ok(ForwardCache {
        generation: model.generation,
        mode,
        batch,
        layers: caches,
        head_input,
        head_hidden_pre,
        predictions: out.column(0).to_vec(),
    })
}

/// Single-sequence forward pass returning the scalar prediction.
pub fn forward(sample_input: ArrayView2<f64>, model: &LstmModel, mode: Mode, seed: u64) -> Result<(f64, ForwardCache)> {
    let cache = forward_batch(&[sample_input], model, mode, seed)?;
    Ok((cache.predictions[0], cache))
}

/// Eval-mode predictions, batched in chunks of `chunk` sequences.
pub fn predict(inputs: &[ArrayView2<f64>], model: &LstmModel, chunk: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(inputs.len());
    for part in inputs.chunks(chunk.max(1)) {
        out.extend(forward_batch(part, model, Mode::Eval, 0)?.predictions);
    }
    Ok(out)
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sum / predictions.len() as f64)
}

/// Mean squared error plus the L1/L2 penalties on weight matrices.
pub fn loss(predictions: &[f64], targets: &[f64], model: &LstmModel) -> Result<f64> {
    Ok(mse(predictions, targets)? + model.params.penalty(model.config.l1, model.config.l2))
}

/// Exact gradient of [`loss`] for the batch the cache was computed on.
///
/// The L1 term uses the subgradient `sign(0) = 0`.
pub fn backward(cache: &ForwardCache, targets: &[f64], model: &LstmModel) -> Result<Params> {
    if cache.mode != Mode::Train {
        return Err(Error::State("backward needs a train-mode forward cache".into()));
    }
    if cache.generation != model.generation {
        return Err(Error::State(format!(
            "forward cache is from parameter generation {}, model is at {}",
            cache.generation, model.generation
        )));
    }
    if cache.layers.len() != model.params.layers.len() || cache.head_input.ncols() != model.config.hidden {
        return Err(Error::State("forward cache does not match the model architecture".into()));
    }
    if targets.len() != cache.batch {
        return Err(Error::Shape(format!("{} targets for a batch of {}", targets.len(), cache.batch)));
    }
    let params = &model.params;
    let mut grads = params.zeros_like();
    let batch = cache.batch as f64;

    // d(mse)/d(prediction), batch x 1
    let d_out = Array2::from_shape_fn((cache.batch, 1), |(b, _)| 2.0 * (cache.predictions[b] - targets[b]) / batch);

    let d_head_in = match (&params.head_hidden, &cache.head_hidden_pre) {
        (Some(dense), Some(pre)) => {
            let act = pre.mapv(|v| v.max(0.0));
            grads.head.w += &d_out.t().dot(&act);
            grads.head.b += &d_out.sum_axis(Axis(0));
            let mut d_pre = d_out.dot(&params.head.w);
            Zip::from(&mut d_pre).and(pre).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            let g = grads.head_hidden.as_mut().expect("same shape as params");
            g.w += &d_pre.t().dot(&cache.head_input);
            g.b += &d_pre.sum_axis(Axis(0));
            d_pre.dot(&dense.w)
        }
        (None, None) => {
            grads.head.w += &d_out.t().dot(&cache.head_input);
            grads.head.b += &d_out.sum_axis(Axis(0));
            d_out.dot(&params.head.w)
        }
        _ => return Err(Error::State("forward cache does not match the model head".into())),
    };

    let hd = model.config.hidden;
    let n_layers = cache.layers.len();
    let steps = cache.layers[0].steps.len();
    // Gradient w.r.t. each layer's (pre-dropout) output h_t.
    let mut d_h_out: Vec<Array2<f64>> = vec![Array2::zeros((cache.batch, hd)); steps];
    d_h_out[steps - 1] = match &cache.layers[n_layers - 1].masks {
        Some(m) => &d_head_in * &m[0],
        None => d_head_in,
    };

    for l in (0..n_layers).rev() {
        let lc = &cache.layers[l];
        let p = &params.layers[l];
        let g = &mut grads.layers[l];
        let mut dh_next = Array2::<f64>::zeros((cache.batch, hd));
        let mut dc_next = Array2::<f64>::zeros((cache.batch, hd));
        let mut d_inputs: Vec<Array2<f64>> = Vec::with_capacity(steps);
        let mut dz = Array2::<f64>::zeros((cache.batch, 4 * hd));
        for t in (0..steps).rev() {
            let a = &lc.steps[t];
            let zeros;
            let (h_prev, c_prev) = if t == 0 {
                zeros = Array2::zeros((cache.batch, hd));
                (&zeros, &zeros)
            } else {
                (&lc.steps[t - 1].h, &lc.steps[t - 1].c)
            };
            let dh = &d_h_out[t] + &dh_next;
            {
                let dzs = dz.as_slice_mut().expect("standard layout");
                let dcn = dc_next.as_slice_mut().expect("standard layout");
                let cows = [&dh, &a.i, &a.f, &a.g, &a.o, &a.tanh_c, c_prev].map(|m| m.as_standard_layout());
                let [dh, i, f, gg, o, tc, cp] = cows.each_ref().map(|m| m.as_slice().expect("standard layout"));
                for r in 0..cache.batch {
                    let row = &mut dzs[r * 4 * hd..(r + 1) * 4 * hd];
                    for u in 0..hd {
                        let k = r * hd + u;
                        let dc = dh[k] * o[k] * (1.0 - tc[k] * tc[k]) + dcn[k];
                        row[u] = dc * gg[k] * i[k] * (1.0 - i[k]);
                        row[hd + u] = dc * cp[k] * f[k] * (1.0 - f[k]);
                        row[2 * hd + u] = dc * i[k] * (1.0 - gg[k] * gg[k]);
                        row[3 * hd + u] = dh[k] * tc[k] * o[k] * (1.0 - o[k]);
                        dcn[k] = dc * f[k];
                    }
                }
            }
            g.w_x += &dz.t().dot(&lc.inputs[t]);
            g.w_h += &dz.t().dot(h_prev);
            g.b += &dz.sum_axis(Axis(0));
            if l > 0 {
                d_inputs.push(dz.dot(&p.w_x));
            }
            dh_next = dz.dot(&p.w_h);
        }
        if l > 0 {
            d_inputs.reverse();
            let below = &cache.layers[l - 1];
            d_h_out = match &below.masks {
                Some(m) => d_inputs.iter().zip(m).map(|(d, m)| d * m).collect(),
                None => d_inputs,
            };
        }
    }

    let (l1, l2) = (model.config.l1, model.config.l2);
    if l1 != 0.0 || l2 != 0.0 {
        for ((spec, gt), pt) in params.specs().iter().zip(grads.tensors_mut()).zip(params.tensors()) {
            if spec.penalized {
                for (gv, &w) in gt.iter_mut().zip(pt) {
                    let sign = if w > 0.0 {
                        1.0
                    } else if w < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *gv += l1 * sign + 2.0 * l2 * w;
                }
            }
        }
    }
    Ok(grads)
}
