use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};

use super::LstmLayerParams;
use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one batched step; every array is `batch x hidden`.
#[derive(Debug, Clone)]
pub(crate) struct StepActivations {
    pub i: Array2<f64>,
    pub f: Array2<f64>,
    pub g: Array2<f64>,
    pub o: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

/// One LSTM step for a batch of rows.
pub(crate) fn step(
    x: ArrayView2<f64>,
    h_prev: ArrayView2<f64>,
    c_prev: ArrayView2<f64>,
    p: &LstmLayerParams,
) -> StepActivations {
    let hd = p.hidden();
    let mut z = x.dot(&p.w_x.t());
    z += &h_prev.dot(&p.w_h.t());
    z += &p.b;
    let i = z.slice(s![.., 0..hd]).mapv(sigmoid);
    let f = z.slice(s![.., hd..2 * hd]).mapv(sigmoid);
    let g = z.slice(s![.., 2 * hd..3 * hd]).mapv(f64::tanh);
    let o = z.slice(s![.., 3 * hd..4 * hd]).mapv(sigmoid);
    let mut c = Array2::zeros(i.raw_dim());
    Zip::from(&mut c)
        .and(&f)
        .and(c_prev)
        .and(&i)
        .and(&g)
        .for_each(|c, &f, &cp, &i, &g| *c = f * cp + i * g);
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    StepActivations { i, f, g, o, c, tanh_c, h }
}

/// Gate activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub input_gate: Array1<f64>,
    pub forget_gate: Array1<f64>,
    pub candidate: Array1<f64>,
    pub output_gate: Array1<f64>,
    pub tanh_c: Array1<f64>,
}

/// Single-sample LSTM update:
/// `c = f*c_prev + i*g`, `h = o*tanh(c)`.
pub fn cell_forward(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    params: &LstmLayerParams,
) -> Result<(Array1<f64>, Array1<f64>, CellCache)> {
    let hd = params.hidden();
    if x.len() != params.input() || h_prev.len() != hd || c_prev.len() != hd || params.b.len() != 4 * hd {
        return Err(Error::Shape(format!(
            "cell expects input {} and hidden {hd}, got input {}, h {}, c {}",
            params.input(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let row = |v: ArrayView1<f64>| v.insert_axis(ndarray::Axis(0)).to_owned();
    let a = step(row(x).view(), row(h_prev).view(), row(c_prev).view(), params);
    let flat = |m: Array2<f64>| m.row(0).to_owned();
    let cache = CellCache {
        x: x.to_owned(),
        h_prev: h_prev.to_owned(),
        c_prev: c_prev.to_owned(),
        input_gate: flat(a.i),
        forget_gate: flat(a.f),
        candidate: flat(a.g),
        output_gate: flat(a.o),
        tanh_c: flat(a.tanh_c),
    };
    Ok((flat(a.h), flat(a.c), cache))
}
