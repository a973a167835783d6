//! A from-scratch stacked LSTM regressor trained by backpropagation through
//! time with Adam.
//!
//! Gate blocks are stored in the order input, forget, cell candidate,
//! output. All arithmetic is `f64` and all randomness flows from explicit
//! seeds, so a run is reproducible bit for bit.

mod adam;
mod cell;
pub mod checkpoint;
mod network;
mod train;

pub use adam::{adam_step, AdamState};
pub use cell::{cell_forward, sigmoid, CellCache};
pub use network::{backward, forward, forward_batch, loss, mse, predict, ForwardCache, Mode};
pub use train::{learning_rate, train, LossHistory, TrainConfig};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub l1: f64,
    pub l2: f64,
    pub output_dim: usize,
    /// Optional ReLU layer between the top LSTM state and the linear output.
    #[serde(default)]
    pub head_hidden: Option<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            layers: 3,
            hidden: 128,
            dropout: 0.1,
            l1: 0.01,
            l2: 0.01,
            output_dim: 1,
            head_hidden: None,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.layers >= 1
            && self.hidden >= 1
            && (0.0..1.0).contains(&self.dropout)
            && self.l1 >= 0.0
            && self.l2 >= 0.0
            && self.output_dim == 1
            && self.head_hidden != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid network configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// `4*hidden x input`
    pub w_x: Array2<f64>,
    /// `4*hidden x hidden`
    pub w_h: Array2<f64>,
    /// `4*hidden`
    pub b: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayerParams {
            w_x: Array2::zeros((4 * hidden, input)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_x.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `out x in`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseParams { w: Array2::zeros((output, input)), b: Array1::zeros(output) }
    }
}

/// Every trainable tensor of the network. Gradients and Adam moments use
/// the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<LstmLayerParams>,
    pub head_hidden: Option<DenseParams>,
    pub head: DenseParams,
}

/// Name, shape and penalty flag of one tensor in the canonical ordering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub penalized: bool,
}

impl Params {
    pub fn zeros(config: &NetworkConfig, input_dim: usize) -> Self {
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let input = if l == 0 { input_dim } else { config.hidden };
            layers.push(LstmLayerParams::zeros(input, config.hidden));
        }
        let head_hidden = config.head_hidden.map(|d| DenseParams::zeros(config.hidden, d));
        let head_in = config.head_hidden.unwrap_or(config.hidden);
        Params { layers, head_hidden, head: DenseParams::zeros(head_in, config.output_dim) }
    }

    pub fn zeros_like(&self) -> Self {
        let mut p = self.clone();
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        p
    }

    /// Canonical ordering: per layer `w_x, w_h, b`; then the optional
    /// hidden head `w, b`; then the output head `w, b`.
    pub fn specs(&self) -> Vec<TensorSpec> {
        let spec = |name: String, shape: &[usize], penalized| TensorSpec { name, shape: shape.to_vec(), penalized };
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(spec(format!("lstm{l}.w_x"), layer.w_x.shape(), true));
            out.push(spec(format!("lstm{l}.w_h"), layer.w_h.shape(), true));
            out.push(spec(format!("lstm{l}.b"), layer.b.shape(), false));
        }
        if let Some(h) = &self.head_hidden {
            out.push(spec("head_hidden.w".into(), h.w.shape(), true));
            out.push(spec("head_hidden.b".into(), h.b.shape(), false));
        }
        out.push(spec("head.w".into(), self.head.w.shape(), true));
        out.push(spec("head.b".into(), self.head.b.shape(), false));
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            out.push(layer.w_x.as_slice().expect("standard layout"));
            out.push(layer.w_h.as_slice().expect("standard layout"));
            out.push(layer.b.as_slice().expect("standard layout"));
        }
        if let Some(h) = &self.head_hidden {
            out.push(h.w.as_slice().expect("standard layout"));
            out.push(h.b.as_slice().expect("standard layout"));
        }
        out.push(self.head.w.as_slice().expect("standard layout"));
        out.push(self.head.b.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.w_x.as_slice_mut().expect("standard layout"));
            out.push(layer.w_h.as_slice_mut().expect("standard layout"));
            out.push(layer.b.as_slice_mut().expect("standard layout"));
        }
        if let Some(h) = &mut self.head_hidden {
            out.push(h.w.as_slice_mut().expect("standard layout"));
            out.push(h.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head.w.as_slice_mut().expect("standard layout"));
        out.push(self.head.b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.specs().iter().map(|s| &s.shape).eq(other.specs().iter().map(|s| &s.shape))
    }

    /// `l1 * sum|w| + l2 * sum w^2` over weight matrices only.
    pub fn penalty(&self, l1: f64, l2: f64) -> f64 {
        let mut total = 0.0;
        for (spec, t) in self.specs().iter().zip(self.tensors()) {
            if spec.penalized {
                for w in t {
                    total += l1 * w.abs() + l2 * w * w;
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: NetworkConfig,
    pub input_dim: usize,
    pub params: Params,
    /// Bumped on every parameter update; forward caches record it so a
    /// backward pass against stale activations is refused.
    pub generation: u64,
}

impl LstmModel {
    /// Uniform `±1/sqrt(fan_in)` weights, zero biases except the forget
    /// block, which starts at 1.
    pub fn init(config: &NetworkConfig, input_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be >= 1".into()));
        }
        let mut params = Params::zeros(config, input_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        for layer in &mut params.layers {
            let bound = 1.0 / ((layer.input() + h) as f64).sqrt();
            layer.w_x.mapv_inplace(|_| rng.random_range(-bound..bound));
            layer.w_h.mapv_inplace(|_| rng.random_range(-bound..bound));
            layer.b.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
        }
        if let Some(dense) = &mut params.head_hidden {
            let bound = 1.0 / (dense.w.ncols() as f64).sqrt();
            dense.w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        let bound = 1.0 / (params.head.w.ncols() as f64).sqrt();
        params.head.w.mapv_inplace(|_| rng.random_range(-bound..bound));
        Ok(LstmModel { config: *config, input_dim, params, generation: 0 })
    }

    pub fn from_params(config: &NetworkConfig, input_dim: usize, params: Params) -> Result<Self> {
        config.validate()?;
        if !Params::zeros(config, input_dim).same_shape(&params) {
            return Err(Error::Shape("parameters do not match the network configuration".into()));
        }
        Ok(LstmModel { config: *config, input_dim, params, generation: 0 })
    }
}
