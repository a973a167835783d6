use std::path::Path;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, backward, forward_batch, mse, predict, AdamState, LstmModel, Mode, NetworkConfig};
use crate::error::{Error, Result};
use crate::swvmd::DatasetSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch: usize,
    pub max_epochs: usize,
    pub lr0: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub decay: f64,
    pub decay_every: usize,
    pub lr_floor: f64,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 256,
            max_epochs: 5000,
            lr0: 0.0015,
            decay: 0.99,
            decay_every: 50,
            lr_floor: 1e-4,
            seed: 0,
            patience: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch >= 1
            && self.max_epochs >= 1
            && self.lr0 > 0.0
            && self.decay > 0.0
            && self.decay <= 1.0
            && self.decay_every >= 1
            && self.lr_floor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Step schedule for 0-based `epoch`, never below the floor (or below
/// `lr0` itself when that is smaller).
pub fn learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    let decayed = config.lr0 * config.decay.powi((epoch / config.decay_every) as i32);
    decayed.max(config.lr_floor.min(config.lr0))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub train_mse: Vec<f64>,
    /// `NaN` for every epoch when no validation set was given.
    pub val_mse: Vec<f64>,
    pub lr: Vec<f64>,
    /// 0-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl LossHistory {
    pub fn epochs(&self) -> usize {
        self.train_mse.len()
    }

    /// `epoch,train_mse,val_mse` with 1-based epochs; a missing validation
    /// loss is an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for (e, (t, v)) in self.train_mse.iter().zip(&self.val_mse).enumerate() {
            if v.is_nan() {
                out.push_str(&format!("{},{t},\n", e + 1));
            } else {
                out.push_str(&format!("{},{t},{v}\n", e + 1));
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses `to_csv` output. The file carries no learning rates, and the
    /// best epoch is recovered as the first minimum of the monitored loss.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("epoch,train_mse,val_mse") {
            return Err(Error::Input("loss history header must be epoch,train_mse,val_mse".into()));
        }
        let mut h = LossHistory::default();
        for (i, line) in lines.enumerate() {
            let bad = || Error::Input(format!("loss history line {}: {line:?}", i + 2));
            let mut fields = line.split(',');
            let (e, t, v) = (fields.next(), fields.next(), fields.next());
            if e.and_then(|e| e.parse::<usize>().ok()) != Some(i + 1) || fields.next().is_some() {
                return Err(bad());
            }
            h.train_mse.push(t.and_then(|t| t.parse().ok()).ok_or_else(bad)?);
            h.val_mse.push(match v {
                Some("") => f64::NAN,
                Some(v) => v.parse().map_err(|_| bad())?,
                None => return Err(bad()),
            });
        }
        let monitored = if h.val_mse.iter().all(|v| v.is_nan()) { &h.train_mse } else { &h.val_mse };
        let mut best = f64::INFINITY;
        for (e, &m) in monitored.iter().enumerate() {
            if m < best {
                best = m;
                h.best_epoch = e;
            }
        }
        Ok(h)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn views(samples: &[DatasetSample]) -> Vec<ArrayView2<'_, f64>> {
    samples.iter().map(|s| s.input.view()).collect()
}

/// Mini-batch Adam training with a stepped learning-rate decay and early
/// stopping on validation MSE. Returns the best-validation parameters.
pub fn train(
    train_set: &[DatasetSample],
    val_set: &[DatasetSample],
    net: &NetworkConfig,
    config: &TrainConfig,
) -> Result<(LstmModel, LossHistory)> {
    config.validate()?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::InsufficientData("empty training set".into()))?;
    let input_dim = first.input.ncols();
    let mut model = LstmModel::init(net, input_dim, config.seed)?;
    let mut adam = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let train_targets: Vec<f64> = train_set.iter().map(|s| s.target).collect();
    let val_inputs = views(val_set);
    let val_targets: Vec<f64> = val_set.iter().map(|s| s.target).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = LossHistory::default();
    let mut best = (f64::INFINITY, model.params.clone());
    let mut since_best = 0usize;
    for epoch in 0..config.max_epochs {
        let lr = learning_rate(config, epoch);
        order.shuffle(&mut rng);
        let mut sq_sum = 0.0;
        for chunk in order.chunks(config.batch) {
            let inputs: Vec<_> = chunk.iter().map(|&i| train_set[i].input.view()).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| train_targets[i]).collect();
            let cache = forward_batch(&inputs, &model, Mode::Train, rng.next_u64())?;
            sq_sum += mse(&cache.predictions, &targets)? * chunk.len() as f64;
            let grads = backward(&cache, &targets, &model)?;
            adam_step(&mut model, &grads, &mut adam, lr)?;
        }
        let train_mse = sq_sum / train_set.len() as f64;
        let val_mse = if val_set.is_empty() {
            f64::NAN
        } else {
            mse(&predict(&val_inputs, &model, config.batch)?, &val_targets)?
        };
        history.train_mse.push(train_mse);
        history.val_mse.push(val_mse);
        history.lr.push(lr);
        if !train_mse.is_finite() || (!val_set.is_empty() && !val_mse.is_finite()) {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                msg: format!("train mse {train_mse}, validation mse {val_mse}"),
            });
        }
        let monitored = if val_set.is_empty() { train_mse } else { val_mse };
        if monitored < best.0 {
            best = (monitored, model.params.clone());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    model.params = best.1;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use ndarray::Array2;

    fn sine_samples(n: usize, lookback: usize) -> Vec<DatasetSample> {
        let d = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        (0..n)
            .map(|s| DatasetSample {
                input: Array2::from_shape_fn((lookback, 1), |(t, _)| ((s + t) as f64 * 0.4).sin()),
                target: ((s + lookback) as f64 * 0.4).sin(),
                target_date: d,
                input_end_date: d,
            })
            .collect()
    }

    fn small_net() -> NetworkConfig {
        NetworkConfig { layers: 1, hidden: 4, dropout: 0.0, l1: 0.0, l2: 0.0, ..Default::default() }
    }

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(learning_rate(&c, 0), 0.0015);
        assert_eq!(learning_rate(&c, 49), 0.0015);
        assert!((learning_rate(&c, 50) - 0.0015 * 0.99).abs() < 1e-18);
        assert_eq!(learning_rate(&c, 15_000), 1e-4);
        assert!(learning_rate(&c, 4999) > 1e-4);
    }

    #[test]
    fn zero_patience_runs_one_epoch() {
        let data = sine_samples(10, 4);
        let cfg = TrainConfig { patience: 0, batch: 4, ..Default::default() };
        let (_, h) = train(&data, &data[..3], &small_net(), &cfg).unwrap();
        assert_eq!(h.epochs(), 1);
    }

    #[test]
    fn same_seed_same_history() {
        let data = sine_samples(12, 4);
        let net = NetworkConfig { dropout: 0.2, ..small_net() };
        let cfg = TrainConfig { max_epochs: 15, batch: 5, seed: 3, ..Default::default() };
        let (m1, h1) = train(&data, &data[..4], &net, &cfg).unwrap();
        let (m2, h2) = train(&data, &data[..4], &net, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1.params, m2.params);
        assert_eq!(h1.epochs(), 15);
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = sine_samples(6, 3);
        data[2].target = f64::NAN;
        let cfg = TrainConfig { max_epochs: 3, ..Default::default() };
        assert!(matches!(train(&data, &[], &small_net(), &cfg), Err(Error::Divergence { epoch: 1, .. })));
        assert!(train(&[], &[], &small_net(), &cfg).is_err());
    }

    #[test]
    fn csv_format() {
        let h = LossHistory {
            train_mse: vec![0.5, 0.25],
            val_mse: vec![f64::NAN, 0.125],
            lr: vec![0.1, 0.1],
            best_epoch: 1,
        };
        assert_eq!(h.to_csv(), "epoch,train_mse,val_mse\n1,0.5,\n2,0.25,0.125\n");
    }

    #[test]
    fn csv_reload_recovers_best_epoch() {
        let data = sine_samples(12, 4);
        let cfg = TrainConfig { max_epochs: 12, batch: 4, patience: 3, ..Default::default() };
        let (_, h) = train(&data, &data[..4], &small_net(), &cfg).unwrap();
        let back = LossHistory::from_csv(&h.to_csv()).unwrap();
        assert_eq!((&back.train_mse, &back.val_mse, back.best_epoch), (&h.train_mse, &h.val_mse, h.best_epoch));
        assert!(LossHistory::from_csv("epoch,train_mse,val_mse\n2,0.1,\n").is_err());
        assert!(LossHistory::from_csv("e,t\n").is_err());
    }
}
