//! Minibatch training with Adam, MAE loss and dual early stopping on the
//! training and validation losses.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{mae_grad, mae_loss};
use super::network::{Mode, Network};
use super::optim::Adam;
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// A monitored loss must drop by at least this much to count as improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience_train: usize,
    pub patience_val: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 100,
            max_epochs: 500,
            patience_train: 30,
            patience_val: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch size and max epochs must be positive".into(),
            ));
        }
        if self.patience_train == 0 || self.patience_val == 0 {
            return Err(Error::Config("patience values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    TrainPatience,
    ValPatience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stop_reason: StopReason,
    /// 1-based epoch whose parameters are returned.
    pub best_epoch: usize,
    pub stop_epoch: usize,
}

/// Paired network inputs and target images; the leading axis indexes samples.
#[derive(Debug, Clone)]
pub struct Samples {
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl Samples {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if inputs.shape().first() != targets.shape().first() {
            return Err(shape_err(
                "samples",
                format!(
                    "{:?} inputs vs {:?} targets",
                    inputs.shape(),
                    targets.shape()
                ),
            ));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, rows: &[usize]) -> Samples {
        Samples {
            inputs: self.inputs.gather(rows),
            targets: self.targets.gather(rows),
        }
    }
}

pub struct Trained {
    pub network: Network,
    pub history: TrainHistory,
    pub optimizer: Adam,
}

/// Eval-mode MAE over a whole sample set, evaluated in chunks.
pub fn evaluate_loss(network: &Network, samples: &Samples, chunk: usize) -> Result<f64> {
    let n = samples.len();
    let (mut total, mut count) = (0.0, 0usize);
    let mut start = 0;
    while start < n {
        let end = (start + chunk.max(1)).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let part = samples.subset(&rows);
        let pred = network.forward(&part.inputs, Mode::Eval)?;
        total += mae_loss(&pred, &part.targets)? * pred.len() as f64;
        count += pred.len();
        start = end;
    }
    Ok(total / count as f64)
}

struct Monitor {
    best: f64,
    best_epoch: usize,
}

impl Monitor {
    fn new() -> Self {
        Self {
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best - MIN_IMPROVEMENT {
            self.best = loss;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    fn stalled(&self, epoch: usize, patience: usize) -> bool {
        epoch - self.best_epoch >= patience
    }
}

pub fn train(
    mut network: Network,
    train_set: &Samples,
    val_set: &Samples,
    config: &TrainConfig,
) -> Result<Trained> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.learning_rate, network.param_count());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut train_monitor = Monitor::new();
    let mut val_monitor = Monitor::new();
    let mut best_state = (network.params().to_vec(), network.buffers().to_vec());
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
        best_epoch: 0,
        stop_epoch: 0,
    };

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for rows in order.chunks(config.batch_size) {
            let batch = train_set.subset(rows);
            let trace = network.forward_trace(
                &batch.inputs,
                Mode::Train {
                    seed: rng.next_u64(),
                },
            )?;
            let pred = trace.output(&network);
            let loss = mae_loss(pred, &batch.targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let grad = mae_grad(pred, &batch.targets)?;
            let grads = network.backward(&trace, &grad, false)?;
            adam.update(network.params_mut(), &grads.params);
            network.update_running_stats(&trace);
            sum += loss * rows.len() as f64;
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = evaluate_loss(&network, val_set, config.batch_size.max(256))?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.stop_epoch = epoch;

        train_monitor.observe(epoch, train_loss);
        if val_monitor.observe(epoch, val_loss) {
            best_state = (network.params().to_vec(), network.buffers().to_vec());
        }
        if train_monitor.stalled(epoch, config.patience_train) {
            history.stop_reason = StopReason::TrainPatience;
            break;
        }
        if val_monitor.stalled(epoch, config.patience_val) {
            history.stop_reason = StopReason::ValPatience;
            break;
        }
    }
    history.best_epoch = val_monitor.best_epoch;
    network.set_state(&best_state.0, &best_state.1);
    Ok(Trained {
        network,
        history,
        optimizer: adam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{LayerSpec, NetworkBuilder};
    use rand::Rng;

    fn toy() -> (Network, Samples, Samples) {
        let mut b = NetworkBuilder::new();
        let x = b.input("x", &[3]);
        let out = b.chain(&x, [LayerSpec::dense(3, 4), LayerSpec::sigmoid()]);
        let net = Network::build(&b.finish(&out), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs = Tensor::from_fn(&[40, 3], |_| rng.random_range(-1.0..1.0));
        let targets = Tensor::from_fn(&[40, 4], |i| {
            let n = i / 4;
            if inputs.at(&[n, 0]) > 0.0 {
                1.0
            } else {
                0.0
            }
        });
        let all = Samples::new(inputs, targets).unwrap();
        let tr: Vec<usize> = (0..30).collect();
        let va: Vec<usize> = (30..40).collect();
        (net, all.subset(&tr), all.subset(&va))
    }

    #[test]
    fn frozen_optimizer_stops_on_train_patience() {
        let (net, tr, va) = toy();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 8,
            max_epochs: 20,
            patience_train: 1,
            patience_val: 5,
            seed: 0,
        };
        let out = train(net, &tr, &va, &cfg).unwrap();
        assert_eq!(out.history.stop_epoch, 2);
        assert_eq!(out.history.stop_reason, StopReason::TrainPatience);
        assert_eq!(out.history.train_loss.len(), 2);
    }

    #[test]
    fn first_epoch_loss_is_initial_loss_for_single_batch() {
        let (net, tr, va) = toy();
        let initial = mae_loss(&net.forward(&tr.inputs, Mode::Eval).unwrap(), &tr.targets).unwrap();
        let cfg = TrainConfig {
            batch_size: 1000,
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let out = train(net, &tr, &va, &cfg).unwrap();
        assert_eq!(out.history.train_loss[0], initial);
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: 8,
            max_epochs: 15,
            seed: 4,
            ..TrainConfig::default()
        };
        let (n1, tr, va) = toy();
        let (n2, _, _) = toy();
        let a = train(n1, &tr, &va, &cfg).unwrap();
        let b = train(n2, &tr, &va, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.network.params(), b.network.params());
        assert!(a.history.val_loss.last().unwrap() < &a.history.val_loss[0]);
    }

    #[test]
    fn val_patience_counts_from_best_epoch() {
        let (net, tr, _) = toy();
        // Validation targets the network cannot approach make val loss stall quickly.
        let va = Samples::new(
            Tensor::from_fn(&[5, 3], |i| i as f64),
            Tensor::full(&[5, 4], 0.5),
        )
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 10,
            max_epochs: 300,
            patience_train: 200,
            patience_val: 3,
            seed: 1,
        };
        let h = train(net, &tr, &va, &cfg).unwrap().history;
        if h.stop_reason == StopReason::ValPatience {
            assert_eq!(h.stop_epoch - h.best_epoch, 3);
        }
        assert!(h.stop_epoch <= 300);
    }

    #[test]
    fn rejects_empty_sets() {
        let (net, tr, _) = toy();
        let empty = tr.subset(&[]);
        assert!(train(net, &tr, &empty, &TrainConfig::default()).is_err());
    }
}
