use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{argmax_rows, softmax_cross_entropy, BnMode};
use crate::net::network::{Network, ParamKind};
use crate::rng::CounterRng;
use crate::tensor::Scalar;

const ORDER_TAG: u64 = 0x4f52_4452;
const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Fractions of `epochs` at which the learning rate is multiplied by
    /// `lr_drop_factor`.
    pub lr_drop_fractions: Vec<f64>,
    pub lr_drop_factor: f64,
    pub seed: u64,
    /// Pad-and-crop plus horizontal flips on training batches.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_drop_fractions: vec![0.5, 0.75, 0.875],
            lr_drop_factor: 0.1,
            seed: 0,
            augment: false,
        }
    }
}

impl TrainConfig {
    /// Learning rate for a zero-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self
            .lr_drop_fractions
            .iter()
            .filter(|&&f| epoch >= (f * self.epochs as f64).floor() as usize)
            .count();
        self.base_lr * self.lr_drop_factor.powi(drops as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.base_lr >= 0.0 && self.momentum >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::Config(
                "learning rate, momentum and weight decay must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Running accuracy of the train-mode passes over the epoch.
    pub train_acc: f64,
    pub eval_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Set when training stopped early because the loss became non-finite.
    pub aborted: Option<String>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,train_acc,eval_acc\n");
        for r in &self.records {
            let eval = r.eval_acc.map(|a| format!("{a:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{}\n",
                r.epoch, r.lr, r.train_loss, r.train_acc, eval
            ));
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Nesterov momentum in the form `v ← μv + g; w ← w − lr·(g + μv)`, with L2
/// decay added to the gradient of [`ParamKind::Weight`] tensors only.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &mut Network<T>, lr: f64) {
        let mu = T::of_f64(self.momentum);
        let wd = T::of_f64(self.weight_decay);
        let lr = T::of_f64(lr);
        let params: Vec<_> = net
            .tensors_mut()
            .into_iter()
            .filter(|p| p.kind.trainable())
            .collect();
        let grads: Vec<_> = grads
            .tensors_mut()
            .into_iter()
            .filter(|p| p.kind.trainable())
            .collect();
        if self.velocity.is_empty() {
            self.velocity = params
                .iter()
                .map(|p| vec![T::zero(); p.data.len()])
                .collect();
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            let decay = p.kind == ParamKind::Weight;
            for ((w, &gi), vi) in p.data.iter_mut().zip(g.data.iter()).zip(v.iter_mut()) {
                let gi = if decay { gi + wd * *w } else { gi };
                *vi = mu * *vi + gi;
                *w = *w - lr * (gi + mu * *vi);
            }
        }
    }
}

/// Per-epoch sample order, a pure function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    CounterRng::derive(seed, &[ORDER_TAG, epoch as u64]).shuffle(&mut order);
    order
}

/// Mini-batch training. Stops early, with `aborted` set, if the loss turns
/// non-finite.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &Dataset,
    eval: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut sgd = Sgd::new(cfg.momentum, cfg.weight_decay);
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let order = epoch_order(data.len(), cfg.seed, epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let augment = cfg.augment.then_some((cfg.seed, epoch as u64));
            let (x, labels) = data.batch::<T>(idx, augment);
            let (logits, trace) = net.forward(&x, BnMode::Train)?;
            let (loss, grad_logits) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                history.aborted = Some(format!("loss became {loss} in epoch {}", epoch + 1));
                return Ok(history);
            }
            loss_sum += loss * idx.len() as f64;
            correct += argmax_rows(&logits)
                .iter()
                .zip(&labels)
                .filter(|(a, b)| a == b)
                .count();
            let mut grads = net.backward(&trace, &grad_logits)?;
            net.update_running_stats(&trace);
            sgd.step(net, &mut grads, lr);
        }
        let eval_acc = eval.map(|d| evaluate(net, d)).transpose()?;
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
            eval_acc,
        });
    }
    Ok(history)
}

/// Top-1 accuracy with running batch-norm statistics.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let mut correct = 0;
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(EVAL_BATCH) {
        let (x, labels) = data.batch::<T>(idx, None);
        correct += net
            .predict(&x)?
            .iter()
            .zip(&labels)
            .filter(|(a, b)| a == b)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}
