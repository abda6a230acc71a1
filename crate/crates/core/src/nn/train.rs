use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{DataSource, Dataset};
use crate::error::{LnsError, Result};
use crate::format::LnsFormat;
use crate::nn::arith::Arith;
use crate::nn::network::Network;
use crate::nn::optim::{OptimizerState, SgdConfig};
use crate::nn::spec::NetworkSpec;
use crate::stats;

/// Smallest probability fed to the diagnostic log-loss.
const LOSS_FLOOR: f64 = 1e-12;
/// Samples per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

fn d_test_fraction() -> f64 {
    0.2
}

/// A training run: architecture, number format, data and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub network: NetworkSpec,
    pub format: LnsFormat,
    pub data: DataSource,
    #[serde(default = "d_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub shuffle_seed: u64,
    pub optimizer: SgdConfig,
    /// Correction table file; can also be given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.format.validate()?;
        self.network.shapes()?;
        self.optimizer.validate()?;
        if self.epochs == 0 {
            return Err(LnsError::Config("epochs must be at least 1".into()));
        }
        if !self.batch_size.is_power_of_two() {
            return Err(LnsError::Config(format!(
                "batch size {} is not a power of two",
                self.batch_size
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(LnsError::Config("test_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| LnsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Train and test sets. Relative CSV paths resolve against `base`.
    pub fn datasets(&self, base: Option<&Path>) -> Result<(Dataset, Dataset)> {
        let data = self.data.load(base)?;
        let want: usize = self.network.input_shape.iter().product();
        if data.dim() != want {
            return Err(LnsError::Dataset(format!(
                "samples have {} features, network expects {want}",
                data.dim()
            )));
        }
        if data.classes() > self.network.classes() {
            return Err(LnsError::Dataset(format!(
                "labels reach {}, network has {} classes",
                data.classes() - 1,
                self.network.classes()
            )));
        }
        data.split(self.test_fraction, self.split_seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub learning_rate: f64,
    pub saturations: u64,
    /// SHA-256 of the epoch's sample order.
    pub index_trace: String,
}

/// Sample order for an epoch, from `seed` and the epoch number.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

pub fn trace_hash(order: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in order {
        h.update((i as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Full batches of `batch` samples, then the remainder split into
/// descending powers of two so every batch has a power-of-two size.
pub fn batch_plan(order: &[usize], batch: usize) -> Vec<&[usize]> {
    let full = order.len() / batch * batch;
    let mut out: Vec<&[usize]> = order[..full].chunks(batch).collect();
    let mut rest = &order[full..];
    while !rest.is_empty() {
        let k = 1usize << (usize::BITS - 1 - rest.len().leading_zeros());
        let (head, tail) = rest.split_at(k);
        out.push(head);
        rest = tail;
    }
    out
}

/// Top-1 accuracy with batch statistics frozen. Ties go to the lowest class.
pub fn evaluate<A: Arith>(net: &mut Network<A>, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(LnsError::EmptyDataset);
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, y) = data.gather(chunk);
        let input = net.input(&x, chunk.len())?;
        let probs = net.forward(input, false)?;
        let c = probs.row_len();
        for (row, &label) in probs.data().chunks(c).zip(&y) {
            if net.arith().argmax(row) == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Per-epoch training totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
    pub learning_rate: f64,
}

/// One pass over `data` in `order`, one SGD step per batch. `step` is the
/// global step counter driving the schedule.
pub fn train_epoch<A: Arith>(
    net: &mut Network<A>,
    opt: &mut OptimizerState<A::Scalar>,
    data: &Dataset,
    order: &[usize],
    batch: usize,
    step: &mut u64,
) -> Result<EpochStats> {
    if data.is_empty() || order.is_empty() {
        return Err(LnsError::EmptyDataset);
    }
    let (mut loss, mut correct, mut lr) = (0.0, 0usize, 0.0);
    for b in batch_plan(order, batch) {
        let (x, y) = data.gather(b);
        let input = net.input(&x, b.len())?;
        let probs = net.forward(input, true)?;
        let c = probs.row_len();
        for (row, &label) in probs.data().chunks(c).zip(&y) {
            let p = net.arith().to_f64(row[label]).max(LOSS_FLOOR);
            loss -= p.ln();
            if net.arith().argmax(row) == label {
                correct += 1;
            }
        }
        net.backward(&y)?;
        lr = net.sgd_step(opt, *step)?;
        *step += 1;
    }
    Ok(EpochStats {
        loss: loss / order.len() as f64,
        accuracy: correct as f64 / order.len() as f64,
        learning_rate: lr,
    })
}

/// Runs all epochs, calling `on_epoch` after each.
pub fn train<A: Arith>(
    net: &mut Network<A>,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(LnsError::EmptyDataset);
    }
    let order0: Vec<usize> = (0..train_set.len()).collect();
    let steps = batch_plan(&order0, cfg.batch_size).len();
    let mut opt = net.optimizer(cfg.optimizer, steps)?;
    let mut step = 0u64;
    let mut out = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let before = stats::snapshot().saturations;
        let order = epoch_order(train_set.len(), cfg.shuffle_seed, epoch);
        let s = train_epoch(net, &mut opt, train_set, &order, cfg.batch_size, &mut step)?;
        let test_accuracy = evaluate(net, test_set)?;
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: s.loss,
            train_accuracy: s.accuracy,
            test_accuracy,
            learning_rate: s.learning_rate,
            saturations: stats::snapshot().saturations - before,
            index_trace: trace_hash(&order),
        };
        on_epoch(&m);
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_plan_uses_powers_of_two() {
        let order: Vec<usize> = (0..300).collect();
        let sizes: Vec<usize> = batch_plan(&order, 128).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![128, 128, 32, 8, 4]);
        let flat: Vec<usize> = batch_plan(&order, 128).concat();
        assert_eq!(flat, order);
    }

    #[test]
    fn epoch_orders_differ_but_repeat() {
        let a = epoch_order(50, 3, 0);
        assert_eq!(a, epoch_order(50, 3, 0));
        assert_ne!(a, epoch_order(50, 3, 1));
        assert_eq!(trace_hash(&a), trace_hash(&epoch_order(50, 3, 0)));
    }
}
