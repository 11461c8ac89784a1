//! Mini-batch training loops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::loss::{cross_entropy_loss, mse_loss, one_hot};
use crate::net::network::Network;
use crate::net::optim::{Optimizer, OptimizerKind};
use crate::rng::Rng64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.01,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Shuffled mini-batch index lists for one epoch.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Train `net` to reproduce `target` from `x` under the mean squared error.
///
/// Returns the full-dataset loss before training followed by the loss after
/// every epoch. Stops early once the loss is at or below `stop_at`.
pub fn fit_regression(
    net: &mut Network,
    x: &Tensor,
    target: &Tensor,
    cfg: &TrainConfig,
    stop_at: Option<f64>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.rows() != target.rows() {
        return Err(Error::dim(format!(
            "{} inputs but {} targets",
            x.rows(),
            target.rows()
        )));
    }
    if target.cols() != net.out_dim() {
        return Err(Error::dim(format!(
            "network produces width {}, target has {}",
            net.out_dim(),
            target.cols()
        )));
    }
    let full_loss = |net: &Network| -> Result<f64> { Ok(mse_loss(target, &net.forward(x)?)?.0) };

    let mut curve = vec![full_loss(net)?];
    let mut opt = Optimizer::new(cfg.optimizer, net);
    let mut rng = Rng64::new(cfg.seed);
    for _ in 0..cfg.epochs {
        if stop_at.is_some_and(|s| *curve.last().unwrap() <= s) {
            break;
        }
        for batch in epoch_batches(x.rows(), cfg.batch_size, &mut rng) {
            let xb = x.select_rows(&batch);
            let tb = target.select_rows(&batch);
            let pred = net.forward_train(&xb)?;
            let (_, grad) = mse_loss(&tb, &pred)?;
            let grads = net.backward(&grad)?;
            opt.step(net, &grads, cfg.learning_rate)?;
        }
        curve.push(full_loss(net)?);
    }
    net.clear_cache();
    Ok(curve)
}

/// Train a softmax classifier on class indices with the cross-entropy.
/// Returns the full-dataset loss before training and after every epoch.
pub fn fit_classifier(
    net: &mut Network,
    x: &Tensor,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !net.ends_with_softmax() {
        return Err(Error::Structure("classifier must end with softmax".into()));
    }
    if x.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} inputs but {} labels",
            x.rows(),
            labels.len()
        )));
    }
    let y = one_hot(labels, net.out_dim())?;
    let full_loss =
        |net: &Network| -> Result<f64> { Ok(cross_entropy_loss(&y, &net.forward(x)?)?.0) };

    let mut curve = vec![full_loss(net)?];
    let mut opt = Optimizer::new(cfg.optimizer, net);
    let mut rng = Rng64::new(cfg.seed);
    for _ in 0..cfg.epochs {
        for batch in epoch_batches(x.rows(), cfg.batch_size, &mut rng) {
            let xb = x.select_rows(&batch);
            let yb = y.select_rows(&batch);
            let probs = net.forward_train(&xb)?;
            let (_, grad_logits) = cross_entropy_loss(&yb, &probs)?;
            let grads = net.backward_from_logits(&grad_logits)?;
            opt.step(net, &grads, cfg.learning_rate)?;
        }
        curve.push(full_loss(net)?);
    }
    net.clear_cache();
    Ok(curve)
}
