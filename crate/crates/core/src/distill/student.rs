use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::distill::ensemble::StudentEnsemble;
use crate::error::{Error, Result};
use crate::net::{fit_regression, mlp, mse_loss, LayerSpec, Network, TrainConfig};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

/// Seeds for student `k` of a run: one for weight init, one for batch order.
/// Independent of every other student, so training order never matters.
pub fn student_seeds(base: u64, k: usize) -> (u64, u64) {
    let s = derive_seed(base, k as u64);
    (s, derive_seed(s, 1))
}

/// Train `student` to reproduce `teacher_dense[:, range]` from `x`.
/// Returns the trained copy and its MSE curve (before training, then per
/// epoch).
pub fn train_student(
    student: &Network,
    teacher_dense: &Tensor,
    range: Range<usize>,
    x: &Tensor,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>)> {
    train_student_until(student, teacher_dense, range, x, cfg, None)
}

/// As [`train_student`], stopping once the chunk MSE reaches `stop_at`.
pub fn train_student_until(
    student: &Network,
    teacher_dense: &Tensor,
    range: Range<usize>,
    x: &Tensor,
    cfg: &TrainConfig,
    stop_at: Option<f64>,
) -> Result<(Network, Vec<f64>)> {
    if student.out_dim() != range.len() {
        return Err(Error::dim(format!(
            "student outputs {}, sub-space {}..{} has width {}",
            student.out_dim(),
            range.start,
            range.end,
            range.len()
        )));
    }
    let target = teacher_dense.slice_cols(range.start, range.end)?;
    let mut net = student.clone();
    let curve = fit_regression(&mut net, x, &target, cfg, stop_at)?;
    Ok((net, curve))
}

/// Chunk MSE of one student on `teacher_dense[:, range]`.
pub fn chunk_mse(student: &Network, teacher_dense: &Tensor, range: Range<usize>, x: &Tensor) -> Result<f64> {
    let target = teacher_dense.slice_cols(range.start, range.end)?;
    Ok(mse_loss(&target, &student.forward(x)?)?.0)
}

/// Student layer stack: `in -> hidden -> width` with one ReLU.
pub fn student_layers(in_dim: usize, hidden: usize, width: usize) -> Vec<LayerSpec> {
    mlp(&[in_dim, hidden, width], false)
}

fn two_layer_params(in_dim: usize, hidden: usize, width: usize) -> usize {
    in_dim * hidden + hidden + hidden * width + width
}

/// Hidden width for a student of output `width` so that its parameter count
/// is about `1/n` of a single `in -> baseline_hidden -> dense_dim` student.
pub fn sized_hidden_width(
    in_dim: usize,
    dense_dim: usize,
    baseline_hidden: usize,
    n: usize,
    width: usize,
) -> usize {
    let budget = two_layer_params(in_dim, baseline_hidden, dense_dim) as f64 / n as f64;
    // params(h) = h * (in + 1 + width) + width
    let h = (budget - width as f64) / (in_dim + 1 + width) as f64;
    (h.round() as usize).max(1)
}

/// Default student stacks for every sub-space of an `n`-way split.
pub fn sized_student_layers(
    in_dim: usize,
    widths: &[usize],
    baseline_hidden: usize,
) -> Vec<Vec<LayerSpec>> {
    let dense_dim = widths.iter().sum();
    widths
        .iter()
        .map(|&w| {
            let h = sized_hidden_width(in_dim, dense_dim, baseline_hidden, widths.len(), w);
            student_layers(in_dim, h, w)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetCost {
    pub params: usize,
    /// Per-sample floating point operations.
    pub flops: usize,
}

/// Parameters `Σ dense (in·out + out)` and per-sample FLOPs
/// `Σ dense (2·in·out + out) + Σ activation out`.
pub fn count_params_flops(net: &Network) -> NetCost {
    NetCost {
        params: net.param_count(),
        flops: net.flops(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpgradeReport {
    pub student: usize,
    pub old_mse: f64,
    pub new_mse: f64,
    pub old_params: usize,
    pub new_params: usize,
    pub mse_curve: Vec<f64>,
}

/// Replace student `k` by a freshly initialised `layers` network trained with
/// the run's seeds for index `k`; every other student is kept as is.
pub fn upgrade_student(
    ens: &StudentEnsemble,
    k: usize,
    layers: Vec<LayerSpec>,
    x: &Tensor,
    teacher_dense: &Tensor,
    cfg: &TrainConfig,
) -> Result<(StudentEnsemble, UpgradeReport)> {
    let old = ens.student(k)?;
    let range = ens.partition().range(k);
    let out = layers.last().map(|l| l.out_dim).unwrap_or(0);
    let inp = layers.first().map(|l| l.in_dim).unwrap_or(0);
    if out != old.out_dim() || inp != old.in_dim() {
        return Err(Error::InvalidUpgrade(format!(
            "replacement maps {inp} -> {out}, student {k} maps {} -> {}",
            old.in_dim(),
            old.out_dim()
        )));
    }
    let (init_seed, shuffle_seed) = student_seeds(cfg.seed, k);
    let fresh = Network::new(layers, init_seed)?;
    let old_mse = chunk_mse(old, teacher_dense, range.clone(), x)?;
    let (trained, curve) = train_student(&fresh, teacher_dense, range, x, &cfg.with_seed(shuffle_seed))?;
    let report = UpgradeReport {
        student: k,
        old_mse,
        new_mse: *curve.last().unwrap(),
        old_params: old.param_count(),
        new_params: trained.param_count(),
        mse_curve: curve,
    };
    let mut next = ens.clone();
    next.set_student(k, trained)?;
    Ok((next, report))
}
