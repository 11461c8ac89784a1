//! Adversarial sub-space distillation.
//!
//! The student acts as a generator for its chunk of the teacher's dense
//! representation. A discriminator scores chunks as teacher ("real", label 1)
//! or student ("fake", label 0) with a binary cross-entropy; the student is
//! trained on the non-saturating adversarial term plus `lambda_mse` times the
//! reconstruction error.
//!
//! Discriminators end in a single dense unit producing a raw score; the
//! sigmoid lives inside [`bce_with_logits`].

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{
    bce_with_logits, epoch_batches, mlp, mse_loss, LayerSpec, Network, Optimizer, OptimizerKind,
};
use crate::rng::{derive_seed, Rng64};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub lambda_mse: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            lr_generator: 0.005,
            lr_discriminator: 0.002,
            lambda_mse: 1.0,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let lr_ok = |lr: f64| lr > 0.0 && lr <= 1.0;
        if !lr_ok(self.lr_generator) || !lr_ok(self.lr_discriminator) {
            return Err(Error::Config("GAN learning rates must lie in (0, 1]".into()));
        }
        if !(self.lambda_mse >= 0.0 && self.lambda_mse.is_finite()) {
            return Err(Error::Config(format!("lambda_mse {} must be >= 0", self.lambda_mse)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Default discriminator: `width -> width -> 1` with a ReLU in between.
pub fn default_discriminator(width: usize) -> Vec<LayerSpec> {
    mlp(&[width, width, 1], false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscLosses {
    pub real: f64,
    pub fake: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenLosses {
    pub bce: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanEpoch {
    pub epoch: usize,
    pub d_loss_real: f64,
    pub d_loss_fake: f64,
    pub g_bce: f64,
    pub g_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanReport {
    pub epochs: Vec<GanEpoch>,
    /// Full-data chunk MSE before training, then after every epoch.
    pub mse_curve: Vec<f64>,
    pub final_mse: f64,
}

impl GanReport {
    pub fn initial_mse(&self) -> f64 {
        self.mse_curve[0]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,d_loss_real,d_loss_fake,g_bce,g_mse\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.epoch, e.d_loss_real, e.d_loss_fake, e.g_bce, e.g_mse
            );
        }
        s
    }

    pub fn all_finite_nonnegative(&self) -> bool {
        self.epochs.iter().all(|e| {
            [e.d_loss_real, e.d_loss_fake, e.g_bce, e.g_mse]
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0)
        }) && self.mse_curve.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

fn check_disc(disc: &Network) -> Result<()> {
    if disc.out_dim() != 1 {
        return Err(Error::Structure(format!(
            "discriminator must output one score per sample, outputs {}",
            disc.out_dim()
        )));
    }
    Ok(())
}

/// One discriminator update on BCE with real = 1, fake = 0. `fake` is a
/// plain tensor, so nothing flows back to the student that produced it.
pub fn discriminator_step(
    disc: &mut Network,
    opt: &mut Optimizer,
    real: &Tensor,
    fake: &Tensor,
    lr: f64,
) -> Result<DiscLosses> {
    check_disc(disc)?;
    if real.shape() != fake.shape() {
        return Err(Error::dim(format!(
            "real chunk {:?} vs fake chunk {:?}",
            real.shape(),
            fake.shape()
        )));
    }
    let out = disc.forward_train(real)?;
    let (loss_real, g) = bce_with_logits(&out, 1.0)?;
    let mut grads = disc.backward(&g)?;

    let out = disc.forward_train(fake)?;
    let (loss_fake, g) = bce_with_logits(&out, 0.0)?;
    grads.accumulate(&disc.backward(&g)?);
    disc.clear_cache();

    opt.step(disc, &grads, lr)?;
    Ok(DiscLosses {
        real: loss_real,
        fake: loss_fake,
    })
}

/// One student update on `BCE(disc(student(x)), 1) + lambda · MSE(student(x), target)`.
/// The discriminator is only read.
pub fn generator_step(
    student: &mut Network,
    opt: &mut Optimizer,
    disc: &Network,
    x: &Tensor,
    target: &Tensor,
    lambda_mse: f64,
    lr: f64,
) -> Result<GenLosses> {
    check_disc(disc)?;
    if student.out_dim() != target.cols() || disc.in_dim() != target.cols() {
        return Err(Error::dim(format!(
            "student width {}, target width {}, discriminator input {}",
            student.out_dim(),
            target.cols(),
            disc.in_dim()
        )));
    }
    let fake = student.forward_train(x)?;

    let mut critic = disc.clone();
    let score = critic.forward_train(&fake)?;
    let (bce, g_score) = bce_with_logits(&score, 1.0)?;
    let mut grad = critic.backward(&g_score)?.input;

    let (mse, g_mse) = mse_loss(target, &fake)?;
    if lambda_mse != 0.0 {
        for (g, &m) in grad.data_mut().iter_mut().zip(g_mse.data()) {
            *g = (*g as f64 + lambda_mse * m as f64) as f32;
        }
    }
    let grads = student.backward(&grad)?;
    student.clear_cache();
    opt.step(student, &grads, lr)?;
    Ok(GenLosses { bce, mse })
}

/// Train `student` adversarially on `teacher_dense[:, range]`, alternating one
/// discriminator step and one generator step per mini-batch.
pub fn train_student_gan(
    student: &Network,
    disc_layers: Vec<LayerSpec>,
    teacher_dense: &Tensor,
    range: Range<usize>,
    x: &Tensor,
    cfg: &GanConfig,
) -> Result<(Network, GanReport)> {
    cfg.validate()?;
    let target = teacher_dense.slice_cols(range.start, range.end)?;
    if student.out_dim() != target.cols() {
        return Err(Error::dim(format!(
            "student outputs {}, sub-space width is {}",
            student.out_dim(),
            target.cols()
        )));
    }
    if x.rows() != target.rows() {
        return Err(Error::dim(format!("{} inputs, {} targets", x.rows(), target.rows())));
    }
    let mut student = student.clone();
    let mut disc = Network::new(disc_layers, derive_seed(cfg.seed, 0xD15C))?;
    check_disc(&disc)?;
    if disc.in_dim() != target.cols() {
        return Err(Error::dim(format!(
            "discriminator input {} vs sub-space width {}",
            disc.in_dim(),
            target.cols()
        )));
    }
    let mut g_opt = Optimizer::new(OptimizerKind::Adam, &student);
    let mut d_opt = Optimizer::new(OptimizerKind::Adam, &disc);
    let mut rng = Rng64::new(cfg.seed);

    let full_mse = |s: &Network| -> Result<f64> { Ok(mse_loss(&target, &s.forward(x)?)?.0) };
    let mut mse_curve = vec![full_mse(&student)?];
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut sums = [0f64; 4];
        let batches = epoch_batches(x.rows(), cfg.batch_size, &mut rng);
        for (b, idx) in batches.iter().enumerate() {
            let xb = x.select_rows(idx);
            let tb = target.select_rows(idx);
            let fake = student.forward(&xb)?;
            let d = discriminator_step(&mut disc, &mut d_opt, &tb, &fake, cfg.lr_discriminator);
            let d = d.map_err(|e| diverged(epoch, b, e))?;
            let g = generator_step(
                &mut student,
                &mut g_opt,
                &disc,
                &xb,
                &tb,
                cfg.lambda_mse,
                cfg.lr_generator,
            )
            .map_err(|e| diverged(epoch, b, e))?;
            let step = [d.real, d.fake, g.bce, g.mse];
            if step.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "GAN loss diverged at epoch {epoch}, batch {b}: {step:?}"
                )));
            }
            for (s, v) in sums.iter_mut().zip(step) {
                *s += v;
            }
        }
        let n = batches.len() as f64;
        epochs.push(GanEpoch {
            epoch,
            d_loss_real: sums[0] / n,
            d_loss_fake: sums[1] / n,
            g_bce: sums[2] / n,
            g_mse: sums[3] / n,
        });
        mse_curve.push(full_mse(&student)?);
    }
    let final_mse = *mse_curve.last().unwrap();
    Ok((
        student,
        GanReport {
            epochs,
            mse_curve,
            final_mse,
        },
    ))
}

fn diverged(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}
