//! Training every student of a partition, optionally in parallel.

use std::time::Instant;

use rayon::prelude::*;

use crate::distill::partition::SubspacePartition;
use crate::distill::report::DistillReport;
use crate::distill::student::{chunk_mse, student_seeds, train_student_until};
use crate::error::{Error, Result};
use crate::gan::{default_discriminator, train_student_gan, GanConfig, GanReport};
use crate::net::{LayerSpec, Network, TrainConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum DistillMode {
    /// Plain reconstruction loss.
    Ff,
    /// Adversarial training plus reconstruction loss.
    Gan(GanConfig),
}

impl DistillMode {
    pub fn name(&self) -> &'static str {
        match self {
            DistillMode::Ff => "ff",
            DistillMode::Gan(_) => "gan",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistillPlan {
    pub partition: SubspacePartition,
    /// Layer stack per student; student `k` must output `partition.width(k)`.
    pub student_layers: Vec<Vec<LayerSpec>>,
    pub train: TrainConfig,
    pub mode: DistillMode,
    /// Worker threads; 1 trains students one after another.
    pub jobs: usize,
    /// Stop a plain student once its chunk MSE reaches this value.
    pub stop_at: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub students: Vec<Network>,
    pub report: DistillReport,
    /// One per student in GAN mode, empty otherwise.
    pub gan_reports: Vec<GanReport>,
}

struct StudentResult {
    net: Network,
    curve: Vec<f64>,
    wall: f64,
    gan: Option<GanReport>,
}

/// Features used to report held-out chunk MSE: `(x_test, dense_test)`.
pub type EvalSet<'a> = (&'a Tensor, &'a Tensor);

pub fn distill_students(
    plan: &DistillPlan,
    x: &Tensor,
    teacher_dense: &Tensor,
    eval: Option<EvalSet<'_>>,
) -> Result<DistillOutcome> {
    let n = plan.partition.len();
    if plan.student_layers.len() != n {
        return Err(Error::dim(format!(
            "{} student specs for {} sub-spaces",
            plan.student_layers.len(),
            n
        )));
    }
    if teacher_dense.cols() != plan.partition.dense_dim() {
        return Err(Error::dim(format!(
            "teacher features have width {}, partition covers {}",
            teacher_dense.cols(),
            plan.partition.dense_dim()
        )));
    }
    plan.train.validate()?;

    let train_one = |k: usize| -> Result<StudentResult> {
        let (init_seed, shuffle_seed) = student_seeds(plan.train.seed, k);
        let range = plan.partition.range(k);
        let student = Network::new(plan.student_layers[k].clone(), init_seed)?;
        let start = Instant::now();
        let (net, curve, gan) = match &plan.mode {
            DistillMode::Ff => {
                let cfg = plan.train.with_seed(shuffle_seed);
                let (net, curve) = train_student_until(&student, teacher_dense, range, x, &cfg, plan.stop_at)?;
                (net, curve, None)
            }
            DistillMode::Gan(gan_cfg) => {
                let cfg = GanConfig {
                    seed: shuffle_seed,
                    ..gan_cfg.clone()
                };
                let disc = default_discriminator(range.len());
                let (net, report) = train_student_gan(&student, disc, teacher_dense, range, x, &cfg)?;
                (net, report.mse_curve.clone(), Some(report))
            }
        };
        Ok(StudentResult {
            net,
            curve,
            wall: start.elapsed().as_secs_f64(),
            gan,
        })
    };

    let results: Vec<StudentResult> = if plan.jobs <= 1 {
        (0..n).map(train_one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(train_one).collect::<Result<_>>())?
    };

    let test_mse = eval
        .map(|(xt, dt)| {
            results
                .iter()
                .enumerate()
                .map(|(k, r)| chunk_mse(&r.net, dt, plan.partition.range(k), xt))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;

    let final_mse: Vec<f64> = results.iter().map(|r| *r.curve.last().unwrap()).collect();
    let report = DistillReport {
        mode: plan.mode.name().to_string(),
        n,
        total_mse: final_mse.iter().sum(),
        total_test_mse: test_mse.as_ref().map(|t| t.iter().sum()),
        per_student_final_mse: final_mse,
        per_student_test_mse: test_mse,
        per_student_epoch_curves: results.iter().map(|r| r.curve.clone()).collect(),
        params_per_student: results.iter().map(|r| r.net.param_count()).collect(),
        flops_per_student: results.iter().map(|r| r.net.flops()).collect(),
        wall_time_per_student: results.iter().map(|r| r.wall).collect(),
    };
    let mut gan_reports = Vec::new();
    let mut students = Vec::with_capacity(n);
    for r in results {
        gan_reports.extend(r.gan);
        students.push(r.net);
    }
    Ok(DistillOutcome {
        students,
        report,
        gan_reports,
    })
}
