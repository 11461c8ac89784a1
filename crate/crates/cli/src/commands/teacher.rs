use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use tcn_core::distill::evaluate;
use tcn_core::net::{fit_classifier, mlp, save_network, Network};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, load_dataset, write_json};

pub const TEACHER_FILE: &str = "teacher.tcn";
pub const METRICS_FILE: &str = "teacher_metrics.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct TeacherMetrics {
    pub train_acc: f64,
    pub test_acc: f64,
    pub params: usize,
    pub flops: usize,
    pub wall_time: f64,
    pub layers: Vec<usize>,
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let (train, test) = load_dataset(&cfg.data)?;
    let t = &cfg.teacher;
    if t.dense_dim == 0 || t.hidden.contains(&0) {
        return Err(CliError::usage("teacher widths must be positive"));
    }
    let mut dims = vec![train.in_dim()];
    dims.extend(&t.hidden);
    dims.push(t.dense_dim);
    dims.push(train.classes);
    ensure_dir(&cfg.out)?;
    cfg.echo("train-teacher")?;

    info!("training teacher {dims:?} on {} samples", train.len());
    let mut teacher = Network::new(mlp(&dims, true), cfg.seed)?;
    let start = Instant::now();
    fit_classifier(&mut teacher, &train.x, &train.y, &t.train)?;
    let wall_time = start.elapsed().as_secs_f64();

    let metrics = TeacherMetrics {
        train_acc: evaluate(&teacher, &train.x, &train.y)?,
        test_acc: evaluate(&teacher, &test.x, &test.y)?,
        params: teacher.param_count(),
        flops: teacher.flops(),
        wall_time,
        layers: dims,
    };
    save_network(&teacher, cfg.out.join(TEACHER_FILE))?;
    write_json(&cfg.out.join(METRICS_FILE), &metrics)?;
    println!(
        "teacher: train_acc {:.4} test_acc {:.4} params {} ({:.2}s)",
        metrics.train_acc, metrics.test_acc, metrics.params, wall_time
    );
    Ok(())
}
