use std::path::PathBuf;

use log::info;
use serde::{Deserialize, Serialize};
use tcn_core::cluster::EnsembleManifest;
use tcn_core::distill::{
    distill_students, evaluate, extract_dense, make_partition, sized_student_layers,
    student_layers, DistillMode, DistillPlan, StudentEnsemble, TeacherSplit,
};
use tcn_core::net::{load_network, save_network, save_tensor};

use crate::commands::teacher::TEACHER_FILE;
use crate::config::{ModeName, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, load_dataset, write_json, write_text};

pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const REPORT_JSON: &str = "distill_report.json";
pub const REPORT_CSV: &str = "distill_report.csv";
pub const METRICS_FILE: &str = "distill_metrics.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct DistillMetrics {
    pub n: usize,
    pub mode: String,
    /// Test accuracy of the merged students under the untouched teacher head.
    pub acc: f64,
    pub teacher_test_acc: f64,
}

pub fn student_file(k: usize) -> String {
    format!("student_{k}.tcn")
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let d = &cfg.distill;
    let teacher_path = d.teacher.clone().unwrap_or_else(|| cfg.out.join(TEACHER_FILE));
    let teacher = load_network(&teacher_path)
        .map_err(|e| CliError::usage(format!("cannot load teacher {}: {e}", teacher_path.display())))?;
    let (train, test) = load_dataset(&cfg.data)?;
    if teacher.in_dim() != train.in_dim() {
        return Err(CliError::usage(format!(
            "teacher expects {} inputs, dataset has {}",
            teacher.in_dim(),
            train.in_dim()
        )));
    }
    let split = TeacherSplit::new(&teacher)?;
    let partition = make_partition(split.dense_dim(), d.students)?;
    let student_layers = match &d.hidden {
        Some(h) if h.len() != d.students => {
            return Err(CliError::usage(format!(
                "{} hidden widths given for {} students",
                h.len(),
                d.students
            )))
        }
        Some(h) => partition
            .widths()
            .iter()
            .zip(h)
            .map(|(&w, &hid)| student_layers(train.in_dim(), hid, w))
            .collect(),
        None => sized_student_layers(train.in_dim(), &partition.widths(), d.baseline_hidden),
    };
    ensure_dir(&cfg.out)?;
    cfg.echo("distill")?;

    let dense_train = extract_dense(&teacher, &train.x)?;
    let dense_test = extract_dense(&teacher, &test.x)?;
    save_tensor(&dense_train, cfg.out.join("features_train.tct"))?;
    save_tensor(&dense_test, cfg.out.join("features_test.tct"))?;

    let mode = match d.mode {
        ModeName::Ff => DistillMode::Ff,
        ModeName::Gan => DistillMode::Gan(d.gan.clone()),
    };
    let plan = DistillPlan {
        partition: partition.clone(),
        student_layers,
        train: d.train.clone(),
        mode,
        jobs: cfg.jobs,
        stop_at: d.stop_at,
    };
    info!("distilling {} students ({}) with {} job(s)", d.students, plan.mode.name(), cfg.jobs);
    let out = distill_students(&plan, &train.x, &dense_train, Some((&test.x, &dense_test)))?;

    let mut paths = Vec::with_capacity(d.students);
    for (k, s) in out.students.iter().enumerate() {
        save_network(s, cfg.out.join(student_file(k)))?;
        paths.push(PathBuf::from(student_file(k)));
    }
    save_network(&split.head, cfg.out.join("head.tcn"))?;
    EnsembleManifest {
        partition: partition.clone(),
        students: paths,
        head: "head.tcn".into(),
    }
    .save(cfg.out.join(ENSEMBLE_FILE))?;
    for (k, g) in out.gan_reports.iter().enumerate() {
        write_text(&cfg.out.join(format!("gan_student_{k}.csv")), &g.to_csv())?;
    }
    write_json(&cfg.out.join(REPORT_JSON), &out.report)?;
    write_text(&cfg.out.join(REPORT_CSV), &out.report.to_csv())?;

    let ens = StudentEnsemble::with_students(partition, out.students, split.head)?;
    let metrics = DistillMetrics {
        n: d.students,
        mode: plan.mode.name().into(),
        acc: evaluate(&ens, &test.x, &test.y)?,
        teacher_test_acc: evaluate(&teacher, &test.x, &test.y)?,
    };
    write_json(&cfg.out.join(METRICS_FILE), &metrics)?;
    println!(
        "distilled S{} ({}): acc {:.4} (teacher {:.4}), total MSE {:.6}, params {:?}",
        metrics.n,
        metrics.mode,
        metrics.acc,
        metrics.teacher_test_acc,
        out.report.total_mse,
        out.report.params_per_student
    );
    Ok(())
}
