//! Desk-scale teacher-class run on synthetic blobs.
//!
//! `cargo run --release -p tcn-core --example desk_run`

use std::time::Instant;

use tcn_core::data::{make_blobs, BlobSpec};
use tcn_core::distill::{
    distill_students, evaluate, extract_dense, fine_tune_head, make_partition,
    sized_student_layers, DistillMode, DistillPlan, StudentEnsemble, TeacherSplit,
};
use tcn_core::gan::GanConfig;
use tcn_core::net::{fit_classifier, mlp, Network, TrainConfig};

fn main() -> tcn_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (train, test) = make_blobs(&BlobSpec { seed, ..Default::default() })?;
    let mut teacher = Network::new(mlp(&[16, 64, 32, 4], true), seed)?;
    let cfg = TrainConfig { epochs: 20, seed, ..Default::default() };
    let t0 = Instant::now();
    fit_classifier(&mut teacher, &train.x, &train.y, &cfg)?;
    println!(
        "teacher test acc {:.4} ({:.2}s)",
        evaluate(&teacher, &test.x, &test.y)?,
        t0.elapsed().as_secs_f64()
    );
    let split = TeacherSplit::new(&teacher)?;
    let dense_train = extract_dense(&teacher, &train.x)?;
    let dense_test = extract_dense(&teacher, &test.x)?;

    for (mode_name, mode) in [("ff", DistillMode::Ff), ("gan", DistillMode::Gan(GanConfig { seed, ..Default::default() }))] {
        for n in [1usize, 2, 4, 8] {
            let partition = make_partition(32, n)?;
            let plan = DistillPlan {
                student_layers: sized_student_layers(16, &partition.widths(), 64),
                partition: partition.clone(),
                train: TrainConfig { epochs: 30, seed, ..Default::default() },
                mode: mode.clone(),
                jobs: 1,
                stop_at: None,
            };
            let t0 = Instant::now();
            let out = distill_students(&plan, &train.x, &dense_train, Some((&test.x, &dense_test)))?;
            let ens = StudentEnsemble::with_students(partition, out.students, split.head.clone())?;
            let acc = evaluate(&ens, &test.x, &test.y)?;
            let (ft, _) = fine_tune_head(&ens, &train.x, &train.y, &TrainConfig { epochs: 10, seed, ..Default::default() })?;
            let acc_ft = evaluate(&ft, &test.x, &test.y)?;
            let r = &out.report;
            println!(
                "{mode_name} S{n}: acc {acc:.4} ft {acc_ft:.4} mse {:?} total {:.4} init {:?} params {:?} {:.2}s",
                r.per_student_final_mse.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
                r.total_mse,
                r.per_student_epoch_curves.iter().map(|c| (c[0] * 1e4).round() / 1e4).collect::<Vec<_>>(),
                r.params_per_student,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
