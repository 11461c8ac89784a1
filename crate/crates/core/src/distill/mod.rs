//! The teacher-class pipeline: dense features, sub-space partitions,
//! independent students, merging, head fine-tuning and evaluation.

mod ensemble;
mod partition;
mod pipeline;
mod report;
mod student;
mod teacher;

pub use ensemble::{
    accuracy, evaluate, fine_tune_head, labels_from_one_hot, predict_ensemble, Predict,
    StudentEnsemble,
};
pub use partition::{merge_subspaces, SubspacePartition};
pub use pipeline::{distill_students, DistillMode, DistillOutcome, DistillPlan, EvalSet};
pub use report::DistillReport;
pub use student::{
    chunk_mse, count_params_flops, sized_hidden_width, sized_student_layers, student_layers,
    student_seeds, train_student, train_student_until, upgrade_student, NetCost, UpgradeReport,
};
pub use teacher::{extract_dense, TeacherSplit};

/// Make an `n`-way even partition of a `dense_dim`-wide representation.
pub fn make_partition(dense_dim: usize, n: usize) -> crate::Result<SubspacePartition> {
    SubspacePartition::even(dense_dim, n)
}
