use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Per-student outcome of a distillation run. Vectors are indexed by student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub mode: String,
    pub n: usize,
    /// Final chunk MSE on the training inputs (`L_k`).
    pub per_student_final_mse: Vec<f64>,
    /// Final chunk MSE on held-out inputs, when a test split was given.
    pub per_student_test_mse: Option<Vec<f64>>,
    /// Training MSE before training, then after each epoch.
    pub per_student_epoch_curves: Vec<Vec<f64>>,
    pub total_mse: f64,
    pub total_test_mse: Option<f64>,
    pub params_per_student: Vec<usize>,
    pub flops_per_student: Vec<usize>,
    /// Monotonic-clock seconds; excluded from anything hashed.
    pub wall_time_per_student: Vec<f64>,
}

impl DistillReport {
    pub fn epochs_run(&self, k: usize) -> usize {
        self.per_student_epoch_curves[k].len() - 1
    }

    /// Index of the student with the highest final training MSE.
    pub fn worst_student(&self) -> Option<usize> {
        self.per_student_final_mse
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
    }

    pub fn total_params(&self) -> usize {
        self.params_per_student.iter().sum()
    }

    /// Sum of per-student wall times (serial cost).
    pub fn total_wall_time(&self) -> f64 {
        self.wall_time_per_student.iter().sum()
    }

    /// One row per student: `k,params,flops,final_mse,wall_time_s,test_mse`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,params,flops,final_mse,wall_time_s,test_mse\n");
        for k in 0..self.n {
            let test = self
                .per_student_test_mse
                .as_ref()
                .map(|t| t[k].to_string())
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                k,
                self.params_per_student[k],
                self.flops_per_student[k],
                self.per_student_final_mse[k],
                self.wall_time_per_student[k],
                test
            );
        }
        s
    }
}
