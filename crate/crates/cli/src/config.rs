//! Run configuration: a JSON file with every field optional, then flag
//! overrides. The effective config is written next to each run's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcn_core::data::BlobSpec;
use tcn_core::gan::GanConfig;
use tcn_core::net::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every seed below.
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub data: DataConfig,
    pub teacher: TeacherConfig,
    pub distill: DistillConfig,
    pub finetune: FinetuneConfig,
    pub infer: InferConfig,
    pub worker: WorkerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("run"),
            jobs: 1,
            data: DataConfig::default(),
            teacher: TeacherConfig::default(),
            distill: DistillConfig::default(),
            finetune: FinetuneConfig::default(),
            infer: InferConfig::default(),
            worker: WorkerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Blobs,
    /// MNIST-style IDX files from `idx_dir` or `TCN_DATA_DIR`.
    Idx,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub blobs: BlobSpec,
    pub idx_dir: Option<PathBuf>,
    /// Keep only the first rows of each split.
    pub max_train: Option<usize>,
    pub max_test: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub hidden: Vec<usize>,
    /// Width of the layer feeding the output layer.
    pub dense_dim: usize,
    pub train: TrainConfig,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            dense_dim: 32,
            train: TrainConfig {
                epochs: 20,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Ff,
    Gan,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub teacher: Option<PathBuf>,
    pub students: usize,
    pub mode: ModeName,
    /// Hidden width of the single-student baseline the sizing rule divides.
    pub baseline_hidden: usize,
    /// Explicit hidden width per student, replacing the sizing rule.
    pub hidden: Option<Vec<usize>>,
    pub train: TrainConfig,
    pub gan: GanConfig,
    /// Stop each plain student once its chunk MSE reaches this value.
    pub stop_at: Option<f64>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            teacher: None,
            students: 1,
            mode: ModeName::Ff,
            baseline_hidden: 64,
            hidden: None,
            train: TrainConfig {
                epochs: 30,
                ..Default::default()
            },
            gan: GanConfig::default(),
            stop_at: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub ensemble: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            ensemble: None,
            train: TrainConfig {
                epochs: 10,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub workers: Vec<String>,
    pub ensemble: Option<PathBuf>,
    /// TCT1 input tensor; defaults to the first test rows of the dataset.
    pub input: Option<PathBuf>,
    pub samples: usize,
    pub timeout_s: f64,
    pub ping: usize,
    pub verify_local: bool,
    /// Send SHUTDOWN to every worker when done.
    pub shutdown: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            workers: Vec::new(),
            ensemble: None,
            input: None,
            samples: 256,
            timeout_s: 10.0,
            ping: 0,
            verify_local: false,
            shutdown: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerConfig {
    pub listen: String,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7070".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Push the top-level seed into every seeded section.
    pub fn propagate_seed(&mut self) {
        let s = self.seed;
        self.data.blobs.seed = s;
        self.teacher.train.seed = s;
        self.distill.train.seed = s;
        self.distill.gan.seed = s;
        self.finetune.train.seed = s;
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.jobs == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        for cfg in [&self.teacher.train, &self.distill.train, &self.finetune.train] {
            cfg.validate()?;
        }
        self.distill.gan.validate()?;
        self.data.blobs.validate()?;
        if !(self.infer.timeout_s > 0.0 && self.infer.timeout_s.is_finite()) {
            return Err(CliError::usage("timeout must be a positive number of seconds"));
        }
        Ok(())
    }

    /// Write the effective config as `<command>.config.json` in the output directory.
    pub fn echo(&self, command: &str) -> CliResult<()> {
        crate::output::write_json(&self.out.join(format!("{command}.config.json")), self)
    }
}
