use serde::{Deserialize, Serialize};
use tcn_core::cluster::EnsembleManifest;
use tcn_core::distill::{evaluate, fine_tune_head};
use tcn_core::net::save_network;

use crate::commands::distill::ENSEMBLE_FILE;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, load_dataset, write_json};

pub const METRICS_FILE: &str = "finetune_metrics.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct FinetuneMetrics {
    pub acc_no_ft: f64,
    pub acc_ft: f64,
    pub epochs: usize,
    pub ce_curve: Vec<f64>,
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let path = cfg.finetune.ensemble.clone().unwrap_or_else(|| cfg.out.join(ENSEMBLE_FILE));
    let manifest = EnsembleManifest::load(&path)
        .map_err(|e| CliError::usage(format!("cannot load ensemble {}: {e}", path.display())))?;
    let ens = manifest.load_ensemble().map_err(|e| CliError::usage(e.to_string()))?;
    let (train, test) = load_dataset(&cfg.data)?;
    ensure_dir(&cfg.out)?;
    cfg.echo("finetune-eval")?;

    let acc_no_ft = evaluate(&ens, &test.x, &test.y)?;
    let (tuned, ce_curve) = fine_tune_head(&ens, &train.x, &train.y, &cfg.finetune.train)?;
    let acc_ft = evaluate(&tuned, &test.x, &test.y)?;
    save_network(tuned.head(), cfg.out.join("head_ft.tcn"))?;
    let metrics = FinetuneMetrics {
        acc_no_ft,
        acc_ft,
        epochs: cfg.finetune.train.epochs,
        ce_curve,
    };
    write_json(&cfg.out.join(METRICS_FILE), &metrics)?;
    println!("accuracy without fine-tuning {acc_no_ft:.4}, with fine-tuning {acc_ft:.4}");
    Ok(())
}
