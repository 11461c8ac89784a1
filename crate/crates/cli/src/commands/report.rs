use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tcn_core::distill::DistillReport;

use crate::commands::distill::{DistillMetrics, METRICS_FILE as DISTILL_METRICS, REPORT_JSON};
use crate::commands::finetune::{FinetuneMetrics, METRICS_FILE as FINETUNE_METRICS};
use crate::error::{CliError, CliResult};
use crate::output::{read_json, write_text};

pub const CSV_HEADER: &str = "run,n,mode,params_total,params_per_student,flops,acc,total_mse,train_time";

struct Row {
    run: String,
    report: DistillReport,
    acc: Option<f64>,
}

/// `dir` itself and its immediate subdirectories holding a distillation report.
fn run_dirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::usage(format!("cannot read run directory {}: {e}", dir.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(REPORT_JSON).is_file())
        .collect();
    if dir.join(REPORT_JSON).is_file() {
        dirs.push(dir.to_path_buf());
    }
    dirs.sort();
    Ok(dirs)
}

fn load_row(dir: &Path) -> CliResult<Row> {
    let report: DistillReport = read_json(&dir.join(REPORT_JSON))?;
    let ft = dir.join(FINETUNE_METRICS);
    let acc = if ft.is_file() {
        Some(read_json::<FinetuneMetrics>(&ft)?.acc_ft)
    } else {
        let dm = dir.join(DISTILL_METRICS);
        dm.is_file().then(|| read_json::<DistillMetrics>(&dm)).transpose()?.map(|m| m.acc)
    };
    let run = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| ".".into());
    Ok(Row { run, report, acc })
}

pub fn run(dir: &Path, out: Option<&Path>) -> CliResult<()> {
    let mut rows = run_dirs(dir)?.iter().map(|d| load_row(d)).collect::<CliResult<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(CliError::usage(format!("no distillation runs under {}", dir.display())));
    }
    rows.sort_by(|a, b| (&a.report.mode, a.report.n, &a.run).cmp(&(&b.report.mode, b.report.n, &b.run)));

    let mut csv = format!("{CSV_HEADER}\n");
    let mut summary = String::new();
    for r in &rows {
        let rep = &r.report;
        let total = rep.total_params();
        let acc = r.acc.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.run,
            rep.n,
            rep.mode,
            total,
            (total as f64 / rep.n as f64).round(),
            rep.flops_per_student.iter().sum::<usize>(),
            acc,
            rep.total_mse,
            rep.total_wall_time()
        );
        let _ = write!(summary, "{} (S{}, {}): total MSE {:.6}", r.run, rep.n, rep.mode, rep.total_mse);
        if let Some(a) = r.acc {
            let _ = write!(summary, ", acc {a:.4}");
        }
        if let Some(k) = rep.worst_student() {
            let _ = write!(
                summary,
                "; worst student {k} (MSE {:.6}) is the upgrade candidate",
                rep.per_student_final_mse[k]
            );
        }
        summary.push('\n');
    }
    let out = out.unwrap_or(dir);
    crate::output::ensure_dir(out)?;
    write_text(&out.join("report.csv"), &csv)?;
    write_text(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
