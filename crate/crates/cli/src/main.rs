//! `tcn`: train a teacher, distil it into a class of students, fine-tune the
//! head, serve students from worker processes and summarise runs.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ModeName, RunConfig};
use error::{CliResult, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(name = "tcn", version, about = "Teacher-class knowledge distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel student trainers.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the teacher classifier.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train one student per sub-space of the teacher's dense representation.
    Distill {
        #[command(flatten)]
        common: Common,
        /// Teacher model file (default: <out>/teacher.tcn).
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        students: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeName>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Compare accuracy with and without fine-tuning the output head.
    FinetuneEval {
        #[command(flatten)]
        common: Common,
        /// Ensemble manifest (default: <out>/ensemble.json).
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Host one student and answer inference requests until SHUTDOWN.
    Worker {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run distributed inference across workers, one per student.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Worker addresses in student order.
        #[arg(long, value_delimiter = ',')]
        workers: Vec<String>,
        #[arg(long)]
        ensemble: Option<PathBuf>,
        /// TCT1 input tensor (default: first test rows of the dataset).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Check the result against local inference.
        #[arg(long)]
        verify_local: bool,
        /// PING each worker this many times and report round-trip times.
        #[arg(long)]
        ping: Option<usize>,
        #[arg(long)]
        timeout: Option<f64>,
        /// Stop the workers afterwards.
        #[arg(long)]
        shutdown: bool,
    },
    /// Consolidate distillation runs into report.csv and summary.txt.
    Report {
        #[command(flatten)]
        common: Common,
        run_dir: PathBuf,
    },
}

fn base_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    cfg.propagate_seed();
    Ok(cfg)
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::TrainTeacher { common, epochs } => {
            let mut cfg = base_config(&common)?;
            if let Some(e) = epochs {
                cfg.teacher.train.epochs = e;
            }
            cfg.validate()?;
            commands::teacher::run(&cfg)
        }
        Command::Distill { common, teacher, students, mode, epochs } => {
            let mut cfg = base_config(&common)?;
            let d = &mut cfg.distill;
            d.teacher = teacher.or(d.teacher.take());
            if let Some(n) = students {
                d.students = n;
            }
            if let Some(m) = mode {
                d.mode = m;
            }
            if let Some(e) = epochs {
                d.train.epochs = e;
                d.gan.epochs = e;
            }
            cfg.validate()?;
            commands::distill::run(&cfg)
        }
        Command::FinetuneEval { common, ensemble, epochs } => {
            let mut cfg = base_config(&common)?;
            cfg.finetune.ensemble = ensemble.or(cfg.finetune.ensemble.take());
            if let Some(e) = epochs {
                cfg.finetune.train.epochs = e;
            }
            cfg.validate()?;
            commands::finetune::run(&cfg)
        }
        Command::Worker { common, listen } => {
            let mut cfg = base_config(&common)?;
            if let Some(l) = listen {
                cfg.worker.listen = l;
            }
            commands::cluster::worker(&cfg)
        }
        Command::Infer { common, workers, ensemble, input, verify_local, ping, timeout, shutdown } => {
            let mut cfg = base_config(&common)?;
            let ic = &mut cfg.infer;
            if !workers.is_empty() {
                ic.workers = workers;
            }
            ic.ensemble = ensemble.or(ic.ensemble.take());
            ic.input = input.or(ic.input.take());
            ic.verify_local |= verify_local;
            ic.shutdown |= shutdown;
            if let Some(p) = ping {
                ic.ping = p;
            }
            if let Some(t) = timeout {
                ic.timeout_s = t;
            }
            cfg.validate()?;
            commands::cluster::infer(&cfg)
        }
        Command::Report { common, run_dir } => {
            if common.config.is_some() {
                base_config(&common)?;
            }
            commands::report::run(&run_dir, common.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

