use std::io::Write;
use std::net::TcpListener;
use std::time::Duration;

use tcn_core::cluster::{measure_rtt, worker_serve, ClusterMaster, EnsembleManifest, LatencyReport, WorkerClient};
use tcn_core::distill::predict_ensemble;
use tcn_core::net::{load_tensor, save_tensor};
use tcn_core::Tensor;

use crate::config::RunConfig;
use crate::error::{network, CliError, CliResult};
use crate::output::{ensure_dir, load_dataset, write_json, write_text};

pub fn worker(cfg: &RunConfig) -> CliResult<()> {
    let addr = &cfg.worker.listen;
    let listener = TcpListener::bind(addr).map_err(|e| CliError::runtime(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| CliError::runtime(e.to_string()))?;
    println!("listening on {local}");
    let _ = std::io::stdout().flush();
    worker_serve(listener).map_err(network)
}

fn input(cfg: &RunConfig) -> CliResult<Tensor> {
    if let Some(p) = &cfg.infer.input {
        return load_tensor(p).map_err(|e| CliError::usage(format!("cannot load input {}: {e}", p.display())));
    }
    let (_, test) = load_dataset(&cfg.data)?;
    Ok(test.head(cfg.infer.samples).x)
}

fn shutdown_all(addrs: &[String], timeout: Duration) -> CliResult<()> {
    for a in addrs {
        WorkerClient::connect(a, timeout).and_then(|c| c.shutdown()).map_err(network)?;
    }
    Ok(())
}

pub fn infer(cfg: &RunConfig) -> CliResult<()> {
    let ic = &cfg.infer;
    if ic.workers.is_empty() {
        return Err(CliError::usage("no workers given"));
    }
    let timeout = Duration::from_secs_f64(ic.timeout_s);
    ensure_dir(&cfg.out)?;
    cfg.echo("infer")?;
    let mut report = LatencyReport::default();

    if ic.ping > 0 {
        for a in &ic.workers {
            let s = measure_rtt(a, ic.ping, timeout).map_err(network)?;
            println!(
                "{a}: rtt mean {:.6}s median {:.6}s min {:.6}s over {} pings",
                s.mean_s, s.median_s, s.min_s, s.count
            );
            report.rtt.push(s);
        }
    }

    if let Some(path) = &ic.ensemble {
        let manifest = EnsembleManifest::load(path)
            .map_err(|e| CliError::usage(format!("cannot load ensemble {}: {e}", path.display())))?;
        if manifest.partition.len() != ic.workers.len() {
            return Err(CliError::usage(format!(
                "{} workers given for {} students",
                ic.workers.len(),
                manifest.partition.len()
            )));
        }
        let x = input(cfg)?;
        let mut master = ClusterMaster::connect(&ic.workers, &manifest, timeout).map_err(network)?;
        let (pred, lat) = master.infer(&x).map_err(network)?;
        println!(
            "inferred {} rows on {} workers: end-to-end {:.6}s, slowest worker {:.6}s, merge+head {:.6}s",
            x.rows(),
            ic.workers.len(),
            lat.end_to_end_s,
            lat.slowest_worker_s,
            lat.merge_head_s
        );
        report.requests.push(lat);
        save_tensor(&pred, cfg.out.join("predictions.tct"))?;
        let labels: String = pred.argmax_rows().iter().map(|l| format!("{l}\n")).collect();
        write_text(&cfg.out.join("predictions.txt"), &labels)?;
        if ic.verify_local {
            let ens = manifest.load_ensemble().map_err(|e| CliError::usage(e.to_string()))?;
            let local = predict_ensemble(&ens, &x)?;
            if local.to_le_bytes() != pred.to_le_bytes() {
                return Err(CliError::runtime("distributed predictions differ from local inference"));
            }
            println!("verify-local: {} rows bit-identical to local inference", x.rows());
        }
    } else if ic.ping == 0 {
        return Err(CliError::usage("nothing to do: give --ensemble or --ping"));
    }

    let doc = serde_json::json!({
        "workers": ic.workers,
        "requests": report.requests,
        "rtt": report.rtt,
        "mean_rtt_s": report.mean_rtt_s(),
    });
    write_json(&cfg.out.join("latency.json"), &doc)?;
    if ic.shutdown {
        shutdown_all(&ic.workers, timeout)?;
    }
    Ok(())
}
