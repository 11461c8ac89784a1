//! Master side: fan a batch out to every worker, gather the sub-space chunks,
//! merge them in partition order and apply the head locally.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cluster::wire::{send, Assign, FrameReader, Message, TensorFrame};
use crate::distill::{StudentEnsemble, SubspacePartition};
use crate::error::{Error, Result};
use crate::net::{load_network, Network};
use crate::tensor::Tensor;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Where an ensemble's model files live. Paths inside the file are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub partition: SubspacePartition,
    pub students: Vec<PathBuf>,
    pub head: PathBuf,
}

impl EnsembleManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: EnsembleManifest = serde_json::from_slice(&fs::read(path)?)?;
        m.partition = SubspacePartition::from_ranges(m.partition.dense_dim(), m.partition.ranges().to_vec())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        m.students = m.students.iter().map(resolve).collect();
        m.head = resolve(&m.head);
        if m.students.len() != m.partition.len() {
            return Err(Error::Config(format!(
                "manifest lists {} students for {} sub-spaces",
                m.students.len(),
                m.partition.len()
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// Load every model file into a local ensemble.
    pub fn load_ensemble(&self) -> Result<StudentEnsemble> {
        let students = self
            .students
            .iter()
            .enumerate()
            .map(|(k, p)| {
                load_network(p).map_err(|e| Error::Config(format!("student {k} ({}): {e}", p.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        let head = load_network(&self.head)?;
        StudentEnsemble::with_students(self.partition.clone(), students, head)
    }
}

/// Timings for one distributed inference, in monotonic-clock seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestLatency {
    /// Until the last request frame was written.
    pub fan_out_s: f64,
    /// Longest send-to-response time over workers.
    pub slowest_worker_s: f64,
    pub per_worker_s: Vec<f64>,
    pub merge_head_s: f64,
    pub end_to_end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RttStats {
    pub count: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub min_s: f64,
}

impl RttStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        Some(Self {
            count: n,
            mean_s: s.iter().sum::<f64>() / n as f64,
            median_s: median,
            min_s: s[0],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LatencyReport {
    pub requests: Vec<RequestLatency>,
    /// Mean PING/PONG round trip per worker, when measured.
    pub rtt: Vec<RttStats>,
}

impl LatencyReport {
    pub fn mean_rtt_s(&self) -> Option<f64> {
        (!self.rtt.is_empty()).then(|| self.rtt.iter().map(|r| r.mean_s).sum::<f64>() / self.rtt.len() as f64)
    }

    pub fn mean_end_to_end_s(&self) -> Option<f64> {
        (!self.requests.is_empty())
            .then(|| self.requests.iter().map(|r| r.end_to_end_s).sum::<f64>() / self.requests.len() as f64)
    }
}

/// One multiplexed connection to a worker. Several requests may be in
/// flight; responses are matched by request id in whatever order they come.
pub struct WorkerClient {
    addr: String,
    writer: TcpStream,
    reader: FrameReader<TcpStream>,
    next_id: u64,
    pending: HashSet<u64>,
    ready: HashMap<u64, Tensor>,
    timeout: Duration,
}

impl WorkerClient {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self> {
        let sock = addr
            .to_socket_addrs()
            .map_err(|_| Error::Unreachable(addr.to_string()))?
            .next()
            .ok_or_else(|| Error::Unreachable(addr.to_string()))?;
        let stream =
            TcpStream::connect_timeout(&sock, timeout).map_err(|_| Error::Unreachable(addr.to_string()))?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        let writer = stream.try_clone()?;
        let mut client = Self {
            addr: addr.to_string(),
            writer,
            reader: FrameReader::new(stream),
            next_id: 1,
            pending: HashSet::new(),
            ready: HashMap::new(),
            timeout,
        };
        match client.recv()? {
            Message::Hello(_) => Ok(client),
            other => Err(client.fail(format!("expected HELLO, got {:?}", other.kind()))),
        }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Inference {
            worker: self.addr.clone(),
            reason: reason.into(),
        }
    }

    fn recv(&mut self) -> Result<Message> {
        match self.reader.read_message() {
            Ok(Some(frame)) => Message::from_wire(&frame),
            Ok(None) => Err(self.fail("connection closed")),
            Err(Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                Err(self.fail(format!("timed out after {:?}", self.timeout)))
            }
            Err(e) => Err(e),
        }
    }

    /// Load student `index` from `path` on the worker.
    pub fn assign(&mut self, index: usize, range: (usize, usize), path: &Path) -> Result<()> {
        let a = Assign {
            student_index: index as u32,
            range_start: range.0 as u32,
            range_end: range.1 as u32,
            path: path.to_string_lossy().into_owned(),
        };
        send(&mut self.writer, &Message::Assign(a.clone()))?;
        match self.recv()? {
            Message::Assign(ack) if ack == a => Ok(()),
            Message::Error(e) => Err(self.fail(format!("ASSIGN rejected ({}): {}", e.code, e.message))),
            other => Err(self.fail(format!("unexpected {:?} after ASSIGN", other.kind()))),
        }
    }

    /// Send an INFER_REQ and return its request id.
    pub fn submit(&mut self, x: &Tensor) -> Result<u64> {
        let id = self.next_id;
        self.next_id += 1;
        send(
            &mut self.writer,
            &Message::InferReq(TensorFrame {
                request_id: id,
                tensor: x.clone(),
            }),
        )?;
        self.pending.insert(id);
        Ok(id)
    }

    /// Block until the response for `id` arrives, buffering any other
    /// pending responses read on the way.
    pub fn wait(&mut self, id: u64) -> Result<Tensor> {
        if let Some(t) = self.ready.remove(&id) {
            return Ok(t);
        }
        if !self.pending.contains(&id) {
            return Err(Error::Protocol {
                offset: 0,
                reason: format!("request {id} was never issued"),
            });
        }
        loop {
            match self.recv()? {
                Message::InferResp(resp) => {
                    if !self.pending.remove(&resp.request_id) {
                        return Err(Error::Protocol {
                            offset: 0,
                            reason: format!(
                                "worker {} answered unknown or duplicate request {}",
                                self.addr, resp.request_id
                            ),
                        });
                    }
                    if resp.request_id == id {
                        return Ok(resp.tensor);
                    }
                    self.ready.insert(resp.request_id, resp.tensor);
                }
                Message::Error(e) => {
                    return Err(self.fail(format!("worker error {}: {}", e.code, e.message)))
                }
                other => return Err(self.fail(format!("unexpected {:?}", other.kind()))),
            }
        }
    }

    pub fn infer(&mut self, x: &Tensor) -> Result<Tensor> {
        let id = self.submit(x)?;
        self.wait(id)
    }

    /// One PING/PONG round trip.
    pub fn ping(&mut self) -> Result<Duration> {
        let payload = self.next_id.to_be_bytes().to_vec();
        let start = Instant::now();
        send(&mut self.writer, &Message::Ping(payload.clone()))?;
        match self.recv() {
            Ok(Message::Pong(p)) if p == payload => Ok(start.elapsed()),
            Ok(other) => Err(self.fail(format!("expected PONG, got {:?}", other.kind()))),
            Err(Error::Inference { .. }) => Err(Error::Unreachable(self.addr.clone())),
            Err(e) => Err(e),
        }
    }

    pub fn measure_rtt(&mut self, count: usize) -> Result<RttStats> {
        let samples = (0..count)
            .map(|_| self.ping().map(|d| d.as_secs_f64()))
            .collect::<Result<Vec<_>>>()?;
        RttStats::from_samples(&samples).ok_or_else(|| Error::InvalidInput("ping count must be positive".into()))
    }

    pub fn shutdown(mut self) -> Result<()> {
        send(&mut self.writer, &Message::Shutdown)
    }
}

/// PING a worker `count` times on a fresh connection.
pub fn measure_rtt(addr: &str, count: usize, timeout: Duration) -> Result<RttStats> {
    WorkerClient::connect(addr, timeout)?.measure_rtt(count)
}

/// Master holding one assigned connection per student plus the head.
pub struct ClusterMaster {
    workers: Vec<WorkerClient>,
    partition: SubspacePartition,
    head: Network,
}

impl ClusterMaster {
    /// Connect to `addrs[k]` for student `k` and ASSIGN each one its model.
    pub fn connect(addrs: &[String], manifest: &EnsembleManifest, timeout: Duration) -> Result<Self> {
        if addrs.len() != manifest.partition.len() {
            return Err(Error::Config(format!(
                "{} workers for {} students",
                addrs.len(),
                manifest.partition.len()
            )));
        }
        let head = load_network(&manifest.head)?;
        if head.in_dim() != manifest.partition.dense_dim() {
            return Err(Error::dim("head input does not match the partition"));
        }
        let mut workers = Vec::with_capacity(addrs.len());
        for (k, addr) in addrs.iter().enumerate() {
            let mut w = WorkerClient::connect(addr, timeout)?;
            w.assign(k, manifest.partition.ranges()[k], &manifest.students[k])?;
            workers.push(w);
        }
        Ok(Self {
            workers,
            partition: manifest.partition.clone(),
            head,
        })
    }

    pub fn workers_mut(&mut self) -> &mut [WorkerClient] {
        &mut self.workers
    }

    /// Distributed `head(merge(chunks))`. All workers are queried at once;
    /// chunks are merged by partition index, never by arrival order.
    pub fn infer(&mut self, x: &Tensor) -> Result<(Tensor, RequestLatency)> {
        let start = Instant::now();
        let results: Vec<Result<(Tensor, f64, f64)>> = thread::scope(|s| {
            let handles: Vec<_> = self
                .workers
                .iter_mut()
                .map(|w| {
                    s.spawn(move || -> Result<(Tensor, f64, f64)> {
                        let t0 = Instant::now();
                        let id = w.submit(x)?;
                        let sent = start.elapsed().as_secs_f64();
                        let chunk = w.wait(id)?;
                        Ok((chunk, sent, t0.elapsed().as_secs_f64()))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::State("worker thread panicked".into()))))
                .collect()
        });
        let mut chunks = Vec::with_capacity(results.len());
        let mut fan_out = 0f64;
        let mut per_worker = Vec::with_capacity(results.len());
        for r in results {
            let (chunk, sent, took) = r?;
            fan_out = fan_out.max(sent);
            per_worker.push(took);
            chunks.push(chunk);
        }
        let merge_start = Instant::now();
        let merged = self.partition.merge(&chunks)?;
        let out = self.head.forward(&merged)?;
        let merge_head_s = merge_start.elapsed().as_secs_f64();
        let latency = RequestLatency {
            fan_out_s: fan_out,
            slowest_worker_s: per_worker.iter().copied().fold(0.0, f64::max),
            per_worker_s: per_worker,
            merge_head_s,
            end_to_end_s: start.elapsed().as_secs_f64(),
        };
        Ok((out, latency))
    }

    pub fn measure_rtt(&mut self, count: usize) -> Result<Vec<RttStats>> {
        self.workers.iter_mut().map(|w| w.measure_rtt(count)).collect()
    }

    pub fn shutdown(self) -> Result<()> {
        for w in self.workers {
            w.shutdown()?;
        }
        Ok(())
    }
}

/// Connect, assign, run one distributed inference and report its timings.
pub fn master_infer(
    addrs: &[String],
    manifest: &EnsembleManifest,
    x: &Tensor,
    timeout: Duration,
) -> Result<(Tensor, LatencyReport)> {
    let mut master = ClusterMaster::connect(addrs, manifest, timeout)?;
    let (pred, lat) = master.infer(x)?;
    Ok((
        pred,
        LatencyReport {
            requests: vec![lat],
            rtt: Vec::new(),
        },
    ))
}
