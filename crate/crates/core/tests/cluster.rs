use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tcn_core::cluster::{
    decode_frame, encode, master_infer, measure_rtt, reason, send, worker_serve, ClusterMaster,
    EnsembleManifest, FrameReader, Message, TensorFrame, WorkerClient, DEFAULT_TIMEOUT,
};
use tcn_core::distill::{make_partition, predict_ensemble, student_layers, StudentEnsemble};
use tcn_core::net::{load_network, mlp, save_network, Network};
use tcn_core::rng::Rng64;
use tcn_core::{Error, Tensor};

fn spawn_worker() -> (String, JoinHandle<tcn_core::Result<()>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    (addr, thread::spawn(move || worker_serve(listener)))
}

fn random_input(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = Rng64::new(seed);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap()
}

/// Write a seeded n-student ensemble into `dir` and return its manifest.
fn write_ensemble(dir: &Path, n: usize, seed: u64) -> EnsembleManifest {
    let partition = make_partition(12, n).unwrap();
    let mut students = Vec::new();
    for k in 0..n {
        let s = Network::new(student_layers(6, 10, partition.width(k)), seed + k as u64).unwrap();
        let p = dir.join(format!("student_{k}.tcn"));
        save_network(&s, &p).unwrap();
        students.push(p);
    }
    let head = Network::new(mlp(&[12, 3], true), seed + 100).unwrap();
    let head_path = dir.join("head.tcn");
    save_network(&head, &head_path).unwrap();
    let m = EnsembleManifest {
        partition,
        students: students.iter().map(|p| p.file_name().unwrap().into()).collect(),
        head: "head.tcn".into(),
    };
    m.save(dir.join("ensemble.json")).unwrap();
    EnsembleManifest::load(dir.join("ensemble.json")).unwrap()
}

fn run_cluster(n: usize, seed: u64, rows: usize) -> (Tensor, Tensor) {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_ensemble(dir.path(), n, seed);
    let workers: Vec<_> = (0..n).map(|_| spawn_worker()).collect();
    let addrs: Vec<String> = workers.iter().map(|(a, _)| a.clone()).collect();
    let x = random_input(rows, 6, seed ^ 0xABCD);
    let mut master = ClusterMaster::connect(&addrs, &manifest, DEFAULT_TIMEOUT).unwrap();
    let (distributed, lat) = master.infer(&x).unwrap();
    assert!(lat.end_to_end_s >= lat.slowest_worker_s);
    assert_eq!(lat.per_worker_s.len(), n);
    master.shutdown().unwrap();
    for (_, h) in workers {
        h.join().unwrap().unwrap();
    }
    let local = predict_ensemble(&manifest.load_ensemble().unwrap(), &x).unwrap();
    (distributed, local)
}

#[test]
fn single_worker_matches_local_student() {
    let (d, l) = run_cluster(1, 3, 17);
    assert_eq!(d.to_le_bytes(), l.to_le_bytes());
}

#[test]
fn four_workers_bit_identical_to_local() {
    for seed in [0, 1, 2] {
        let (d, l) = run_cluster(4, seed, 256);
        assert_eq!(d.shape(), l.shape());
        assert_eq!(d.to_le_bytes(), l.to_le_bytes(), "seed {seed}");
        assert_eq!(d.argmax_rows(), l.argmax_rows());
    }
}

#[test]
fn worker_chunk_matches_local_forward_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_ensemble(dir.path(), 3, 9);
    let (addr, h) = spawn_worker();
    let mut c = WorkerClient::connect(&addr, DEFAULT_TIMEOUT).unwrap();
    c.assign(1, m.partition.ranges()[1], &m.students[1]).unwrap();
    let x = random_input(5, 6, 1);
    let remote = c.infer(&x).unwrap();
    let local = load_network(&m.students[1]).unwrap().forward(&x).unwrap();
    assert_eq!(remote.to_le_bytes(), local.to_le_bytes());
    c.shutdown().unwrap();
    h.join().unwrap().unwrap();
}

#[test]
fn out_of_order_waits_match_ids() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_ensemble(dir.path(), 2, 4);
    let (addr, h) = spawn_worker();
    let mut c = WorkerClient::connect(&addr, DEFAULT_TIMEOUT).unwrap();
    c.assign(0, m.partition.ranges()[0], &m.students[0]).unwrap();
    let student = load_network(&m.students[0]).unwrap();
    let inputs: Vec<Tensor> = (0..6).map(|i| random_input(1 + i, 6, i as u64)).collect();
    let ids: Vec<u64> = inputs.iter().map(|x| c.submit(x).unwrap()).collect();
    // Collect in reverse so every earlier response has to be buffered.
    for (id, x) in ids.iter().zip(&inputs).rev() {
        let got = c.wait(*id).unwrap();
        assert_eq!(got, student.forward(x).unwrap());
    }
    // Every id is answered exactly once.
    assert!(matches!(c.wait(ids[0]), Err(Error::Protocol { .. })));
    c.shutdown().unwrap();
    h.join().unwrap().unwrap();
}

#[test]
fn identical_requests_identical_responses() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_ensemble(dir.path(), 2, 8);
    let (addr, h) = spawn_worker();
    let mut s = TcpStream::connect(&addr).unwrap();
    let mut r = FrameReader::new(s.try_clone().unwrap());
    assert!(matches!(Message::from_wire(&r.read_message().unwrap().unwrap()).unwrap(), Message::Hello(_)));
    let a = tcn_core::cluster::Assign {
        student_index: 1,
        range_start: m.partition.ranges()[1].0 as u32,
        range_end: m.partition.ranges()[1].1 as u32,
        path: m.students[1].to_string_lossy().into_owned(),
    };
    send(&mut s, &Message::Assign(a)).unwrap();
    r.read_message().unwrap().unwrap();
    let req = Message::InferReq(TensorFrame { request_id: 5, tensor: random_input(3, 6, 2) });
    send(&mut s, &req).unwrap();
    send(&mut s, &req).unwrap();
    let first = encode(&r.read_message().unwrap().unwrap()).unwrap();
    let second = encode(&r.read_message().unwrap().unwrap()).unwrap();
    assert_eq!(first, second);
    send(&mut s, &Message::Shutdown).unwrap();
    h.join().unwrap().unwrap();
}

#[test]
fn infer_before_assign_is_error_frame() {
    let (addr, h) = spawn_worker();
    let mut c = WorkerClient::connect(&addr, DEFAULT_TIMEOUT).unwrap();
    match c.infer(&random_input(1, 4, 0)) {
        Err(Error::Inference { worker, reason: why }) => {
            assert_eq!(worker, addr);
            assert!(why.contains(&reason::NOT_ASSIGNED.to_string()), "{why}");
        }
        other => panic!("{other:?}"),
    }
    c.shutdown().unwrap();
    h.join().unwrap().unwrap();
}

#[test]
fn malformed_frame_gets_error_reply() {
    let (addr, h) = spawn_worker();
    let mut s = TcpStream::connect(&addr).unwrap();
    let mut r = FrameReader::new(s.try_clone().unwrap());
    r.read_message().unwrap().unwrap();
    // INFER_REQ claiming a 2x2 tensor but carrying one float.
    let mut body = vec![0x03];
    body.extend_from_slice(&1u64.to_be_bytes());
    body.extend_from_slice(&2u32.to_be_bytes());
    body.extend_from_slice(&2u32.to_be_bytes());
    body.extend_from_slice(&1.0f32.to_le_bytes());
    s.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
    s.write_all(&body).unwrap();
    match Message::from_wire(&r.read_message().unwrap().unwrap()).unwrap() {
        Message::Error(e) => assert_eq!(e.code, reason::MALFORMED_TENSOR),
        other => panic!("{other:?}"),
    }
    send(&mut s, &Message::Shutdown).unwrap();
    h.join().unwrap().unwrap();
}

#[test]
fn rtt_loopback() {
    let (addr, h) = spawn_worker();
    let start = Instant::now();
    let stats = measure_rtt(&addr, 100, DEFAULT_TIMEOUT).unwrap();
    assert!(start.elapsed() < Duration::from_secs(1), "{:?}", start.elapsed());
    assert_eq!(stats.count, 100);
    assert!(stats.min_s > 0.0 && stats.mean_s.is_finite());
    assert!(stats.mean_s >= stats.min_s && stats.median_s >= stats.min_s);
    WorkerClient::connect(&addr, DEFAULT_TIMEOUT).unwrap().shutdown().unwrap();
    h.join().unwrap().unwrap();
}

#[test]
fn unreachable_worker() {
    let addr = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().to_string()
    };
    assert!(matches!(
        WorkerClient::connect(&addr, Duration::from_millis(300)),
        Err(Error::Unreachable(_))
    ));
}

#[test]
fn silent_worker_times_out_naming_it() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let h = thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let mut buf = [0u8; 64];
        let _ = s.read(&mut buf);
    });
    match WorkerClient::connect(&addr, Duration::from_millis(200)) {
        Err(Error::Inference { worker, .. }) => assert_eq!(worker, addr),
        other => panic!("{:?}", other.err()),
    }
    h.join().unwrap();
}

#[test]
fn stray_response_id_is_protocol_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let h = thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        send(&mut s, &Message::Hello("fake".into())).unwrap();
        let mut r = FrameReader::new(s.try_clone().unwrap());
        r.read_message().unwrap();
        let t = Tensor::zeros(vec![1, 1]);
        send(&mut s, &Message::InferResp(TensorFrame { request_id: 999, tensor: t })).unwrap();
        thread::sleep(Duration::from_millis(100));
    });
    let mut c = WorkerClient::connect(&addr, DEFAULT_TIMEOUT).unwrap();
    let id = c.submit(&Tensor::zeros(vec![1, 1])).unwrap();
    assert!(matches!(c.wait(id), Err(Error::Protocol { .. })));
    h.join().unwrap();
}

#[test]
fn master_infer_reports_latency() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_ensemble(dir.path(), 2, 1);
    let workers: Vec<_> = (0..2).map(|_| spawn_worker()).collect();
    let addrs: Vec<String> = workers.iter().map(|(a, _)| a.clone()).collect();
    let x = random_input(8, 6, 0);
    let (pred, report) = master_infer(&addrs, &m, &x, DEFAULT_TIMEOUT).unwrap();
    assert_eq!(pred.shape(), &[8, 3]);
    let r = &report.requests[0];
    assert!(r.end_to_end_s >= r.slowest_worker_s && r.fan_out_s >= 0.0 && r.merge_head_s >= 0.0);
    for a in &addrs {
        WorkerClient::connect(a, DEFAULT_TIMEOUT).unwrap().shutdown().unwrap();
    }
    for (_, h) in workers {
        h.join().unwrap().unwrap();
    }
}

#[test]
fn manifest_rejects_missing_student() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_ensemble(dir.path(), 2, 0);
    std::fs::remove_file(&m.students[1]).unwrap();
    let err = m.load_ensemble().unwrap_err().to_string();
    assert!(err.contains("student 1"), "{err}");
}

#[test]
fn decoder_streams_partial_frames() {
    let bytes = encode(&Message::Ping(vec![1, 2, 3]).to_wire()).unwrap();
    for cut in 0..bytes.len() {
        assert!(decode_frame(&bytes[..cut]).is_err());
    }
    let (_, used) = decode_frame(&bytes).unwrap();
    assert_eq!(used, bytes.len());
}

#[test]
fn ensemble_from_manifest_matches_written_models() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_ensemble(dir.path(), 3, 5);
    let ens: StudentEnsemble = m.load_ensemble().unwrap();
    assert_eq!(ens.len(), 3);
    assert_eq!(ens.head().out_dim(), 3);
}
