//! Distributed ensemble inference over TCP: one worker per student, a master
//! that merges their chunks and applies the head.

mod master;
mod wire;
mod worker;

pub use master::{
    master_infer, measure_rtt, ClusterMaster, EnsembleManifest, LatencyReport, RequestLatency,
    RttStats, WorkerClient, DEFAULT_TIMEOUT,
};
pub use wire::{
    decode, decode_frame, encode, reason, send, write_message, Assign, DecodeError, ErrorPayload,
    FrameReader, Message, MessageType, TensorFrame, WireMessage, HEADER_LEN, MAX_PAYLOAD,
};
pub use worker::{serve_connection, worker_serve, worker_serve_addr, Action, WorkerState, WORKER_BANNER};
