//! Worker process: hosts one student and answers inference requests.

use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::ops::Range;

use log::debug;

use crate::cluster::wire::{reason, send, Assign, ErrorPayload, FrameReader, Message, TensorFrame};
use crate::error::{Error, Result};
use crate::net::{load_network, Network};

/// Banner sent in HELLO when a connection is accepted.
pub const WORKER_BANNER: &str = "tcn-worker/1";

#[derive(Debug, Default)]
pub struct WorkerState {
    pub assigned_student_index: Option<usize>,
    pub student: Option<Network>,
    pub range: Option<Range<usize>>,
}

/// What the connection loop should do after handling a message.
#[derive(Debug, PartialEq)]
pub enum Action {
    Reply(Message),
    Shutdown,
}

fn error(code: u16, message: impl Into<String>) -> Action {
    Action::Reply(Message::Error(ErrorPayload {
        code,
        message: message.into(),
    }))
}

impl WorkerState {
    /// Process one request. Requests are independent: the same INFER_REQ
    /// always yields the same INFER_RESP bytes.
    pub fn handle(&mut self, msg: Message) -> Action {
        match msg {
            Message::Ping(payload) => Action::Reply(Message::Pong(payload)),
            Message::Shutdown => Action::Shutdown,
            Message::Assign(a) => self.assign(a),
            Message::InferReq(req) => self.infer(req),
            other => error(
                reason::UNEXPECTED,
                format!("worker does not accept {:?}", other.kind()),
            ),
        }
    }

    fn assign(&mut self, a: Assign) -> Action {
        let net = match load_network(&a.path) {
            Ok(n) => n,
            Err(e) => return error(reason::MODEL_LOAD, format!("{}: {e}", a.path)),
        };
        let width = (a.range_end - a.range_start) as usize;
        if net.out_dim() != width {
            return error(
                reason::DIMENSION,
                format!("student outputs {}, assigned range width {width}", net.out_dim()),
            );
        }
        debug!("assigned student {} from {}", a.student_index, a.path);
        self.assigned_student_index = Some(a.student_index as usize);
        self.range = Some(a.range_start as usize..a.range_end as usize);
        self.student = Some(net);
        Action::Reply(Message::Assign(a))
    }

    fn infer(&self, req: TensorFrame) -> Action {
        let Some(student) = &self.student else {
            return error(reason::NOT_ASSIGNED, "INFER_REQ before ASSIGN");
        };
        match student.forward(&req.tensor) {
            Ok(chunk) => Action::Reply(Message::InferResp(TensorFrame {
                request_id: req.request_id,
                tensor: chunk,
            })),
            Err(e) => error(reason::DIMENSION, e.to_string()),
        }
    }
}

/// Serve one connection until it closes (`Ok(false)`) or a SHUTDOWN arrives
/// (`Ok(true)`). Requests are answered in arrival order.
pub fn serve_connection(state: &mut WorkerState, stream: TcpStream) -> Result<bool> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = FrameReader::new(stream);
    send(&mut writer, &Message::Hello(WORKER_BANNER.into()))?;
    loop {
        let frame = match reader.read_message() {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(false),
            Err(Error::Protocol { offset, reason: why }) => {
                // The stream can't be resynchronised after a framing error.
                let _ = send(
                    &mut writer,
                    &Message::Error(ErrorPayload {
                        code: reason::MALFORMED_TENSOR,
                        message: format!("bad frame at byte {offset}: {why}"),
                    }),
                );
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let action = match Message::from_wire(&frame) {
            Ok(msg) => state.handle(msg),
            Err(e) => error(reason::MALFORMED_TENSOR, e.to_string()),
        };
        match action {
            Action::Reply(m) => send(&mut writer, &m)?,
            Action::Shutdown => return Ok(true),
        }
    }
}

/// Accept connections one at a time until a SHUTDOWN frame is received.
pub fn worker_serve(listener: TcpListener) -> Result<()> {
    let mut state = WorkerState::default();
    for stream in listener.incoming() {
        let stream = stream?;
        match serve_connection(&mut state, stream) {
            Ok(true) => return Ok(()),
            Ok(false) => {}
            Err(e) => debug!("connection ended: {e}"),
        }
    }
    Ok(())
}

pub fn worker_serve_addr(addr: impl ToSocketAddrs) -> Result<()> {
    worker_serve(TcpListener::bind(addr)?)
}
