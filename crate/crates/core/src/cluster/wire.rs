//! Length-prefixed framing for master/worker traffic.
//!
//! ```text
//! u32 BE length (type byte + payload)  | u8 type | payload
//! ```
//!
//! Payload integers are big-endian; tensor elements are little-endian `f32`,
//! the same byte order as TCN1 model files.
//!
//! | type | name       | payload                                                      |
//! |------|------------|--------------------------------------------------------------|
//! | 0x01 | HELLO      | UTF-8 banner                                                 |
//! | 0x02 | ASSIGN     | u32 student, u32 range start, u32 range end, u16 len, path   |
//! | 0x03 | INFER_REQ  | u64 request id, u32 batch, u32 dim, batch·dim f32            |
//! | 0x04 | INFER_RESP | as INFER_REQ, dim is the chunk width                         |
//! | 0x05 | PING       | opaque bytes                                                 |
//! | 0x06 | PONG       | the PING bytes echoed                                        |
//! | 0x07 | SHUTDOWN   | empty                                                        |
//! | 0x7F | ERROR      | u16 reason code, UTF-8 message                               |

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAX_PAYLOAD: usize = 64 * 1024 * 1024;
pub const HEADER_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    Hello = 0x01,
    Assign = 0x02,
    InferReq = 0x03,
    InferResp = 0x04,
    Ping = 0x05,
    Pong = 0x06,
    Shutdown = 0x07,
    Error = 0x7F,
}

impl MessageType {
    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0x01 => Self::Hello,
            0x02 => Self::Assign,
            0x03 => Self::InferReq,
            0x04 => Self::InferResp,
            0x05 => Self::Ping,
            0x06 => Self::Pong,
            0x07 => Self::Shutdown,
            0x7F => Self::Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: MessageType,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(kind: MessageType, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }

    pub fn empty(kind: MessageType) -> Self {
        Self::new(kind, Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    /// The buffer holds a frame prefix; at least `needed` bytes in total are
    /// required before decoding can proceed.
    NeedMoreBytes { needed: usize },
    Protocol { offset: usize, reason: String },
}

impl From<DecodeError> for Error {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::NeedMoreBytes { needed } => Error::Protocol {
                offset: needed,
                reason: "frame truncated".into(),
            },
            DecodeError::Protocol { offset, reason } => Error::Protocol { offset, reason },
        }
    }
}

fn protocol(offset: usize, reason: impl Into<String>) -> DecodeError {
    DecodeError::Protocol {
        offset,
        reason: reason.into(),
    }
}

pub fn encode(msg: &WireMessage) -> Result<Vec<u8>> {
    if msg.payload.len() > MAX_PAYLOAD {
        return Err(Error::Protocol {
            offset: 0,
            reason: format!("payload of {} bytes exceeds {MAX_PAYLOAD}", msg.payload.len()),
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 1 + msg.payload.len());
    out.extend_from_slice(&((msg.payload.len() + 1) as u32).to_be_bytes());
    out.push(msg.kind as u8);
    out.extend_from_slice(&msg.payload);
    Ok(out)
}

/// Decode the frame at the start of `buf`, returning it and the bytes used.
pub fn decode_frame(buf: &[u8]) -> std::result::Result<(WireMessage, usize), DecodeError> {
    if buf.len() < HEADER_LEN {
        return Err(DecodeError::NeedMoreBytes { needed: HEADER_LEN });
    }
    let len = u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize;
    if len == 0 {
        return Err(protocol(0, "frame length 0 has no type byte"));
    }
    if len - 1 > MAX_PAYLOAD {
        return Err(protocol(0, format!("frame length {len} exceeds limit")));
    }
    let tag = *buf
        .get(HEADER_LEN)
        .ok_or(DecodeError::NeedMoreBytes { needed: HEADER_LEN + len })?;
    let kind = MessageType::from_tag(tag)
        .ok_or_else(|| protocol(HEADER_LEN, format!("unknown message type {tag:#04x}")))?;
    let total = HEADER_LEN + len;
    if buf.len() < total {
        return Err(DecodeError::NeedMoreBytes { needed: total });
    }
    Ok((WireMessage::new(kind, buf[HEADER_LEN + 1..total].to_vec()), total))
}

/// Decode a buffer holding exactly one frame.
pub fn decode(buf: &[u8]) -> std::result::Result<WireMessage, DecodeError> {
    let (msg, used) = decode_frame(buf)?;
    if used != buf.len() {
        return Err(protocol(
            HEADER_LEN,
            format!(
                "frame declares {} body bytes but {} follow the length",
                used - HEADER_LEN,
                buf.len() - HEADER_LEN
            ),
        ));
    }
    Ok(msg)
}

/// Buffered frame reader over a byte stream.
pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: Vec::new(),
        }
    }

    pub fn get_ref(&self) -> &R {
        &self.inner
    }

    /// Next frame, or `None` on a clean end of stream between frames.
    pub fn read_message(&mut self) -> Result<Option<WireMessage>> {
        let mut chunk = [0u8; 64 * 1024];
        loop {
            match decode_frame(&self.buf) {
                Ok((msg, used)) => {
                    self.buf.drain(..used);
                    return Ok(Some(msg));
                }
                Err(DecodeError::Protocol { offset, reason }) => {
                    return Err(Error::Protocol { offset, reason })
                }
                Err(DecodeError::NeedMoreBytes { .. }) => {}
            }
            let n = match self.inner.read(&mut chunk) {
                Ok(n) => n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            };
            if n == 0 {
                if self.buf.is_empty() {
                    return Ok(None);
                }
                return Err(Error::Protocol {
                    offset: self.buf.len(),
                    reason: "stream closed mid-frame".into(),
                });
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }
}

pub fn write_message<W: Write>(w: &mut W, msg: &WireMessage) -> Result<()> {
    w.write_all(&encode(msg)?)?;
    w.flush()?;
    Ok(())
}

// ---- typed payloads ----

/// ERROR reason codes.
pub mod reason {
    pub const NOT_ASSIGNED: u16 = 1;
    pub const MALFORMED_TENSOR: u16 = 2;
    pub const MODEL_LOAD: u16 = 3;
    pub const DIMENSION: u16 = 4;
    pub const UNEXPECTED: u16 = 5;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assign {
    pub student_index: u32,
    pub range_start: u32,
    pub range_end: u32,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFrame {
    pub request_id: u64,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorPayload {
    pub code: u16,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(String),
    Assign(Assign),
    InferReq(TensorFrame),
    InferResp(TensorFrame),
    Ping(Vec<u8>),
    Pong(Vec<u8>),
    Shutdown,
    Error(ErrorPayload),
}

struct PayloadReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

/// Offset of the payload within a frame.
const PAYLOAD_OFFSET: usize = HEADER_LEN + 1;

impl<'a> PayloadReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Protocol {
                offset: PAYLOAD_OFFSET + self.pos,
                reason: format!("payload truncated: need {n} more bytes"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn utf8(&mut self, n: usize) -> Result<String> {
        let at = self.pos;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Protocol {
            offset: PAYLOAD_OFFSET + at,
            reason: "invalid UTF-8".into(),
        })
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Protocol {
                offset: PAYLOAD_OFFSET + self.pos,
                reason: format!("{} unexpected trailing payload bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn encode_tensor_frame(f: &TensorFrame) -> Vec<u8> {
    let t = &f.tensor;
    let mut p = Vec::with_capacity(16 + 4 * t.len());
    p.extend_from_slice(&f.request_id.to_be_bytes());
    p.extend_from_slice(&(t.rows() as u32).to_be_bytes());
    p.extend_from_slice(&(t.cols() as u32).to_be_bytes());
    p.extend_from_slice(&t.to_le_bytes());
    p
}

fn decode_tensor_frame(r: &mut PayloadReader<'_>) -> Result<TensorFrame> {
    let request_id = r.u64()?;
    let dims_at = PAYLOAD_OFFSET + r.pos;
    let batch = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let n = batch.checked_mul(dim).filter(|&n| n > 0).ok_or_else(|| Error::Protocol {
        offset: dims_at,
        reason: format!("invalid tensor shape {batch}x{dim}"),
    })?;
    let data_at = PAYLOAD_OFFSET + r.pos;
    let bytes = r.take(n.checked_mul(4).ok_or_else(|| Error::Protocol {
        offset: dims_at,
        reason: "tensor size overflows".into(),
    })?)?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Protocol {
            offset: data_at + 4 * i,
            reason: "non-finite tensor element".into(),
        });
    }
    r.finish()?;
    Ok(TensorFrame {
        request_id,
        tensor: Tensor::matrix(batch, dim, data)?,
    })
}

impl Message {
    pub fn kind(&self) -> MessageType {
        match self {
            Message::Hello(_) => MessageType::Hello,
            Message::Assign(_) => MessageType::Assign,
            Message::InferReq(_) => MessageType::InferReq,
            Message::InferResp(_) => MessageType::InferResp,
            Message::Ping(_) => MessageType::Ping,
            Message::Pong(_) => MessageType::Pong,
            Message::Shutdown => MessageType::Shutdown,
            Message::Error(_) => MessageType::Error,
        }
    }

    pub fn to_wire(&self) -> WireMessage {
        let payload = match self {
            Message::Hello(s) => s.as_bytes().to_vec(),
            Message::Assign(a) => {
                let mut p = Vec::with_capacity(14 + a.path.len());
                p.extend_from_slice(&a.student_index.to_be_bytes());
                p.extend_from_slice(&a.range_start.to_be_bytes());
                p.extend_from_slice(&a.range_end.to_be_bytes());
                p.extend_from_slice(&(a.path.len() as u16).to_be_bytes());
                p.extend_from_slice(a.path.as_bytes());
                p
            }
            Message::InferReq(f) | Message::InferResp(f) => encode_tensor_frame(f),
            Message::Ping(b) | Message::Pong(b) => b.clone(),
            Message::Shutdown => Vec::new(),
            Message::Error(e) => {
                let mut p = e.code.to_be_bytes().to_vec();
                p.extend_from_slice(e.message.as_bytes());
                p
            }
        };
        WireMessage::new(self.kind(), payload)
    }

    pub fn from_wire(msg: &WireMessage) -> Result<Message> {
        let mut r = PayloadReader {
            buf: &msg.payload,
            pos: 0,
        };
        let out = match msg.kind {
            MessageType::Hello => {
                let n = msg.payload.len();
                Message::Hello(r.utf8(n)?)
            }
            MessageType::Assign => {
                let student_index = r.u32()?;
                let range_start = r.u32()?;
                let range_end = r.u32()?;
                if range_end <= range_start {
                    return Err(Error::Protocol {
                        offset: PAYLOAD_OFFSET + 4,
                        reason: format!("empty range {range_start}..{range_end}"),
                    });
                }
                let len = r.u16()? as usize;
                let path = r.utf8(len)?;
                r.finish()?;
                Message::Assign(Assign {
                    student_index,
                    range_start,
                    range_end,
                    path,
                })
            }
            MessageType::InferReq => Message::InferReq(decode_tensor_frame(&mut r)?),
            MessageType::InferResp => Message::InferResp(decode_tensor_frame(&mut r)?),
            MessageType::Ping => Message::Ping(r.rest().to_vec()),
            MessageType::Pong => Message::Pong(r.rest().to_vec()),
            MessageType::Shutdown => {
                r.finish()?;
                Message::Shutdown
            }
            MessageType::Error => {
                let code = r.u16()?;
                let n = msg.payload.len() - 2;
                Message::Error(ErrorPayload {
                    code,
                    message: r.utf8(n)?,
                })
            }
        };
        Ok(out)
    }
}

pub fn send<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    write_message(w, &msg.to_wire())
}
