//! Binary model and tensor files.
//!
//! TCN1 model layout (all integers little-endian):
//!
//! ```text
//! "TCN1"                          4 bytes
//! layer count                     u32
//! per layer: kind u8 (0 dense, 1 relu, 2 softmax), in_dim u32, out_dim u32
//! per dense layer, in order: weights f32 x in*out ([in, out] row-major),
//!                            bias f32 x out
//! ```
//!
//! TCT1 tensor layout: `"TCT1"`, rank u32, dims u32 x rank, then the data as
//! little-endian f32.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::layer::{validate_chain, LayerKind, LayerSpec};
use crate::net::network::{DenseParams, Network};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: [u8; 4] = *b"TCN1";
pub const TENSOR_MAGIC: [u8; 4] = *b"TCT1";

/// Bytes in the TCN1 header for a network with `layers` layers.
pub fn model_header_len(layers: usize) -> usize {
    8 + 9 * layers
}

pub fn network_to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(model_header_len(net.layers().len()) + 4 * net.param_count());
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for l in net.layers() {
        out.push(l.kind.tag());
        out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&net.param_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos,
                format!("truncated: need {n} bytes for {what}, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.pos, "size overflow"))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn network_from_bytes(buf: &[u8]) -> Result<Network> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(Error::format(0, "bad magic, expected TCN1"));
    }
    let count = r.u32("layer count")? as usize;
    if count == 0 {
        return Err(Error::format(4, "model has no layers"));
    }
    // Each layer header needs 9 bytes; reject absurd counts before allocating.
    if count > (buf.len() - r.pos) / 9 {
        return Err(Error::format(
            4,
            format!("layer count {count} exceeds file size"),
        ));
    }
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let offset = r.pos;
        let tag = r.take(1, "layer kind")?[0];
        let kind = LayerKind::from_tag(tag)
            .ok_or_else(|| Error::format(offset, format!("unknown layer kind {tag} for layer {i}")))?;
        let in_dim = r.u32("in_dim")? as usize;
        let out_dim = r.u32("out_dim")? as usize;
        layers.push(LayerSpec {
            kind,
            in_dim,
            out_dim,
        });
    }
    validate_chain(&layers).map_err(|e| {
        let layer = match &e {
            Error::Dimension { layer: Some(l), .. } => *l,
            _ => 0,
        };
        Error::format(8 + 9 * layer, e.to_string())
    })?;
    let mut params = Vec::new();
    for l in layers.iter().filter(|l| l.kind == LayerKind::Dense) {
        let weights = r.f32s(l.in_dim * l.out_dim, "weights")?;
        let bias = r.f32s(l.out_dim, "bias")?;
        params.push(DenseParams {
            in_dim: l.in_dim,
            out_dim: l.out_dim,
            weights,
            bias,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::format(
            r.pos,
            format!("{} trailing bytes", buf.len() - r.pos),
        ));
    }
    Network::from_params(layers, params)
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, network_to_bytes(net))?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    network_from_bytes(&fs::read(path)?)
}

pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.shape().len() + 4 * t.len());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&t.to_le_bytes());
    out
}

pub fn tensor_from_bytes(buf: &[u8]) -> Result<Tensor> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != TENSOR_MAGIC {
        return Err(Error::format(0, "bad magic, expected TCT1"));
    }
    let rank = r.u32("rank")? as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::format(4, format!("unsupported rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32("dim")? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::format(8, "shape overflows"))?;
    let data = r.f32s(n, "tensor data")?;
    if r.pos != buf.len() {
        return Err(Error::format(r.pos, "trailing bytes"));
    }
    Tensor::new(shape, data).map_err(|e| Error::format(8, e.to_string()))
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, tensor_to_bytes(t))?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    tensor_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::layer::mlp;

    #[test]
    fn file_size_is_header_plus_params() {
        // dense 3->4, relu, dense 4->2: header 8 + 3*9 = 35, params 16 + 10 = 26.
        let net = Network::new(mlp(&[3, 4, 2], false), 1).unwrap();
        assert_eq!(network_to_bytes(&net).len(), 35 + 26 * 4);
    }

    #[test]
    fn round_trip_bit_exact() {
        let net = Network::new(mlp(&[5, 7, 3], true), 21).unwrap();
        let back = network_from_bytes(&network_to_bytes(&net)).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.param_bytes(), net.param_bytes());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = network_to_bytes(&Network::new(mlp(&[2, 2], false), 1).unwrap());
        bytes[0] = b'X';
        assert!(matches!(
            network_from_bytes(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = network_to_bytes(&Network::new(mlp(&[2, 3], false), 1).unwrap());
        let cut = &bytes[..bytes.len() - 2];
        match network_from_bytes(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, model_header_len(1) + 24),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn chain_violation_is_format_error() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"TCN1");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.push(1);
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 12]);
        assert!(matches!(
            network_from_bytes(&bytes),
            Err(Error::Format { offset: 17, .. })
        ));
    }

    #[test]
    fn tensor_round_trip() {
        let t = Tensor::matrix(2, 3, vec![1.0, -2.5, 3.25, 0.0, f32::MIN_POSITIVE, 7.0]).unwrap();
        assert_eq!(tensor_from_bytes(&tensor_to_bytes(&t)).unwrap(), t);
    }
}
