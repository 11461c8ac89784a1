use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Relu,
    Softmax,
}

impl LayerKind {
    /// Tag byte used by the TCN1 model format.
    pub fn tag(self) -> u8 {
        match self {
            LayerKind::Dense => 0,
            LayerKind::Relu => 1,
            LayerKind::Softmax => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(LayerKind::Dense),
            1 => Some(LayerKind::Relu),
            2 => Some(LayerKind::Softmax),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind: LayerKind::Dense,
            in_dim,
            out_dim,
        }
    }

    pub fn relu(dim: usize) -> Self {
        Self {
            kind: LayerKind::Relu,
            in_dim: dim,
            out_dim: dim,
        }
    }

    pub fn softmax(dim: usize) -> Self {
        Self {
            kind: LayerKind::Softmax,
            in_dim: dim,
            out_dim: dim,
        }
    }

    /// Weights plus bias for dense layers, zero otherwise.
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.in_dim * self.out_dim + self.out_dim,
            _ => 0,
        }
    }

    /// Per-sample floating point operations: a multiply-add per weight plus
    /// one add per bias for dense layers, one op per output for activations.
    pub fn flops(&self) -> usize {
        match self.kind {
            LayerKind::Dense => 2 * self.in_dim * self.out_dim + self.out_dim,
            _ => self.out_dim,
        }
    }

    pub(crate) fn validate(&self, index: usize) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::dim_at(index, "layer dims must be positive"));
        }
        if self.kind != LayerKind::Dense && self.in_dim != self.out_dim {
            return Err(Error::dim_at(
                index,
                format!(
                    "{:?} layer must preserve width, got {} -> {}",
                    self.kind, self.in_dim, self.out_dim
                ),
            ));
        }
        Ok(())
    }
}

/// Validate a layer stack: each layer well-formed and adjacent widths chained.
pub fn validate_chain(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Structure("network has no layers".into()));
    }
    for (i, layer) in layers.iter().enumerate() {
        layer.validate(i)?;
    }
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(Error::dim_at(
                i + 1,
                format!(
                    "expects input width {}, previous layer produces {}",
                    pair[1].in_dim, pair[0].out_dim
                ),
            ));
        }
    }
    Ok(())
}

/// Dense layers of widths `dims[0] -> dims[1] -> ...` with ReLU between
/// them, optionally closed by a softmax.
pub fn mlp(dims: &[usize], final_softmax: bool) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for (i, pair) in dims.windows(2).enumerate() {
        layers.push(LayerSpec::dense(pair[0], pair[1]));
        if i + 2 < dims.len() {
            layers.push(LayerSpec::relu(pair[1]));
        }
    }
    if final_softmax {
        if let Some(&last) = dims.last() {
            layers.push(LayerSpec::softmax(last));
        }
    }
    layers
}
