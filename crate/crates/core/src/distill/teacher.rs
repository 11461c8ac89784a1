use crate::error::{Error, Result};
use crate::net::{LayerKind, Network};
use crate::tensor::Tensor;

/// A teacher cut at its final dense layer: `body` produces the dense
/// representation, `head` maps it to class probabilities.
#[derive(Debug, Clone)]
pub struct TeacherSplit {
    pub body: Network,
    pub head: Network,
}

impl TeacherSplit {
    pub fn new(teacher: &Network) -> Result<Self> {
        let layers = teacher.layers();
        if layers.len() < 2 {
            return Err(Error::Structure(format!(
                "teacher needs at least 2 layers, has {}",
                layers.len()
            )));
        }
        let last_dense = layers
            .iter()
            .rposition(|l| l.kind == LayerKind::Dense)
            .ok_or_else(|| Error::Structure("teacher has no dense layer".into()))?;
        if last_dense == 0 {
            return Err(Error::Structure(
                "teacher's only dense layer is its first; no dense representation precedes the logits".into(),
            ));
        }
        Ok(Self {
            body: teacher.slice(0, last_dense)?,
            head: teacher.slice(last_dense, layers.len())?,
        })
    }

    /// Width `D` of the dense representation.
    pub fn dense_dim(&self) -> usize {
        self.head.in_dim()
    }
}

/// Output of the layer feeding the teacher's logits layer.
pub fn extract_dense(teacher: &Network, x: &Tensor) -> Result<Tensor> {
    TeacherSplit::new(teacher)?.body.forward(x)
}
