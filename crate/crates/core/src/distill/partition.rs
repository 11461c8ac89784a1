use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Contiguous, non-overlapping half-open ranges covering `[0, dense_dim)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspacePartition {
    dense_dim: usize,
    ranges: Vec<(usize, usize)>,
}

impl SubspacePartition {
    /// Split `dense_dim` into `n` ranges whose widths differ by at most one;
    /// the first `dense_dim % n` ranges get the extra index.
    pub fn even(dense_dim: usize, n: usize) -> Result<Self> {
        if n == 0 || dense_dim == 0 {
            return Err(Error::InvalidPartition(format!(
                "need 1 <= n <= D, got n={n}, D={dense_dim}"
            )));
        }
        if n > dense_dim {
            return Err(Error::InvalidPartition(format!(
                "{n} students exceed dense dimension {dense_dim}"
            )));
        }
        let base = dense_dim / n;
        let extra = dense_dim % n;
        let mut ranges = Vec::with_capacity(n);
        let mut start = 0;
        for k in 0..n {
            let w = base + usize::from(k < extra);
            ranges.push((start, start + w));
            start += w;
        }
        Ok(Self { dense_dim, ranges })
    }

    /// Validate explicit ranges.
    pub fn from_ranges(dense_dim: usize, ranges: Vec<(usize, usize)>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::InvalidPartition("no ranges".into()));
        }
        let mut expected = 0;
        for (k, &(s, e)) in ranges.iter().enumerate() {
            if s != expected || e <= s {
                return Err(Error::InvalidPartition(format!(
                    "range {k} = {s}..{e} does not continue at {expected}"
                )));
            }
            expected = e;
        }
        if expected != dense_dim {
            return Err(Error::InvalidPartition(format!(
                "ranges end at {expected}, dense dimension is {dense_dim}"
            )));
        }
        Ok(Self { dense_dim, ranges })
    }

    pub fn dense_dim(&self) -> usize {
        self.dense_dim
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn range(&self, k: usize) -> Range<usize> {
        let (s, e) = self.ranges[k];
        s..e
    }

    pub fn width(&self, k: usize) -> usize {
        let (s, e) = self.ranges[k];
        e - s
    }

    pub fn widths(&self) -> Vec<usize> {
        self.ranges.iter().map(|(s, e)| e - s).collect()
    }

    /// Cut `[batch, D]` features into one chunk per range.
    pub fn split(&self, d: &Tensor) -> Result<Vec<Tensor>> {
        if d.cols() != self.dense_dim {
            return Err(Error::dim(format!(
                "features have width {}, partition covers {}",
                d.cols(),
                self.dense_dim
            )));
        }
        self.ranges.iter().map(|&(s, e)| d.slice_cols(s, e)).collect()
    }

    /// Concatenate chunks in partition order.
    pub fn merge(&self, chunks: &[Tensor]) -> Result<Tensor> {
        if chunks.len() != self.ranges.len() {
            return Err(Error::dim(format!(
                "{} chunks for {} sub-spaces",
                chunks.len(),
                self.ranges.len()
            )));
        }
        for (k, c) in chunks.iter().enumerate() {
            if c.shape().len() != 2 || c.cols() != self.width(k) {
                return Err(Error::dim(format!(
                    "chunk {k} has shape {:?}, sub-space width is {}",
                    c.shape(),
                    self.width(k)
                )));
            }
        }
        let refs: Vec<&Tensor> = chunks.iter().collect();
        Tensor::concat_cols(&refs)
    }
}

/// Concatenate student chunks into the full dense representation.
pub fn merge_subspaces(chunks: &[Tensor], partition: &SubspacePartition) -> Result<Tensor> {
    partition.merge(chunks)
}
