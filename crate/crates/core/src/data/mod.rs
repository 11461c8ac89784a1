//! Datasets: IDX parsing and synthetic Gaussian blobs.

mod blobs;
mod idx;

use serde::{Deserialize, Serialize};

pub use blobs::{make_blobs, BlobSpec, TRAIN_FRACTION};
pub use idx::{
    data_dir_from_env, idx_from_bytes, load_idx, load_idx_dir, parse_images, parse_labels,
    write_idx, DATA_DIR_ENV, IMAGES_MAGIC, LABELS_MAGIC, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES,
    TRAIN_LABELS,
};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// `[N, in_dim]` inputs.
    pub x: Tensor,
    /// Class index per row, each `< classes`.
    pub y: Vec<usize>,
    pub classes: usize,
    pub split: Split,
    /// `(rows, cols)` for image data loaded from IDX files.
    pub image_dims: Option<(usize, usize)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
            split: self.split,
            image_dims: self.image_dims,
        }
    }

    /// First `n` rows (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}
