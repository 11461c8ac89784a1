//! IDX files (the MNIST / Fashion-MNIST container).
//!
//! Big-endian throughout: magic `0x00000803` for `u8` images with three dims
//! (count, rows, cols), `0x00000801` for `u8` labels with one dim (count),
//! followed by the raw bytes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the directory holding IDX files.
pub const DATA_DIR_ENV: &str = "TCN_DATA_DIR";

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

fn be_u32(buf: &[u8], offset: usize, what: &str) -> Result<u32> {
    buf.get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset, format!("truncated before {what}")))
}

/// Parsed image file: `[count, rows, cols]` and the raw pixel bytes.
pub fn parse_images(buf: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    let magic = be_u32(buf, 0, "magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(0, format!("image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let dims: Vec<usize> = (0..3)
        .map(|i| be_u32(buf, 4 + 4 * i, "dimension").map(|d| d as usize))
        .collect::<Result<_>>()?;
    let n = dims.iter().product::<usize>();
    let body = &buf[16..];
    if body.len() < n {
        return Err(Error::format(
            16 + body.len(),
            format!("truncated pixel data: need {n} bytes, have {}", body.len()),
        ));
    }
    if body.len() > n {
        return Err(Error::format(16 + n, "trailing bytes after pixel data"));
    }
    Ok((dims, body))
}

pub fn parse_labels(buf: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(buf, 0, "magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(0, format!("label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(buf, 4, "count")? as usize;
    let body = &buf[8..];
    if body.len() < n {
        return Err(Error::format(8 + body.len(), format!("truncated labels: need {n}, have {}", body.len())));
    }
    if body.len() > n {
        return Err(Error::format(8 + n, "trailing bytes after labels"));
    }
    Ok(body)
}

/// Build a dataset from in-memory IDX image and label files.
pub fn idx_from_bytes(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    let (dims, pixels) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if dims[0] != labels.len() {
        return Err(Error::format(
            4,
            format!("{} images but {} labels", dims[0], labels.len()),
        ));
    }
    if dims[0] == 0 || dims[1] * dims[2] == 0 {
        return Err(Error::format(4, "empty image set"));
    }
    let x = Tensor::matrix(
        dims[0],
        dims[1] * dims[2],
        pixels.iter().map(|&b| b as f32 / 255.0).collect(),
    )?;
    let y: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let classes = y.iter().max().map_or(0, |m| m + 1).max(10);
    Ok(Dataset {
        x,
        y,
        classes,
        split,
        image_dims: Some((dims[1], dims[2])),
    })
}

pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    idx_from_bytes(&fs::read(images)?, &fs::read(labels)?, split)
}

/// Serialise a dataset back to IDX `(images, labels)` bytes. Pixels are
/// recovered as `round(x * 255)`.
pub fn write_idx(ds: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = ds
        .image_dims
        .ok_or_else(|| Error::InvalidInput("dataset has no image geometry".into()))?;
    let n = ds.len();
    let mut images = Vec::with_capacity(16 + ds.x.len());
    images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [n, rows, cols] {
        images.extend_from_slice(&(d as u32).to_be_bytes());
    }
    images.extend(ds.x.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));

    let mut labels = Vec::with_capacity(8 + n);
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for &l in &ds.y {
        labels.push(u8::try_from(l).map_err(|_| Error::InvalidInput(format!("label {l} exceeds u8")))?);
    }
    Ok((images, labels))
}

/// Directory from `TCN_DATA_DIR` when it holds all four MNIST-style files.
pub fn data_dir_from_env() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os(DATA_DIR_ENV)?);
    [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS]
        .iter()
        .all(|f| dir.join(f).is_file())
        .then_some(dir)
}

/// Load the standard train/test IDX pair from `dir`.
pub fn load_idx_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train = load_idx(dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS), Split::Train)?;
    let test = load_idx(dir.join(TEST_IMAGES), dir.join(TEST_LABELS), Split::Test)?;
    Ok((train, test))
}
