//! Gaussian blob classification data.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::Rng64;
use crate::tensor::Tensor;

/// Fraction of each class kept for training; the rest is test data.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 16,
            samples_per_class: 500,
            sigma: 0.15,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("blobs need at least 2 classes".into()));
        }
        if self.classes > self.dim {
            return Err(Error::Config(format!(
                "{} classes do not fit simplex vertices in {} dims",
                self.classes, self.dim
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma {} must be > 0", self.sigma)));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Config("need at least 2 samples per class".into()));
        }
        Ok(())
    }

    /// Class centres: the unit vectors `e_0 .. e_{c-1}` (unit-simplex
    /// vertices, each of norm 1).
    pub fn centers(&self) -> Vec<Vec<f32>> {
        (0..self.classes)
            .map(|c| {
                let mut v = vec![0.0; self.dim];
                v[c] = 1.0;
                v
            })
            .collect()
    }
}

/// Draw `samples_per_class` isotropic Gaussian points around every centre
/// and split each class 80/20 into train and test.
pub fn make_blobs(spec: &BlobSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = Rng64::new(spec.seed);
    let centers = spec.centers();
    let n_train = ((spec.samples_per_class as f64) * TRAIN_FRACTION).round() as usize;
    let n_train = n_train.clamp(1, spec.samples_per_class - 1);

    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for (c, center) in centers.iter().enumerate() {
        for i in 0..spec.samples_per_class {
            let point: Vec<f32> = center
                .iter()
                .map(|&m| (m as f64 + spec.sigma * rng.normal()) as f32)
                .collect();
            let dst = if i < n_train { &mut train } else { &mut test };
            dst.0.extend(point);
            dst.1.push(c);
        }
    }

    let build = |(x, y): (Vec<f32>, Vec<usize>), split, rng: &mut Rng64| -> Result<Dataset> {
        let n = y.len();
        let ds = Dataset {
            x: Tensor::matrix(n, spec.dim, x)?,
            y,
            classes: spec.classes,
            split,
            image_dims: None,
        };
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        Ok(ds.subset(&order))
    };
    Ok((
        build(train, Split::Train, &mut rng)?,
        build(test, Split::Test, &mut rng)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = BlobSpec::default();
        let (a, b) = make_blobs(&spec).unwrap();
        let (c, d) = make_blobs(&spec).unwrap();
        assert_eq!(a.x.to_le_bytes(), c.x.to_le_bytes());
        assert_eq!(a.y, c.y);
        assert_eq!(b.x.to_le_bytes(), d.x.to_le_bytes());
    }

    #[test]
    fn class_balance_and_split() {
        let spec = BlobSpec {
            samples_per_class: 50,
            ..Default::default()
        };
        let (train, test) = make_blobs(&spec).unwrap();
        assert_eq!(train.len() + test.len(), 200);
        for c in 0..4 {
            let total = train.y.iter().chain(&test.y).filter(|&&y| y == c).count();
            assert_eq!(total, 50);
            assert_eq!(train.y.iter().filter(|&&y| y == c).count(), 40);
        }
    }

    #[test]
    fn tiny_sigma_nearest_center_is_perfect() {
        let spec = BlobSpec {
            sigma: 1e-6,
            samples_per_class: 20,
            ..Default::default()
        };
        let centers = spec.centers();
        let (train, test) = make_blobs(&spec).unwrap();
        for ds in [&train, &test] {
            for (row, &label) in ds.x.rows_iter().zip(&ds.y) {
                let nearest = (0..centers.len())
                    .min_by(|&a, &b| {
                        let da: f32 = row.iter().zip(&centers[a]).map(|(x, m)| (x - m).powi(2)).sum();
                        let db: f32 = row.iter().zip(&centers[b]).map(|(x, m)| (x - m).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                assert_eq!(nearest, label);
            }
        }
    }

    #[test]
    fn invalid_specs() {
        for bad in [
            BlobSpec { classes: 1, ..Default::default() },
            BlobSpec { sigma: 0.0, ..Default::default() },
            BlobSpec { classes: 20, dim: 4, ..Default::default() },
        ] {
            assert!(make_blobs(&bad).is_err());
        }
    }
}
