//! Losses and the temperature softmax.
//!
//! Every loss returns `(value, gradient)` where the gradient is taken with
//! respect to the second argument (the prediction).

use crate::error::{Error, Result};
use crate::net::network::softmax_rows;
use crate::tensor::Tensor;

/// Smallest probability fed to `ln` in the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise `exp(z_i / T) / Σ_j exp(z_j / T)`.
pub fn softmax_temperature(z: &Tensor, temperature: f32) -> Result<Tensor> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidTemperature(temperature));
    }
    Ok(softmax_rows(z, temperature))
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Reconstruction error between a target `d` and prediction `d_hat`,
/// averaged over samples and dimensions:
/// `Σ (d - d_hat)² / (batch · D)`.
pub fn mse_loss(d: &Tensor, d_hat: &Tensor) -> Result<(f64, Tensor)> {
    same_shape(d, d_hat)?;
    let n = d.len() as f64;
    let mut sum = 0f64;
    let mut grad = Vec::with_capacity(d.len());
    for (&t, &p) in d.data().iter().zip(d_hat.data()) {
        let diff = p as f64 - t as f64;
        sum += diff * diff;
        grad.push((2.0 * diff / n) as f32);
    }
    Ok((sum / n, Tensor::new(d.shape().to_vec(), grad)?))
}

/// Negative log-likelihood of one-hot targets `y` under probabilities
/// `y_hat`, averaged over the batch. The returned gradient is with respect to
/// the (temperature-scaled) logits that produced `y_hat` through a softmax:
/// `(y_hat - y) / batch`.
pub fn cross_entropy_loss(y: &Tensor, y_hat: &Tensor) -> Result<(f64, Tensor)> {
    same_shape(y, y_hat)?;
    let batch = y.rows() as f64;
    let mut sum = 0f64;
    for (yr, pr) in y.rows_iter().zip(y_hat.rows_iter()) {
        for (&t, &p) in yr.iter().zip(pr) {
            if t != 0.0 {
                sum -= t as f64 * (p as f64).max(PROB_FLOOR).ln();
            }
        }
    }
    let grad = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&t, &p)| ((p as f64 - t as f64) / batch) as f32)
        .collect();
    Ok((sum / batch, Tensor::new(y.shape().to_vec(), grad)?))
}

/// One-hot `[labels.len(), classes]` matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0f32; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::dim(format!("label {l} outside {classes} classes")));
        }
        data[i * classes + l] = 1.0;
    }
    Tensor::matrix(labels.len(), classes, data)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on raw scores `[batch, 1]` against a constant label,
/// with the sigmoid folded in: `mean(softplus(l) - label·l)`. Gradient is
/// w.r.t. the scores: `(σ(l) - label) / batch`.
pub fn bce_with_logits(logits: &Tensor, label: f32) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 || logits.cols() != 1 {
        return Err(Error::Structure(format!(
            "binary scores must be [batch, 1], got {:?}",
            logits.shape()
        )));
    }
    let batch = logits.rows() as f64;
    let t = label as f64;
    let mut sum = 0f64;
    let mut grad = Vec::with_capacity(logits.len());
    for &l in logits.data() {
        let l = l as f64;
        // softplus(l) = max(l, 0) + ln(1 + e^-|l|)
        sum += l.max(0.0) + (-l.abs()).exp().ln_1p() - t * l;
        grad.push(((sigmoid(l) - t) / batch) as f32);
    }
    Ok((sum / batch, Tensor::new(logits.shape().to_vec(), grad)?))
}
