//! Feedforward network: parameters, forward pass and backpropagation.
//!
//! Dense weights are stored `[in_dim, out_dim]` row-major so a layer computes
//! `y = x·W + b` on batch-major inputs. All sums are accumulated in `f64` and
//! rounded once to `f32`.

use crate::error::{Error, Result};
use crate::net::layer::{validate_chain, LayerKind, LayerSpec};
use crate::rng::Rng64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[in_dim, out_dim]` row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl DenseParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights, zero bias.
    fn glorot(in_dim: usize, out_dim: usize, rng: &mut Rng64) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.uniform(-limit, limit) as f32)
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Activations recorded by [`Network::forward_train`]; entry `i` is the input
/// to layer `i`, the last entry is the network output.
#[derive(Debug, Clone)]
struct ForwardCache {
    activations: Vec<Tensor>,
}

/// Parameter gradients (one entry per dense layer, in order) plus the
/// gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dense: Vec<DenseParams>,
    pub input: Tensor,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.dense
            .iter()
            .all(|g| g.weights.iter().chain(&g.bias).all(|v| v.is_finite()))
            && self.input.is_finite()
    }

    /// Elementwise sum with another gradient of the same network.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<LayerSpec>,
    params: Vec<DenseParams>,
    seed: u64,
    temperature: f32,
    cache: Option<ForwardCache>,
}

/// Networks compare equal when their layer specs and parameter values match.
/// Seed, temperature and cached activations are ignored.
impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.params == other.params
    }
}

impl Network {
    /// Build and Glorot-initialise a network from `seed`.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate_chain(&layers)?;
        let mut rng = Rng64::new(seed);
        let params = layers
            .iter()
            .filter(|l| l.kind == LayerKind::Dense)
            .map(|l| DenseParams::glorot(l.in_dim, l.out_dim, &mut rng))
            .collect();
        Ok(Self {
            layers,
            params,
            seed,
            temperature: 1.0,
            cache: None,
        })
    }

    /// All parameters zero.
    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        validate_chain(&layers)?;
        let params = layers
            .iter()
            .filter(|l| l.kind == LayerKind::Dense)
            .map(|l| DenseParams::zeros(l.in_dim, l.out_dim))
            .collect();
        Ok(Self {
            layers,
            params,
            seed: 0,
            temperature: 1.0,
            cache: None,
        })
    }

    /// Build from explicit parameters, one [`DenseParams`] per dense layer.
    pub fn from_params(layers: Vec<LayerSpec>, params: Vec<DenseParams>) -> Result<Self> {
        validate_chain(&layers)?;
        let dense: Vec<(usize, &LayerSpec)> = layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind == LayerKind::Dense)
            .collect();
        if dense.len() != params.len() {
            return Err(Error::Structure(format!(
                "{} dense layers but {} parameter blocks",
                dense.len(),
                params.len()
            )));
        }
        for ((i, spec), p) in dense.iter().zip(&params) {
            if p.in_dim != spec.in_dim
                || p.out_dim != spec.out_dim
                || p.weights.len() != spec.in_dim * spec.out_dim
                || p.bias.len() != spec.out_dim
            {
                return Err(Error::dim_at(*i, "parameter block does not match layer dims"));
            }
        }
        Ok(Self {
            layers,
            params,
            seed: 0,
            temperature: 1.0,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[DenseParams] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [DenseParams] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn temperature(&self) -> f32 {
        self.temperature
    }

    /// Temperature used by every softmax layer. Not stored in model files.
    pub fn set_temperature(&mut self, t: f32) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidTemperature(t));
        }
        self.temperature = t;
        Ok(())
    }

    pub fn ends_with_softmax(&self) -> bool {
        self.layers.last().map(|l| l.kind) == Some(LayerKind::Softmax)
    }

    /// Total parameter count.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Per-sample FLOPs.
    pub fn flops(&self) -> usize {
        self.layers.iter().map(LayerSpec::flops).sum()
    }

    /// Every parameter as little-endian bytes, in file order.
    pub fn param_bytes(&self) -> Vec<u8> {
        self.params
            .iter()
            .flat_map(|p| p.weights.iter().chain(&p.bias))
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }

    /// Sub-network made of layers `[start, end)`, sharing parameter values.
    pub fn slice(&self, start: usize, end: usize) -> Result<Network> {
        if start >= end || end > self.layers.len() {
            return Err(Error::Structure(format!(
                "layer range {start}..{end} invalid for {} layers",
                self.layers.len()
            )));
        }
        let first_param = self.layers[..start]
            .iter()
            .filter(|l| l.kind == LayerKind::Dense)
            .count();
        let n_params = self.layers[start..end]
            .iter()
            .filter(|l| l.kind == LayerKind::Dense)
            .count();
        let mut net = Network::from_params(
            self.layers[start..end].to_vec(),
            self.params[first_param..first_param + n_params].to_vec(),
        )?;
        net.seed = self.seed;
        net.temperature = self.temperature;
        Ok(net)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = self.check_input(x)?;
        let mut p = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            out = self.apply(i, layer, &mut p, &out)?;
        }
        finite_or_err(out)
    }

    /// Forward pass that records activations for a following [`backward`].
    ///
    /// [`backward`]: Network::backward
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(self.check_input(x)?);
        let mut p = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            let next = self.apply(i, layer, &mut p, activations.last().unwrap())?;
            activations.push(next);
        }
        let out = finite_or_err(activations.last().unwrap().clone())?;
        self.cache = Some(ForwardCache { activations });
        Ok(out)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Backpropagate `upstream` (gradient w.r.t. the network output) through
    /// every layer of the last [`forward_train`] pass.
    ///
    /// [`forward_train`]: Network::forward_train
    pub fn backward(&self, upstream: &Tensor) -> Result<Gradients> {
        self.backward_from(self.layers.len(), upstream)
    }

    /// Backpropagate a gradient w.r.t. the temperature-scaled logits, i.e.
    /// the input of the closing softmax divided by the temperature. This is
    /// what [`cross_entropy_loss`](crate::net::cross_entropy_loss) returns.
    pub fn backward_from_logits(&self, grad_logits: &Tensor) -> Result<Gradients> {
        if !self.ends_with_softmax() {
            return Err(Error::Structure(
                "backward_from_logits needs a closing softmax layer".into(),
            ));
        }
        let inv_t = 1.0 / self.temperature as f64;
        let mut g = grad_logits.clone();
        for v in g.data_mut() {
            *v = (*v as f64 * inv_t) as f32;
        }
        self.backward_from(self.layers.len() - 1, &g)
    }

    fn backward_from(&self, top: usize, upstream: &Tensor) -> Result<Gradients> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward_train".into()))?;
        let top_act = &cache.activations[top];
        if upstream.shape() != top_act.shape() {
            return Err(Error::dim_at(
                top.saturating_sub(1),
                format!(
                    "upstream gradient shape {:?} does not match output {:?}",
                    upstream.shape(),
                    top_act.shape()
                ),
            ));
        }
        let mut dense: Vec<Option<DenseParams>> = vec![None; self.params.len()];
        let mut p = self.layers[..top]
            .iter()
            .filter(|l| l.kind == LayerKind::Dense)
            .count();
        let mut g = upstream.clone();
        for i in (0..top).rev() {
            let layer = &self.layers[i];
            let input = &cache.activations[i];
            let output = &cache.activations[i + 1];
            g = match layer.kind {
                LayerKind::Dense => {
                    p -= 1;
                    let (dp, gx) = dense_backward(&self.params[p], input, &g);
                    dense[p] = Some(dp);
                    gx
                }
                LayerKind::Relu => relu_backward(input, &g),
                LayerKind::Softmax => softmax_backward(output, &g, self.temperature),
            };
        }
        let dense = dense
            .into_iter()
            .zip(&self.params)
            .map(|(g, p)| g.unwrap_or_else(|| DenseParams::zeros(p.in_dim, p.out_dim)))
            .collect();
        Ok(Gradients { dense, input: g })
    }

    fn check_input(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.in_dim() {
            return Err(Error::dim_at(
                0,
                format!(
                    "input shape {:?}, expected [batch, {}]",
                    x.shape(),
                    self.in_dim()
                ),
            ));
        }
        Ok(x.clone())
    }

    fn apply(&self, i: usize, layer: &LayerSpec, p: &mut usize, x: &Tensor) -> Result<Tensor> {
        if x.cols() != layer.in_dim {
            return Err(Error::dim_at(
                i,
                format!("input width {}, expected {}", x.cols(), layer.in_dim),
            ));
        }
        Ok(match layer.kind {
            LayerKind::Dense => {
                let out = dense_forward(&self.params[*p], x);
                *p += 1;
                out
            }
            LayerKind::Relu => relu(x),
            LayerKind::Softmax => softmax_rows(x, self.temperature),
        })
    }
}

fn finite_or_err(t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite("network output contains NaN or Inf".into()))
    }
}

fn dense_forward(p: &DenseParams, x: &Tensor) -> Tensor {
    let rows = x.rows();
    let mut out = Vec::with_capacity(rows * p.out_dim);
    let mut acc = vec![0f64; p.out_dim];
    for row in x.rows_iter() {
        for (a, &b) in acc.iter_mut().zip(&p.bias) {
            *a = b as f64;
        }
        for (i, &xi) in row.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let xi = xi as f64;
            let w = &p.weights[i * p.out_dim..(i + 1) * p.out_dim];
            for (a, &wij) in acc.iter_mut().zip(w) {
                *a += xi * wij as f64;
            }
        }
        out.extend(acc.iter().map(|&a| a as f32));
    }
    Tensor::matrix(rows, p.out_dim, out).expect("dense output shape")
}

fn dense_backward(p: &DenseParams, x: &Tensor, g: &Tensor) -> (DenseParams, Tensor) {
    let (n_in, n_out) = (p.in_dim, p.out_dim);
    let mut dw = vec![0f64; n_in * n_out];
    let mut db = vec![0f64; n_out];
    let mut gx = Vec::with_capacity(x.rows() * n_in);
    for (xr, gr) in x.rows_iter().zip(g.rows_iter()) {
        for (d, &gj) in db.iter_mut().zip(gr) {
            *d += gj as f64;
        }
        for (i, &xi) in xr.iter().enumerate() {
            let w = &p.weights[i * n_out..(i + 1) * n_out];
            let dwi = &mut dw[i * n_out..(i + 1) * n_out];
            let mut acc = 0f64;
            for j in 0..n_out {
                let gj = gr[j] as f64;
                dwi[j] += xi as f64 * gj;
                acc += gj * w[j] as f64;
            }
            gx.push(acc as f32);
        }
    }
    let grads = DenseParams {
        in_dim: n_in,
        out_dim: n_out,
        weights: dw.into_iter().map(|v| v as f32).collect(),
        bias: db.into_iter().map(|v| v as f32).collect(),
    };
    (grads, Tensor::matrix(x.rows(), n_in, gx).expect("input grad shape"))
}

fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

fn relu_backward(x: &Tensor, g: &Tensor) -> Tensor {
    let mut out = g.clone();
    for (o, &xi) in out.data_mut().iter_mut().zip(x.data()) {
        if xi <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

pub(crate) fn softmax_rows(z: &Tensor, t: f32) -> Tensor {
    let inv_t = 1.0 / t as f64;
    let mut out = Vec::with_capacity(z.len());
    let mut e = vec![0f64; z.cols()];
    for row in z.rows_iter() {
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let mut sum = 0.0;
        for (ej, &zj) in e.iter_mut().zip(row) {
            *ej = ((zj as f64 - max) * inv_t).exp();
            sum += *ej;
        }
        out.extend(e.iter().map(|&ej| (ej / sum) as f32));
    }
    Tensor::matrix(z.rows(), z.cols(), out).expect("softmax shape")
}

fn softmax_backward(s: &Tensor, g: &Tensor, t: f32) -> Tensor {
    let inv_t = 1.0 / t as f64;
    let mut out = Vec::with_capacity(s.len());
    for (sr, gr) in s.rows_iter().zip(g.rows_iter()) {
        let dot: f64 = sr.iter().zip(gr).map(|(&a, &b)| a as f64 * b as f64).sum();
        out.extend(
            sr.iter()
                .zip(gr)
                .map(|(&si, &gi)| (si as f64 * (gi as f64 - dot) * inv_t) as f32),
        );
    }
    Tensor::matrix(s.rows(), s.cols(), out).expect("softmax grad shape")
}
