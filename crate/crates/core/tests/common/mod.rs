//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use tcn_core::net::{
    bce_with_logits, cross_entropy_loss, mlp, mse_loss, one_hot, Gradients, LayerSpec, Network,
};
use tcn_core::rng::Rng64;
use tcn_core::Tensor;

pub const FD_STEP: f32 = 1e-3;
/// Inputs are redrawn until every hidden pre-activation is at least this far
/// from the ReLU kink, so a step never crosses it.
pub const KINK_MARGIN: f32 = 0.02;

pub fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut Rng64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.uniform(-scale, scale) as f32).collect()).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// `Σ out ⊙ R` for a fixed random `R`.
    Linear,
    Mse,
    CrossEntropy,
    Bce,
}

pub struct Problem {
    pub net: Network,
    pub x: Tensor,
    pub objective: Objective,
    pub target: Tensor,
    pub label: f32,
}

impl Problem {
    pub fn loss(&self, net: &Network, x: &Tensor) -> f64 {
        let out = net.forward(x).unwrap();
        match self.objective {
            Objective::Linear => out
                .data()
                .iter()
                .zip(self.target.data())
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum(),
            Objective::Mse => mse_loss(&self.target, &out).unwrap().0,
            Objective::CrossEntropy => cross_entropy_loss(&self.target, &out).unwrap().0,
            Objective::Bce => bce_with_logits(&out, self.label).unwrap().0,
        }
    }

    pub fn analytic(&self) -> Gradients {
        let mut net = self.net.clone();
        let out = net.forward_train(&self.x).unwrap();
        match self.objective {
            Objective::Linear => net.backward(&self.target),
            Objective::Mse => net.backward(&mse_loss(&self.target, &out).unwrap().1),
            Objective::CrossEntropy => {
                net.backward_from_logits(&cross_entropy_loss(&self.target, &out).unwrap().1)
            }
            Objective::Bce => net.backward(&bce_with_logits(&out, self.label).unwrap().1),
        }
        .unwrap()
    }
}

/// Build the seeded problem exercising `objective`.
pub fn problem(objective: Objective, seed: u64) -> Problem {
    let mut rng = Rng64::new(seed);
    let batch = 3 + rng.below(3);
    let in_dim = 3 + rng.below(4);
    let hidden = 4 + rng.below(5);
    let (layers, out_dim): (Vec<LayerSpec>, usize) = match objective {
        Objective::Linear => {
            let out = 2 + rng.below(4);
            (mlp(&[in_dim, hidden, out], true), out)
        }
        Objective::Mse => {
            let out = 2 + rng.below(4);
            (mlp(&[in_dim, hidden, out], false), out)
        }
        Objective::CrossEntropy => {
            let out = 2 + rng.below(4);
            (mlp(&[in_dim, hidden, out], true), out)
        }
        Objective::Bce => (mlp(&[in_dim, hidden, 1], false), 1),
    };
    let mut net = Network::new(layers, seed).unwrap();
    if net.ends_with_softmax() {
        net.set_temperature(rng.uniform(0.5, 3.0) as f32).unwrap();
    }
    let first = net.slice(0, 1).unwrap();
    let x = loop {
        let x = random_tensor(batch, in_dim, 1.0, &mut rng);
        if first.forward(&x).unwrap().data().iter().all(|z| z.abs() > KINK_MARGIN) {
            break x;
        }
    };
    let target = match objective {
        Objective::CrossEntropy => {
            let labels: Vec<usize> = (0..batch).map(|_| rng.below(out_dim)).collect();
            one_hot(&labels, out_dim).unwrap()
        }
        _ => random_tensor(batch, out_dim, 1.0, &mut rng),
    };
    let label = if rng.below(2) == 0 { 0.0 } else { 1.0 };
    Problem { net, x, objective, target, label }
}

/// `max |a - n| / max(|a|, |n|)` over one gradient tensor. Scaling by the
/// tensor's largest entry keeps float32 rounding in near-zero entries from
/// dominating.
fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let scale = a.iter().chain(n).fold(0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0f64, f64::max) / scale
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Central difference of the loss in one coordinate, using the step that
/// was actually representable.
fn central<F: FnMut(f32) -> f64>(v: f32, mut loss_at: F) -> f64 {
    let hi = v + FD_STEP;
    let lo = v - FD_STEP;
    (loss_at(hi) - loss_at(lo)) / (hi as f64 - lo as f64)
}

/// Largest relative error between analytic and numerical gradients over
/// every parameter and every input coordinate.
pub fn max_rel_error(p: &Problem) -> f64 {
    let g = p.analytic();
    let mut worst = 0f64;
    for (l, grad) in g.dense.iter().enumerate() {
        let base = &p.net.params()[l];
        let nw: Vec<f64> = (0..base.weights.len())
            .map(|i| {
                central(base.weights[i], |v| {
                    let mut params = p.net.params().to_vec();
                    params[l].weights[i] = v;
                    p.loss(&with_params(&p.net, params), &p.x)
                })
            })
            .collect();
        let nb: Vec<f64> = (0..base.bias.len())
            .map(|i| {
                central(base.bias[i], |v| {
                    let mut params = p.net.params().to_vec();
                    params[l].bias[i] = v;
                    p.loss(&with_params(&p.net, params), &p.x)
                })
            })
            .collect();
        worst = worst.max(rel_err(&widen(&grad.weights), &nw));
        worst = worst.max(rel_err(&widen(&grad.bias), &nb));
    }
    let nx: Vec<f64> = (0..p.x.len())
        .map(|i| {
            central(p.x.data()[i], |v| {
                let mut x = p.x.clone();
                x.data_mut()[i] = v;
                p.loss(&p.net, &x)
            })
        })
        .collect();
    worst.max(rel_err(&widen(g.input.data()), &nx))
}

fn with_params(net: &Network, params: Vec<tcn_core::net::DenseParams>) -> Network {
    let mut out = Network::from_params(net.layers().to_vec(), params).unwrap();
    out.set_temperature(net.temperature()).unwrap();
    out
}

use tcn_core::data::{make_blobs, BlobSpec, Dataset};
use tcn_core::distill::{evaluate, extract_dense, TeacherSplit};
use tcn_core::net::{fit_classifier, TrainConfig};

pub const DESK_DENSE: usize = 32;
pub const DESK_TEACHER: [usize; 4] = [16, 64, DESK_DENSE, 4];

/// Blobs plus a trained teacher and its cached dense features.
pub struct Desk {
    pub train: Dataset,
    pub test: Dataset,
    pub teacher: Network,
    pub split: TeacherSplit,
    pub dense_train: Tensor,
    pub dense_test: Tensor,
    pub teacher_acc: f64,
}

pub fn desk(seed: u64) -> Desk {
    let (train, test) = make_blobs(&BlobSpec { seed, ..Default::default() }).unwrap();
    let mut teacher = Network::new(mlp(&DESK_TEACHER, true), seed).unwrap();
    let cfg = TrainConfig { epochs: 20, seed, ..Default::default() };
    fit_classifier(&mut teacher, &train.x, &train.y, &cfg).unwrap();
    let teacher_acc = evaluate(&teacher, &test.x, &test.y).unwrap();
    Desk {
        split: TeacherSplit::new(&teacher).unwrap(),
        dense_train: extract_dense(&teacher, &train.x).unwrap(),
        dense_test: extract_dense(&teacher, &test.x).unwrap(),
        train,
        test,
        teacher,
        teacher_acc,
    }
}
