//! Minimal feedforward network engine: dense/ReLU/softmax layers, losses,
//! backpropagation, SGD/Adam and the TCN1 model format.

mod io;
mod layer;
mod loss;
mod network;
mod optim;
mod train;

pub use io::{
    load_network, load_tensor, model_header_len, network_from_bytes, network_to_bytes,
    save_network, save_tensor, tensor_from_bytes, tensor_to_bytes, MODEL_MAGIC, TENSOR_MAGIC,
};
pub use layer::{mlp, validate_chain, LayerKind, LayerSpec};
pub use loss::{
    bce_with_logits, cross_entropy_loss, mse_loss, one_hot, sigmoid, softmax_temperature,
    PROB_FLOOR,
};
pub use network::{DenseParams, Gradients, Network};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use train::{epoch_batches, fit_classifier, fit_regression, TrainConfig};
