//! Teacher-class knowledge distillation.
//!
//! A trained teacher's dense representation (the activations feeding its
//! logits layer) is split into `n` disjoint contiguous sub-spaces. Each
//! sub-space is learned by an independent student, either with a plain
//! reconstruction loss or adversarially. At inference the student outputs are
//! concatenated and passed through the teacher's output head, optionally
//! fine-tuned with the students frozen. Students can run on separate worker
//! processes behind a small framed TCP protocol.

pub mod cluster;
pub mod data;
pub mod distill;
pub mod error;
pub mod gan;
pub mod net;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
