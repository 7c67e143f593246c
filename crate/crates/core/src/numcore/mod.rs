//! Small dense numeric kernel: tensors, forward kernels, a reverse-mode
//! tape, the adaptive-moment optimizer and a finite-difference checker.

mod graph;
pub mod gradcheck;
pub mod kernels;
mod optim;
mod tensor;

pub use gradcheck::{gradcheck, GradcheckReport, Objective};
pub use graph::{Gradients, Graph, ParamId, ParamSet, Parameter, Var, COSINE_EPS};
pub use kernels::{attention, causal_mask, cosine, layer_norm, matmul, multi_head, softmax, AttentionSpec, MultiHeadWeights};
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor;

pub(crate) use graph::cosine_guarded;
