//! Dense tensors, reverse-mode differentiation and a finite-difference
//! gradient oracle.

mod gradcheck;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{compare_gradient, gradient_check, relative_error, unravel, GradCheckResult};
pub use scalar::Scalar;
pub use tape::{AttentionProbs, Tape, Var};
pub use tensor::{cross_entropy, gelu, layer_norm, matmul, softmax, Tensor};
