//! Minimal differentiable-computation substrate: tensors, a define-by-run
//! tape with reverse-mode gradients, a finite-difference oracle and SGD.

mod finite_diff;
mod optim;
mod tape;
mod tensor;

pub use finite_diff::{finite_diff_grad, max_relative_error, relative_error, DEFAULT_STEP};
pub use optim::{sgd_step, SgdConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
