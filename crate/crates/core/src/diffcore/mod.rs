//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::grad_check;
pub use tape::{logsumexp, GradientMap, NodeId, Primitive, Tape};
pub use tensor::{pairwise_sq_dist, Tensor};

pub(crate) use tape::matmul;
