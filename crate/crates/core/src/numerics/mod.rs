//! Deterministic differentiable array engine.
//!
//! A two-axis row-major tensor, a reverse-mode tape recording forward
//! operations, and the training optimizer (decoupled weight decay, global
//! gradient clipping, warmup + cosine learning-rate schedule).

mod gradcheck;
mod optimizer;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_gradients, max_rel_err};
pub use optimizer::{OptimizerConfig, OptimizerState};
pub use tape::{BoundParams, Gradients, Tape, Var};
pub use tensor::{ParamId, ParamStore, Scalar, Tensor};
