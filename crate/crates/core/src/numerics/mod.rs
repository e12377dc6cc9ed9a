//! Dense tensors with reverse-mode gradient accumulation, the handful of
//! nonlinearities the model needs, and a central-finite-difference verifier.
//!
//! Everything is generic over the scalar type; the crate root pins f64
//! aliases for the shipped configuration.

mod gradcheck;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckItem, GradCheckReport};
pub use params::{GradMap, ParamStore, TapeBinding};
pub use scalar::Scalar;
pub use tape::{Tape, TensorId};
pub use tensor::Tensor;
