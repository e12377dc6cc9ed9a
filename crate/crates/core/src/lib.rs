//! Instruction-following navigation agent that keeps a structured,
//! graph-based state: a per-step object layout graph, a reinforcement-
//! trained subgraph miner, and an evolving matrix memory driven by a
//! matrix-form GRU. Ships with a procedural indoor-layout simulator,
//! trajectory metrics, and a training loop, all on a from-scratch
//! reverse-mode tape.

pub mod error;
pub mod numerics;

pub use error::{Error, Result};

/// Scalar type of the shipped configuration. The numerics core is generic;
/// the model pipeline, checkpoints and gradient checks are pinned to f64.
pub type Real = f64;

pub type Tensor = numerics::Tensor<Real>;
pub type Tape = numerics::Tape<Real>;
pub type ParamStore = numerics::ParamStore<Real>;
pub type GradMap = numerics::GradMap<Real>;
