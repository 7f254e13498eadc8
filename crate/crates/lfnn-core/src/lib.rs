//! Leader-follower neural network (LFNN) training engine.
//!
//! A network is partitioned into *workers*: groups of neurons (dense layers)
//! or filters (convolutional layers) that each carry their own prediction
//! head. Every training step the workers with the lowest prediction loss in
//! each layer are selected as *leaders*; the rest are *followers* that are
//! trained only to align their outputs with the best-performing leader.
//!
//! Two training modes are supported:
//!
//! - [`TrainMode::Lfnn`]: a global prediction loss is backpropagated through
//!   the network, reaching leader workers and the output layer, while
//!   followers are excluded from the global signal and learn from the
//!   alignment loss. Layer-local leader losses are added on top.
//! - [`TrainMode::LfnnL`]: fully backprop-free. Every hidden layer is trained
//!   from its own worker losses only, and the output-layer loss updates the
//!   output layer alone. No gradient ever crosses a layer boundary, so
//!   per-layer gradient work is independent and runs in parallel (enable the
//!   `parallel` feature, on by default).
//!
//! The crate is generic over the scalar type: `f32` for training runs, `f64`
//! for finite-difference gradient checks.

pub mod data;
pub mod engine;
pub mod error;
pub mod gradcheck;
pub mod hierarchy;
pub mod layers;
pub(crate) mod parallel;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;
