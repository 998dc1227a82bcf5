//! Random-orthogonal-additive feedforward and recurrent networks, with the
//! dense linear algebra, training utilities and isometry checks they need.

pub mod activation;
pub mod checkpoint;
pub mod error;
pub mod filters;
pub mod fnn;
pub mod isometry;
pub mod linalg;
pub mod loss;
pub mod mnist;
pub mod optim;
pub mod params;
pub mod rng;
pub mod rnn;
pub mod tasks;

pub use activation::ActivationKind;
pub use error::{ModelError, Result};
pub use filters::FilterKind;
pub use fnn::{FnnConfig, FnnGradients, ForwardTrace, Mixing, RoaFnnModel};
pub use linalg::{DenseMatrix, DenseVector, LinalgError};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::ParamSet;
pub use rnn::{ContinuousTimeRnn, Readout, ReadoutSteps, RnnConfig, RnnGradients, RnnTrace, RoaRnnModel};
