//! Sequential variational filtering for Bayesian neural networks.
//!
//! The weights of a feed-forward network are treated as the hidden state of a
//! Markov chain. At every time step the previous variational posterior is
//! pushed through a Gaussian-mixture transition kernel ([`kernel`]), corrected
//! by the new batch's likelihood ([`net`]) and projected back onto the
//! DropConnect mixture family ([`posterior`]) by reparameterized stochastic
//! gradient descent ([`trainer`]).
//!
//! [`data`] and [`metrics`] cover the dataset plumbing and the evaluation
//! scores used by the experiment harnesses.

pub mod data;
pub mod error;
pub mod kernel;
pub mod math;
pub mod metrics;
pub mod net;
pub mod posterior;
pub mod trainer;

pub use error::{Error, IdxError, Result};
pub use kernel::{KernelParams, MuMode, PredictedPrior};
pub use math::{Matrix, RandomSource};
pub use net::{Emission, Head, NetworkShape, Targets, TimeStepData};
pub use posterior::{EpsilonDraw, VariationalParams};
pub use trainer::{filter_step, filter_step_observed, run_filter, FilterState, KlWeighting, MeanInit, Minibatch, Optimizer, StartMode, StepConfig, StepDiagnostics};
