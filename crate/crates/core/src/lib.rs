//! p-step restricted Boltzmann machines for multivariate binary sequences.
//!
//! - [`model`]: block parameterization, energy, activation probabilities, checkpoints
//! - [`gibbs`]: seeded block Gibbs sampling and clamped prediction
//! - [`trainer`]: k-step contrastive divergence
//! - [`oracle`]: brute-force enumeration for tiny models
//! - [`baselines`]: random walk with drift and VAR(1) forecasters
//! - [`evaluation`]: misclassification loss, confusion matrices, backtests, model comparison
//! - [`data`]: bar ingestion, direction extraction, windows, synthetic sequences
//! - [`cli`]: configuration and command implementations behind the `prbm` binary

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gibbs;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use gibbs::{PredictMode, Prediction};
pub use model::{BlockHidden, BlockVisible, BlockWeights, ForgettingMatrix, Model, ModelShape};
pub use oracle::ExactOracle;
pub use rng::RngStream;
pub use trainer::{GradientBlocks, TrainConfig, TrainTrace};
