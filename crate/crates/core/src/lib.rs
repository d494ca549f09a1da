//! Latent bridge matching at desk scale.
//!
//! A small drift network is trained to transport samples between paired
//! distributions along a Brownian-bridge interpolant, then sampled with a
//! few Euler–Maruyama steps aligned with the training timesteps.

pub mod bridge;
pub mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod runner;
pub mod sample;
pub mod schedule;
pub mod tensor;
pub mod train;

pub use bridge::{BridgeBatch, SigmaParam};
pub use codec::Codec;
pub use config::RunConfig;
pub use data::{PairedBatch, PairedTask};
pub use error::{LbmError, Result};
pub use model::DriftModel;
pub use oracle::GaussianTaskSpec;
pub use rng::RngStream;
pub use sample::DriftField;
pub use schedule::{InferenceGrid, TimestepDistribution};
pub use tensor::TensorBatch;
pub use train::TrainConfig;
