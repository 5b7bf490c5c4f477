//! Nested latent class models for verbal autopsy data.
//!
//! Training fits cause-specific latent class mixtures with sparse response
//! profiles to labeled records from one or more domains and stores posterior
//! draws of `(theta, lambda)` in an SCI checkpoint. Prediction consumes that
//! checkpoint to assign causes and estimate the cause-specific mortality
//! fractions (CSMFs) of an unlabeled target domain.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod predict;
pub mod state;
pub mod synth;
pub mod train;

pub use checkpoint::SciCheckpoint;
pub use data::{Dims, LabelDictionary, Response, VaDataset};
pub use error::{LcvaError, Result};
pub use kernels::RngStream;
pub use metrics::EvalReport;
pub use predict::{run_prediction, PredictConfig, PredictOutput, TargetVariant};
pub use state::HyperParams;
pub use train::{run_training, TrainChainConfig, TrainOutput};
