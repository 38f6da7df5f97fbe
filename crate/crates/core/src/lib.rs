//! Margin-based label smoothing and the calibration toolkit around it.
//!
//! * [`numerics`]: stable softmax family, entropy, KL against uniform, logit distances
//! * [`losses`]: CE, LS, FL, FLSD, ECP and MbLS with analytic logit gradients
//! * [`metrics`]: ECE, adaptive ECE, accuracy, NLL, reliability tables
//! * [`calibrate`]: post-hoc temperature scaling
//! * [`model`]: MLP classifier and deterministic SGD trainer
//! * [`data`]: Gaussian blobs, splits, CSV formats
//! * [`verify`]: randomized checks of the identities, bounds and gradients

pub mod calibrate;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use losses::{LossKind, LossOutput, LossSpec};
pub use metrics::{PredictionRecord, PredictionSet};
pub use numerics::{LogitVector, ProbVector};
