//! Learning Koopman eigenfunctions from trajectory data, linear predictors built on
//! them, and model predictive control with the resulting lifted models.

pub mod boundary;
pub mod dynamics;
pub mod eigfun;
pub mod error;
pub mod mpc;
pub mod numerics;
pub mod predictor;
pub mod spectrum;

pub use dynamics::{TrajectoryDataset, VectorField};
pub use error::{Error, Result};
pub use numerics::{CMat, JordanBlock, Mat, C64};
