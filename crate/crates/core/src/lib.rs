//! Day-ahead energy forecasting under limited target data.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense tensors and the handful of layers the forecaster needs,
//!   with hand-written backward passes, Adam, and a finite-difference checker.
//! - [`forecaster`]: the convolutional day-ahead model, its training loop, the
//!   optional demand-charge conditioner head, and the `LCW1` weight format.
//! - [`dataio`]: CSV ingestion, resampling, 4-week windowing, max-normalization.
//! - [`transfer`]: pretrain / freeze / fine-tune / predict orchestration.
//! - [`baselines`]: seasonal-naive and a conditional-sum-of-squares SARIMA.
//! - [`demand_charge`]: battery dispatch feasibility and demand charge threshold (DCT) solvers.
//! - [`evaluation`]: MAE, NA.MAE, TNA.MAE aggregation and report emission.
//! - [`synth`]: synthetic load families used by the examples and tests.
//! - [`cli`]: the `loadcast` command-line front end.

pub mod baselines;
pub mod benchmarks;
pub mod cli;
pub mod dataio;
pub mod demand_charge;
pub mod error;
pub mod evaluation;
pub mod forecaster;
pub mod nn;
pub mod synth;
pub mod transfer;
pub mod util;

pub use error::{Error, Result};
pub use nn::{Rng, Tensor};
