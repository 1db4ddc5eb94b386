//! The day-ahead convolutional forecaster: architecture, training, weight files.

mod config;
mod model;
mod train;
mod weights;

pub use config::{ActivationOrder, ConditionerInput, EarlyStopMetric, ModelConfig, TrainConfig, TrainLoss};
pub use model::{build_model, predict_day, ForecastModel};
pub use train::{conditioned_loss, evaluate_mae, evaluate_mse, fit, TrainReport};
pub use weights::{load_weights, read_weights, save_weights, write_weights, MAGIC, VERSION};
