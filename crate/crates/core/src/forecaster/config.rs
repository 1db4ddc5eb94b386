use std::path::PathBuf;

use crate::dataio::{DAYS_PER_WEEK, WEEKS};
use crate::demand_charge::BatterySpec;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

/// Order of activation and normalisation inside each convolutional block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationOrder {
    /// conv → relu → batch norm → pool (as in the reference architecture table)
    ReluThenNorm,
    /// conv → batch norm → relu → pool
    NormThenRelu,
}

impl ActivationOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivationOrder::ReluThenNorm => "relu_bn",
            ActivationOrder::NormThenRelu => "bn_relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu_bn" => Some(ActivationOrder::ReluThenNorm),
            "bn_relu" => Some(ActivationOrder::NormThenRelu),
            _ => None,
        }
    }
}

/// What the DCT conditioner head sees besides the four battery parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionerInput {
    /// The forecast profile itself.
    Forecast,
    /// The dense-layer features feeding the output layer.
    Features,
}

impl ConditionerInput {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionerInput::Forecast => "forecast",
            ConditionerInput::Features => "features",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "forecast" => Some(ConditionerInput::Forecast),
            "features" => Some(ConditionerInput::Features),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub samples_per_day: usize,
    pub weeks: usize,
    pub days_per_week: usize,
    pub conv_filters: Vec<usize>,
    /// `(time, weekday)` pool window after each convolutional block.
    pub pools: Vec<(usize, usize)>,
    pub dense_width: usize,
    pub dropout_p: f64,
    pub activation_order: ActivationOrder,
    pub conditioned: bool,
    pub conditioner_input: ConditionerInput,
    pub conditioner_hidden: usize,
    pub lambda_dct: f64,
    /// Weight of the term that fits the conditioner head to the exact DCT of
    /// the current forecast. Only the head receives its gradient.
    pub surrogate_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::standard(96)
    }
}

impl ModelConfig {
    /// Five conv blocks of 32..512 filters with pools (4,1),(2,1),(2,1),(2,2),(2,2),
    /// a 512-wide dense layer with dropout 0.5, and a linear output of `S`.
    pub fn standard(samples_per_day: usize) -> Self {
        ModelConfig {
            samples_per_day,
            weeks: WEEKS,
            days_per_week: DAYS_PER_WEEK,
            conv_filters: vec![32, 64, 128, 256, 512],
            pools: vec![(4, 1), (2, 1), (2, 1), (2, 2), (2, 2)],
            dense_width: 512,
            dropout_p: 0.5,
            activation_order: ActivationOrder::ReluThenNorm,
            conditioned: false,
            conditioner_input: ConditionerInput::Forecast,
            conditioner_hidden: 64,
            lambda_dct: 1.0,
            surrogate_weight: 1.0,
        }
    }

    /// Same block structure with caller-chosen widths and pools, for short
    /// days or quick experiments.
    pub fn compact(samples_per_day: usize, conv_filters: Vec<usize>, pools: Vec<(usize, usize)>, dense_width: usize) -> Self {
        ModelConfig { conv_filters, pools, dense_width, ..ModelConfig::standard(samples_per_day) }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.weeks, self.samples_per_day, self.days_per_week]
    }

    /// Spatial size after each pool, starting from `(S, 7)`.
    pub fn spatial_chain(&self) -> Vec<(usize, usize)> {
        let mut dims = (self.samples_per_day, self.days_per_week);
        let mut out = Vec::with_capacity(self.pools.len());
        for &(ph, pw) in &self.pools {
            dims = (dims.0 / ph.max(1), dims.1 / pw.max(1));
            out.push(dims);
        }
        out
    }

    pub fn flat_features(&self) -> usize {
        let (h, w) = self.spatial_chain().last().copied().unwrap_or((self.samples_per_day, self.days_per_week));
        h * w * self.conv_filters.last().copied().unwrap_or(self.weeks)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.weeks != WEEKS || self.days_per_week != DAYS_PER_WEEK {
            return err(format!("input must be {WEEKS} weeks × {DAYS_PER_WEEK} days, got {}×{}", self.weeks, self.days_per_week));
        }
        if self.samples_per_day == 0 {
            return err("samples_per_day must be positive".into());
        }
        if self.conv_filters.is_empty() || self.conv_filters.len() != self.pools.len() {
            return err(format!("{} conv blocks but {} pools", self.conv_filters.len(), self.pools.len()));
        }
        if self.conv_filters.iter().any(|&f| f == 0) || self.dense_width == 0 || self.conditioner_hidden == 0 {
            return err("layer widths must be positive".into());
        }
        if self.pools.iter().any(|&(h, w)| h == 0 || w == 0) {
            return err("pool sizes must be positive".into());
        }
        if self.samples_per_day % self.pools[0].0 != 0 {
            return err(format!("samples_per_day {} is not divisible by the first pool {}", self.samples_per_day, self.pools[0].0));
        }
        let mut dims = (self.samples_per_day, self.days_per_week);
        for (i, &(ph, pw)) in self.pools.iter().enumerate() {
            if ph > dims.0 || pw > dims.1 {
                return err(format!("pool {} ({ph},{pw}) underflows spatial size {dims:?} for S = {}", i + 1, self.samples_per_day));
            }
            dims = (dims.0 / ph, dims.1 / pw);
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return err(format!("dropout must be in [0, 1), got {}", self.dropout_p));
        }
        if !(self.lambda_dct >= 0.0 && self.lambda_dct.is_finite()) {
            return err(format!("lambda_dct must be nonnegative, got {}", self.lambda_dct));
        }
        if !(self.surrogate_weight >= 0.0 && self.surrogate_weight.is_finite()) {
            return err(format!("surrogate_weight must be nonnegative, got {}", self.surrogate_weight));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EarlyStopMetric {
    Mae,
    Mse,
}

/// Loss minimised by gradient descent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainLoss {
    /// Squared error summed over the day, averaged over the batch.
    SquaredError,
    /// Mean absolute error.
    AbsoluteError,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub loss: TrainLoss,
    pub early_stop_metric: EarlyStopMetric,
    /// Stop after this many epochs without a new best validation score.
    pub patience: Option<usize>,
    /// Best-so-far weights are written here whenever validation improves.
    pub checkpoint_path: Option<PathBuf>,
    /// Battery used for the DCT term of a conditioned model, in the same
    /// normalised units as the profiles.
    pub battery: Option<BatterySpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            loss: TrainLoss::SquaredError,
            early_stop_metric: EarlyStopMetric::Mae,
            patience: None,
            checkpoint_path: None,
            battery: None,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning defaults: up to 200 epochs, patience 20.
    pub fn finetune() -> Self {
        TrainConfig { epochs: 200, patience: Some(20), ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Param("epochs and batch_size must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Param(format!("learning rate must be positive, got {}", self.adam.lr)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_chain() {
        let c = ModelConfig::standard(96);
        c.validate().unwrap();
        assert_eq!(c.spatial_chain(), vec![(24, 7), (12, 7), (6, 7), (3, 3), (1, 1)]);
        assert_eq!(c.flat_features(), 512);
    }

    #[test]
    fn pool_underflow_is_a_config_error() {
        assert!(matches!(ModelConfig::standard(8).validate(), Err(Error::Config(_))));
        assert!(matches!(ModelConfig::standard(24).validate(), Err(Error::Config(_))));
        assert!(matches!(ModelConfig::standard(98).validate(), Err(Error::Config(_))));
        ModelConfig::standard(64).validate().unwrap();
    }
}
