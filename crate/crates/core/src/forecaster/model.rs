use super::config::{ActivationOrder, ConditionerInput, ModelConfig};
use crate::demand_charge::BatterySpec;
use crate::error::{Error, Result};
use crate::nn::{Layer, LayerKind, LayerParams, Mode, Rng, Sequential, Tensor};

/// Convolutional day-ahead forecaster, optionally with a DCT conditioner head.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastModel {
    pub config: ModelConfig,
    pub net: Sequential,
    pub head: Option<Sequential>,
    /// Maximum load used to scale inputs and outputs, when known.
    pub normalization_reference: Option<f64>,
}

/// Builds the network for `config`, drawing He-uniform initial weights from
/// `rng`. The conditioner head draws from a derived stream, so the main
/// network's initial weights do not depend on whether it is present.
pub fn build_model(config: &ModelConfig, rng: &mut Rng) -> Result<ForecastModel> {
    config.validate()?;
    let mut layers = Vec::new();
    let mut channels = config.weeks;
    for (i, (&filters, &(ph, pw))) in config.conv_filters.iter().zip(&config.pools).enumerate() {
        let conv = Layer::Param { name: format!("conv{}", i + 1), params: LayerParams::conv2d(filters, channels, rng) };
        let bn = Layer::Param { name: format!("bn{}", i + 1), params: LayerParams::batchnorm(filters) };
        layers.push(conv);
        match config.activation_order {
            ActivationOrder::ReluThenNorm => layers.extend([Layer::Relu, bn]),
            ActivationOrder::NormThenRelu => layers.extend([bn, Layer::Relu]),
        }
        layers.push(Layer::MaxPool { h: ph, w: pw });
        channels = filters;
    }
    let flat = config.flat_features();
    let s = config.samples_per_day;
    layers.push(Layer::Flatten);
    layers.push(Layer::Param { name: "dense".into(), params: LayerParams::dense(LayerKind::Dense, config.dense_width, flat, rng) });
    layers.push(Layer::Relu);
    layers.push(Layer::Dropout { p: config.dropout_p });
    layers.push(Layer::Param { name: "output".into(), params: LayerParams::dense(LayerKind::LinearOutput, s, config.dense_width, rng) });

    let head = config.conditioned.then(|| {
        let mut hr = rng.derive(1);
        let h = config.conditioner_hidden;
        Sequential::new(vec![
            Layer::Param { name: "head_hidden".into(), params: LayerParams::dense(LayerKind::Dense, h, head_input_dim(config), &mut hr) },
            Layer::Relu,
            Layer::Param { name: "head_out".into(), params: LayerParams::dense(LayerKind::LinearOutput, 1, h, &mut hr) },
        ])
    });
    Ok(ForecastModel { config: config.clone(), net: Sequential::new(layers), head, normalization_reference: None })
}

fn head_input_dim(config: &ModelConfig) -> usize {
    let base = match config.conditioner_input {
        ConditionerInput::Forecast => config.samples_per_day,
        ConditionerInput::Features => config.dense_width,
    };
    base + 4
}

/// Inference-mode forecast of one normalised day from a `[4, S, 7]` window.
pub fn predict_day(model: &ForecastModel, window: &Tensor) -> Result<Vec<f64>> {
    model.predict_day(window)
}

impl ForecastModel {
    /// Index of the linear output layer. Its input is the dense feature vector.
    pub fn output_index(&self) -> usize {
        self.net.layers.len() - 1
    }

    /// Number of leading layers whose output does not depend on the training
    /// mode or on trainable parameters: frozen parameter layers and the
    /// parameterless layers between them.
    pub fn frozen_prefix_len(&self) -> usize {
        let mut end = 0;
        for (i, layer) in self.net.layers.iter().enumerate() {
            match layer {
                Layer::Param { params, .. } if params.frozen => end = i + 1,
                Layer::Param { .. } | Layer::Dropout { .. } => break,
                Layer::Relu | Layer::MaxPool { .. } | Layer::Flatten => {}
            }
        }
        // Trailing parameterless layers after the last frozen one are
        // still deterministic, so include them too.
        while end < self.net.layers.len() && matches!(self.net.layers[end], Layer::Relu | Layer::MaxPool { .. } | Layer::Flatten) && end > 0 {
            end += 1;
        }
        end
    }

    /// Freezes every convolutional and batch-norm layer; the dense and output
    /// layers stay trainable.
    pub fn freeze_feature_extractor(&mut self) {
        for layer in &mut self.net.layers {
            if let Some(p) = layer.params_mut() {
                p.frozen = matches!(p.kind, LayerKind::Conv2d | LayerKind::BatchNorm);
            }
        }
    }

    pub fn unfreeze_all(&mut self) {
        for layer in &mut self.net.layers {
            if let Some(p) = layer.params_mut() {
                p.frozen = false;
            }
        }
    }

    fn check_batch(&self, inputs: &Tensor) -> Result<()> {
        let [w, s, d] = self.config.input_shape();
        match inputs.shape() {
            [_, a, b, c] if (*a, *b, *c) == (w, s, d) => Ok(()),
            other => Err(Error::Shape(format!("expected windows of shape [N, {w}, {s}, {d}], got {other:?}"))),
        }
    }

    /// Inference-mode forecasts for a batch `[N, 4, S, 7]`, returned as `[N, S]`.
    pub fn predict_batch(&self, inputs: &Tensor) -> Result<Tensor> {
        self.check_batch(inputs)?;
        let out = self.net.infer(inputs)?;
        if !out.all_finite() {
            return Err(Error::Numeric("forecast contains non-finite values".into()));
        }
        Ok(out)
    }

    pub fn predict_day(&self, window: &Tensor) -> Result<Vec<f64>> {
        let mut shape = vec![1];
        shape.extend_from_slice(window.shape());
        if window.rank() != 3 {
            return Err(Error::Shape(format!("expected a [4, S, 7] window, got {:?}", window.shape())));
        }
        let batch = window.clone().reshape(&shape)?;
        Ok(self.predict_batch(&batch)?.into_data())
    }

    /// Forecast in physical units from a window already scaled by the
    /// model's normalisation reference.
    pub fn predict_day_denormalized(&self, window: &Tensor) -> Result<Vec<f64>> {
        let r = self.reference()?;
        Ok(self.predict_day(window)?.into_iter().map(|v| v * r).collect())
    }

    pub fn reference(&self) -> Result<f64> {
        self.normalization_reference
            .ok_or_else(|| Error::State("model has no normalization reference".into()))
    }

    /// The conditioner head's DCT estimate for a window's forecast, in
    /// normalised units. `battery` must be in the same units.
    pub fn predict_dct(&self, window: &Tensor, battery: &BatterySpec) -> Result<f64> {
        let head = self.head.as_ref().ok_or_else(|| Error::State("model has no conditioner head".into()))?;
        let mut shape = vec![1];
        shape.extend_from_slice(window.shape());
        let batch = window.clone().reshape(&shape)?;
        self.check_batch(&batch)?;
        let k = self.output_index();
        let mut rng = Rng::new(0);
        let (features, _) = self.net.forward_range(0, k, &batch, Mode::Infer, &mut rng)?;
        let (pred, _) = self.net.forward_range(k, k + 1, &features, Mode::Infer, &mut rng)?;
        let h_in = head_input(self.config.conditioner_input, &pred, &features, battery);
        Ok(head.infer(&h_in)?.data()[0])
    }
}

/// `[forecast or features ∥ battery parameters]`, one row per sample.
pub(crate) fn head_input(kind: ConditionerInput, pred: &Tensor, features: &Tensor, battery: &BatterySpec) -> Tensor {
    let base = match kind {
        ConditionerInput::Forecast => pred,
        ConditionerInput::Features => features,
    };
    let n = base.shape()[0];
    let d = base.len() / n;
    let extra = battery.as_features();
    let mut data = Vec::with_capacity(n * (d + 4));
    for row in base.data().chunks(d) {
        data.extend_from_slice(row);
        data.extend_from_slice(&extra);
    }
    Tensor::from_raw(vec![n, d + 4], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_output_shapes() {
        let model = build_model(&ModelConfig::standard(96), &mut Rng::new(0)).unwrap();
        let trace = model.net.shape_trace(&[1, 4, 96, 7]).unwrap();
        let pooled: Vec<_> = model
            .net
            .layers
            .iter()
            .zip(&trace)
            .filter(|(l, _)| matches!(l, Layer::MaxPool { .. }))
            .map(|(_, s)| s.clone())
            .collect();
        assert_eq!(
            pooled,
            vec![vec![1, 32, 24, 7], vec![1, 64, 12, 7], vec![1, 128, 6, 7], vec![1, 256, 3, 3], vec![1, 512, 1, 1]]
        );
        assert_eq!(trace.last().unwrap(), &vec![1, 96]);
        assert!(model.head.is_none());
    }

    #[test]
    fn same_seed_same_weights_and_head_does_not_perturb() {
        let cfg = ModelConfig::compact(8, vec![4, 4, 4, 4, 4], vec![(2, 1), (2, 1), (2, 1), (1, 2), (1, 2)], 8);
        let a = build_model(&cfg, &mut Rng::new(5)).unwrap();
        let b = build_model(&cfg, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        let c = build_model(&ModelConfig { conditioned: true, ..cfg }, &mut Rng::new(5)).unwrap();
        assert_eq!(a.net, c.net);
        assert!(c.head.is_some());
    }

    #[test]
    fn zeroed_output_layer_predicts_zero_and_is_pure() {
        let cfg = ModelConfig::compact(8, vec![4, 4, 4, 4, 4], vec![(2, 1), (2, 1), (2, 1), (1, 2), (1, 2)], 8);
        let mut model = build_model(&cfg, &mut Rng::new(1)).unwrap();
        let mut rng = Rng::new(9);
        let window = Tensor::new(vec![4, 8, 7], (0..224).map(|_| rng.uniform()).collect()).unwrap();
        let a = model.predict_day(&window).unwrap();
        assert_eq!(a, model.predict_day(&window).unwrap());
        let k = model.output_index();
        let out = model.net.layers[k].params_mut().unwrap();
        out.weight.fill(0.0);
        out.bias.fill(0.0);
        assert_eq!(model.predict_day(&window).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn wrong_window_shape_and_missing_reference() {
        let cfg = ModelConfig::compact(8, vec![4, 4, 4, 4, 4], vec![(2, 1), (2, 1), (2, 1), (1, 2), (1, 2)], 8);
        let model = build_model(&cfg, &mut Rng::new(1)).unwrap();
        assert!(matches!(model.predict_day(&Tensor::zeros(&[4, 7, 8])), Err(Error::Shape(_))));
        assert!(matches!(model.predict_day_denormalized(&Tensor::zeros(&[4, 8, 7])), Err(Error::State(_))));
    }

    #[test]
    fn frozen_prefix_covers_conv_blocks() {
        let mut model = build_model(&ModelConfig::standard(96), &mut Rng::new(0)).unwrap();
        assert_eq!(model.frozen_prefix_len(), 0);
        model.freeze_feature_extractor();
        let k = model.frozen_prefix_len();
        assert!(matches!(model.net.layers[k - 1], Layer::Flatten));
        assert_eq!(model.net.layers[k].name(), Some("dense"));
    }
}
