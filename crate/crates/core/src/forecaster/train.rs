use super::config::{ConditionerInput, EarlyStopMetric, TrainConfig, TrainLoss};
use super::model::{head_input, ForecastModel};
use super::weights::save_weights;
use crate::dataio::WindowSample;
use crate::demand_charge::{compute_dct, default_tol, BatterySpec};
use crate::error::{Error, Result};
use crate::nn::{mae_loss, mse_loss, AdamState, Mode, Rng, Tensor};

/// Per-epoch history of one [`fit`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean training objective per sample, including the DCT term.
    pub train_loss: Vec<f64>,
    /// Validation MAE per element, in the units of the samples.
    pub val_mae: Vec<f64>,
    /// Validation squared error summed per day, averaged over days.
    pub val_mse: Vec<f64>,
    /// Zero-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
}

/// Forecast loss plus the conditioner penalty:
/// `mse(pred, target) + λ·|true_dct − pred_dct|`.
pub fn conditioned_loss(pred: &[f64], target: &[f64], pred_dct: f64, true_dct: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Param(format!("lambda must be nonnegative, got {lambda}")));
    }
    let p = Tensor::new(vec![1, pred.len()], pred.to_vec())?;
    let t = Tensor::new(vec![1, target.len()], target.to_vec())?;
    let (mse, _) = mse_loss(&p, &t)?;
    Ok(mse + lambda * (true_dct - pred_dct).abs())
}

/// DCT of a profile with negative entries clipped to zero.
fn dct_of(profile: &[f64], battery: &BatterySpec) -> Result<f64> {
    let clipped: Vec<f64> = profile.iter().map(|v| v.max(0.0)).collect();
    compute_dct(&clipped, battery, default_tol(&clipped))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Samples pushed through the frozen prefix once, stacked batch-first.
struct Prepared {
    inputs: Tensor,
    targets: Tensor,
    true_dct: Vec<f64>,
}

const CHUNK: usize = 64;

fn concat_rows(parts: Vec<Tensor>) -> Tensor {
    let mut shape = parts[0].shape().to_vec();
    shape[0] = parts.iter().map(|t| t.shape()[0]).sum();
    let data = parts.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::from_raw(shape, data)
}

fn prepare(model: &ForecastModel, samples: &[WindowSample], prefix: usize, battery: Option<&BatterySpec>) -> Result<Prepared> {
    let in_shape = model.config.input_shape();
    let s = model.config.samples_per_day;
    for (i, smp) in samples.iter().enumerate() {
        if smp.input.shape() != in_shape || smp.target.len() != s {
            return Err(Error::Shape(format!(
                "sample {i}: input {:?} / target {} does not match model ({in_shape:?} / {s})",
                smp.input.shape(),
                smp.target.len()
            )));
        }
    }
    let mut rng = Rng::new(0);
    let mut parts = Vec::new();
    for chunk in samples.chunks(CHUNK) {
        let refs: Vec<&Tensor> = chunk.iter().map(|x| &x.input).collect();
        let x = Tensor::stack(&refs)?;
        parts.push(if prefix == 0 { x } else { model.net.forward_range(0, prefix, &x, Mode::Infer, &mut rng)?.0 });
    }
    let targets = Tensor::new(vec![samples.len(), s], samples.iter().flat_map(|x| x.target.iter().copied()).collect())?;
    let true_dct = match battery {
        Some(b) => samples.iter().map(|x| dct_of(&x.target, b)).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    Ok(Prepared { inputs: concat_rows(parts), targets, true_dct })
}

fn predict_prepared(model: &ForecastModel, data: &Prepared, prefix: usize) -> Result<Tensor> {
    let mut rng = Rng::new(0);
    let n = data.inputs.shape()[0];
    let mut parts = Vec::new();
    let end = model.net.layers.len();
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let x = data.inputs.select_rows(&idx);
        parts.push(model.net.forward_range(prefix, end, &x, Mode::Infer, &mut rng)?.0);
    }
    Ok(concat_rows(parts))
}

fn scores(pred: &Tensor, targets: &Tensor) -> Result<(f64, f64)> {
    let (mae, _) = mae_loss(pred, targets)?;
    let (mse, _) = mse_loss(pred, targets)?;
    Ok((mae, mse))
}

/// Inference-mode MAE over every element of every sample.
pub fn evaluate_mae(model: &ForecastModel, samples: &[WindowSample]) -> Result<f64> {
    Ok(evaluate(model, samples)?.0)
}

/// Inference-mode squared error summed per day and averaged over days.
pub fn evaluate_mse(model: &ForecastModel, samples: &[WindowSample]) -> Result<f64> {
    Ok(evaluate(model, samples)?.1)
}

fn evaluate(model: &ForecastModel, samples: &[WindowSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Param("no samples to evaluate".into()));
    }
    let data = prepare(model, samples, 0, None)?;
    scores(&predict_prepared(model, &data, 0)?, &data.targets)
}

/// Trains the non-frozen parameters with Adam on shuffled minibatches,
/// scores the validation set after every epoch, and leaves the model holding
/// the weights of the best-scoring epoch.
///
/// Frozen leading layers are evaluated once up front. For a conditioned
/// model the conditioner head sees the forecast (or the dense features) and
/// the battery parameters; the forecast receives the gradient of
/// `λ·|g(y) − ĝ|` while the head is additionally fitted to the exact DCT of
/// the current forecast.
pub fn fit(model: &mut ForecastModel, train: &[WindowSample], val: &[WindowSample], tc: &TrainConfig) -> Result<TrainReport> {
    tc.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Param(format!("need non-empty train and validation sets, got {} and {}", train.len(), val.len())));
    }
    model.config.validate()?;
    let battery = match (&model.head, &tc.battery) {
        (Some(_), Some(b)) => {
            b.validate()?;
            Some(*b)
        }
        (Some(_), None) => return Err(Error::Param("a conditioned model needs a battery to train".into())),
        (None, _) => None,
    };
    let prefix = model.frozen_prefix_len();
    let train_data = prepare(model, train, prefix, battery.as_ref())?;
    let val_data = prepare(model, val, prefix, None)?;
    let n = train.len();
    let k = model.output_index();
    let lambda = model.config.lambda_dct;
    let surrogate = model.config.surrogate_weight;
    let kind = model.config.conditioner_input;

    let mut order_rng = Rng::new(tc.seed);
    let mut dropout_rng = order_rng.derive(11);
    let mut adam = AdamState::new(tc.adam);
    let mut head_adam = AdamState::new(tc.adam);
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_mae: Vec::new(),
        val_mse: Vec::new(),
        best_epoch: 0,
        best_val_mae: f64::INFINITY,
        stopped_early: false,
    };
    let mut best_score = f64::INFINITY;
    let mut best = (model.net.clone(), model.head.clone());
    let mut since_best = 0;

    for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let b = batch.len();
            let x = train_data.inputs.select_rows(batch);
            let y = train_data.targets.select_rows(batch);
            let (features, cache_a) = model.net.forward_range(prefix, k, &x, Mode::Train, &mut dropout_rng)?;
            let (pred, cache_b) = model.net.forward_range(k, k + 1, &features, Mode::Train, &mut dropout_rng)?;
            let (mut loss, mut dpred) = match tc.loss {
                TrainLoss::SquaredError => mse_loss(&pred, &y)?,
                TrainLoss::AbsoluteError => mae_loss(&pred, &y)?,
            };
            let mut dfeat_extra: Option<Vec<f64>> = None;
            let mut head_grads = None;
            if let (Some(head), Some(bat)) = (&model.head, &battery) {
                let h_in = head_input(kind, &pred, &features, bat);
                let (ghat, head_cache) = head.forward(&h_in, Mode::Train, &mut Rng::new(0))?;
                let s = model.config.samples_per_day;
                let mut d_lambda = vec![0.0; b];
                let mut d_surrogate = vec![0.0; b];
                for (r, &i) in batch.iter().enumerate() {
                    let est = ghat.data()[r];
                    let target_dct = train_data.true_dct[i];
                    loss += lambda * (est - target_dct).abs() / b as f64;
                    d_lambda[r] = lambda * sign(est - target_dct) / b as f64;
                    if surrogate > 0.0 {
                        let own = dct_of(&pred.data()[r * s..(r + 1) * s], bat)?;
                        d_surrogate[r] = surrogate * sign(est - own) / b as f64;
                    }
                }
                let (mut hg, dh) = head.backward(&head_cache, &Tensor::from_raw(vec![b, 1], d_lambda))?;
                let (hg_s, _) = head.backward(&head_cache, &Tensor::from_raw(vec![b, 1], d_surrogate))?;
                hg.accumulate(hg_s)?;
                head_grads = Some(hg);
                let width = dh.shape()[1];
                let base = width - 4;
                let pick = |r: usize, c: usize| dh.data()[r * width + c];
                match kind {
                    ConditionerInput::Forecast => {
                        for (idx, v) in dpred.data_mut().iter_mut().enumerate() {
                            *v += pick(idx / base, idx % base);
                        }
                    }
                    ConditionerInput::Features => {
                        let data = (0..b * base).map(|idx| pick(idx / base, idx % base)).collect();
                        dfeat_extra = Some(data);
                    }
                }
            }
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss in epoch {epoch}")));
            }
            total += loss * b as f64;
            let (mut grads, mut dfeat) = model.net.backward(&cache_b, &dpred)?;
            if let Some(extra) = dfeat_extra {
                dfeat.data_mut().iter_mut().zip(extra).for_each(|(a, e)| *a += e);
            }
            let (grads_a, _) = model.net.backward(&cache_a, &dfeat)?;
            grads.accumulate(grads_a)?;
            model.net.commit_running_stats(&cache_a);
            adam.step(&mut model.net, &grads)?;
            if let (Some(head), Some(hg)) = (model.head.as_mut(), head_grads) {
                head_adam.step(head, &hg)?;
            }
        }
        report.train_loss.push(total / n as f64);

        let (mae, mse) = scores(&predict_prepared(model, &val_data, prefix)?, &val_data.targets)?;
        if !mae.is_finite() || !mse.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation error in epoch {epoch}")));
        }
        report.val_mae.push(mae);
        report.val_mse.push(mse);
        let score = match tc.early_stop_metric {
            EarlyStopMetric::Mae => mae,
            EarlyStopMetric::Mse => mse,
        };
        if score < best_score {
            best_score = score;
            report.best_epoch = epoch;
            report.best_val_mae = mae;
            best = (model.net.clone(), model.head.clone());
            since_best = 0;
            if let Some(path) = &tc.checkpoint_path {
                save_weights(model, path)?;
            }
        } else {
            since_best += 1;
            if tc.patience.is_some_and(|p| since_best >= p) {
                report.stopped_early = true;
                break;
            }
        }
        log::debug!("epoch {epoch}: train {:.6} val_mae {mae:.6}", total / n as f64);
    }
    (model.net, model.head) = best;
    Ok(report)
}
