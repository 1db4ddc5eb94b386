//! Pretrain on many public customers, then fine-tune the dense head on one
//! target customer with the convolutional stack frozen.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dataio::{
    build_windows, history_to_window, load_csv_series, load_manifest, normalize, resample, split_train_val,
    LoadSeries, NormalizationRef, RefSource, WindowSample,
};
use crate::error::{Error, Result};
use crate::forecaster::{build_model, fit, load_weights, save_weights, ForecastModel, ModelConfig, TrainConfig, TrainReport};
use crate::nn::Rng;
use crate::util::write_atomic;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    /// Training budget for a model fitted on target data alone.
    pub fresh: TrainConfig,
    /// Share of windows used for training; the rest validate.
    pub train_fraction: f64,
    /// Trailing days of each target series held out for testing.
    pub test_days: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: ModelConfig::default(),
            pretrain: TrainConfig::default(),
            finetune: TrainConfig::finetune(),
            fresh: TrainConfig::default(),
            train_fraction: 0.7,
            test_days: 7,
            seed: 0,
        }
    }
}

/// A saved pretrained model and what is known about how it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub path: PathBuf,
    pub val_mae: f64,
    pub best_epoch: usize,
    pub seed: u64,
    pub epochs_run: usize,
}

impl Checkpoint {
    /// `<weights>.meta`, written next to the weight file.
    pub fn metadata_path(weights: &Path) -> PathBuf {
        let mut s = weights.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    /// Run metadata as `key=value` lines. The creation time sits alone on the
    /// last line so re-runs differ only there.
    pub fn metadata(&self, reference: Option<f64>) -> String {
        format!(
            "seed={}\nepochs_run={}\nbest_epoch={}\nbest_val_mae={}\nnormalization_reference={}\ncreated={}\n",
            self.seed,
            self.epochs_run,
            self.best_epoch,
            self.val_mae,
            reference.map_or("per-customer".to_string(), |r| r.to_string()),
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        )
    }
}

/// Converts a series to `samples_per_day` readings per day if needed.
pub fn conform(series: &LoadSeries, samples_per_day: usize) -> Result<LoadSeries> {
    if series.samples_per_day() == Some(samples_per_day) {
        return Ok(series.clone());
    }
    if samples_per_day == 0 || 86_400 % samples_per_day != 0 {
        return Err(Error::Config(format!("{samples_per_day} samples per day is not a whole number of seconds")));
    }
    let interval = chrono::TimeDelta::seconds(86_400 / samples_per_day as i64);
    resample(series, interval)
}

/// Windows of every public customer, each scaled by its own maximum.
pub fn pretrain_windows(public: &[LoadSeries], samples_per_day: usize) -> Result<Vec<WindowSample>> {
    if public.len() < 2 {
        return Err(Error::Data(format!("pretraining needs at least 2 customers, got {}", public.len())));
    }
    let mut out = Vec::new();
    for series in public {
        let series = conform(series, samples_per_day)?;
        let windows = build_windows(&series, samples_per_day)
            .map_err(|e| Error::Data(format!("customer {}: {e}", series.customer_id)))?;
        let reference = NormalizationRef::from_values(&series.values, RefSource::PerCustomerPretrain)
            .map_err(|e| Error::Data(format!("customer {}: {e}", series.customer_id)))?;
        out.extend(normalize(&windows, &reference));
    }
    Ok(out)
}

/// Trains a freshly built model on the pooled public windows with a seeded
/// train/validation split. The returned model holds the best epoch.
pub fn pretrain_on(public: &[LoadSeries], pc: &PipelineConfig) -> Result<(ForecastModel, TrainReport)> {
    let windows = pretrain_windows(public, pc.model.samples_per_day)?;
    let mut rng = Rng::new(pc.seed);
    let mut model = build_model(&pc.model, &mut rng)?;
    let (train, val) = split_train_val(&windows, pc.train_fraction, &mut rng.derive(2))?;
    let tc = TrainConfig { seed: pc.seed, ..pc.pretrain.clone() };
    let report = fit(&mut model, &train, &val, &tc)?;
    Ok((model, report))
}

/// Loads every series in `manifest`, pretrains, and writes the weights to
/// `out` plus a metadata file beside it.
pub fn pretrain(manifest: &Path, out: &Path, pc: &PipelineConfig) -> Result<Checkpoint> {
    let entries = load_manifest(manifest)?;
    let public = entries.iter().map(|e| load_csv_series(&e.path)).collect::<Result<Vec<_>>>()?;
    let (model, report) = pretrain_on(&public, pc)?;
    save_weights(&model, out)?;
    let ck = Checkpoint {
        path: out.to_path_buf(),
        val_mae: report.best_val_mae,
        best_epoch: report.best_epoch,
        seed: pc.seed,
        epochs_run: report.val_mae.len(),
    };
    write_atomic(&Checkpoint::metadata_path(out), ck.metadata(None).as_bytes())?;
    Ok(ck)
}

/// Target windows split chronologically: the last `test_days` windows are
/// the test set. Also returns the maximum load seen before the first test
/// day, which is the target's normalisation reference.
pub fn split_target(series: &LoadSeries, samples_per_day: usize, test_days: usize) -> Result<(Vec<WindowSample>, Vec<WindowSample>, NormalizationRef)> {
    let series = conform(series, samples_per_day)?;
    let windows = build_windows(&series, samples_per_day)?;
    if windows.len() <= test_days + 1 {
        return Err(Error::Data(format!(
            "customer {}: {} windows cannot cover {test_days} test days and at least 2 training days",
            series.customer_id,
            windows.len()
        )));
    }
    let cut = windows.len() - test_days;
    let train = windows[..cut].to_vec();
    let test = windows[cut..].to_vec();
    let values: Vec<f64> = train
        .iter()
        .flat_map(|w| w.input.data().iter().chain(&w.target))
        .copied()
        .collect();
    let reference = NormalizationRef::from_values(&values, RefSource::TargetTrainSet)
        .map_err(|e| Error::Data(format!("customer {}: {e}", series.customer_id)))?;
    Ok((train, test, reference))
}

fn check_compatible(model: &ForecastModel, pc: &PipelineConfig) -> Result<()> {
    if model.config.samples_per_day != pc.model.samples_per_day {
        return Err(Error::Config(format!(
            "checkpoint has {} samples per day, pipeline expects {}",
            model.config.samples_per_day, pc.model.samples_per_day
        )));
    }
    Ok(())
}

fn train_on_target(model: &mut ForecastModel, train_raw: &[WindowSample], reference: &NormalizationRef, tc: &TrainConfig, pc: &PipelineConfig) -> Result<TrainReport> {
    let windows = normalize(train_raw, reference);
    let (train, val) = split_train_val(&windows, pc.train_fraction, &mut Rng::new(pc.seed).derive(3))
        .map_err(|e| Error::Data(format!("target training windows: {e}")))?;
    let tc = TrainConfig { seed: pc.seed, ..tc.clone() };
    let report = fit(model, &train, &val, &tc)?;
    model.normalization_reference = Some(reference.max_value);
    Ok(report)
}

/// Freezes the convolutional and batch-norm layers of `pretrained` and
/// retrains the rest on the target's normalised training windows.
pub fn finetune_on(pretrained: &ForecastModel, train_raw: &[WindowSample], reference: &NormalizationRef, pc: &PipelineConfig) -> Result<(ForecastModel, TrainReport)> {
    check_compatible(pretrained, pc)?;
    let mut model = pretrained.clone();
    model.freeze_feature_extractor();
    let report = train_on_target(&mut model, train_raw, reference, &pc.finetune, pc)?;
    Ok((model, report))
}

/// A model trained from scratch on the target's windows alone.
pub fn fresh_on(train_raw: &[WindowSample], reference: &NormalizationRef, pc: &PipelineConfig) -> Result<(ForecastModel, TrainReport)> {
    let mut model = build_model(&pc.model, &mut Rng::new(pc.seed).derive(4))?;
    let report = train_on_target(&mut model, train_raw, reference, &pc.fresh, pc)?;
    Ok((model, report))
}

/// The pretrained model applied to the target unchanged, scaled by the
/// target's training maximum.
pub fn pretrained_only(pretrained: &ForecastModel, reference: &NormalizationRef) -> ForecastModel {
    let mut model = pretrained.clone();
    model.normalization_reference = Some(reference.max_value);
    model
}

/// Loads a checkpoint and a target series and fine-tunes on everything but
/// the trailing test days.
pub fn finetune(checkpoint: &Path, target: &Path, pc: &PipelineConfig) -> Result<(ForecastModel, TrainReport)> {
    let pretrained = load_weights(checkpoint)?;
    check_compatible(&pretrained, pc)?;
    let series = load_csv_series(target)?;
    let (train, _, reference) = split_target(&series, pc.model.samples_per_day, pc.test_days)?;
    finetune_on(&pretrained, &train, &reference, pc)
}

/// Next-day forecast in kW from 28 days of kW history (oldest first):
/// normalise with the model's reference, predict, scale back.
pub fn predict_next_day(model: &ForecastModel, history: &[f64]) -> Result<Vec<f64>> {
    let r = model.reference()?;
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("history contains non-finite values".into()));
    }
    let scaled: Vec<f64> = history.iter().map(|v| v / r).collect();
    let window = history_to_window(&scaled, model.config.samples_per_day)?;
    Ok(model.predict_day(&window)?.into_iter().map(|v| v * r).collect())
}

/// Forecasts every test window of a target in kW.
pub fn forecast_windows(model: &ForecastModel, windows: &[WindowSample]) -> Result<Vec<Vec<f64>>> {
    let r = model.reference()?;
    let reference = NormalizationRef::new(r, RefSource::TargetTrainSet)?;
    normalize(windows, &reference)
        .iter()
        .map(|w| Ok(model.predict_day(&w.input)?.into_iter().map(|v| v * r).collect()))
        .collect()
}

/// Reads the `.meta` file written by [`pretrain`].
pub fn read_metadata(weights: &Path) -> Result<String> {
    let p = Checkpoint::metadata_path(weights);
    fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
}
