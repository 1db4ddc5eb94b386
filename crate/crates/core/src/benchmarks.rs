//! End-to-end synthetic experiments shared by the examples, the CLI and the
//! acceptance suite.

use crate::baselines::{sarima_fit, sarima_forecast, SarimaOrders};
use crate::dataio::{normalize, split_train_val, LoadSeries, WindowSample};
use crate::demand_charge::{dct_error, BatterySpec};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_models, mae, CustomerForecasts, MetricReport};
use crate::forecaster::{build_model, fit, ForecastModel, ModelConfig, TrainConfig};
use crate::nn::{Rng, Tensor};
use crate::synth::peaky_benchmark;
use crate::transfer::{conform, finetune_on, forecast_windows, fresh_on, pretrain_on, pretrained_only, split_target, PipelineConfig};
/// Model names used in benchmark reports.
pub const TFL: &str = "TFL";
pub const PRETRAINED: &str = "Pre-trained";
pub const FRESH: &str = "Fresh";
pub const SARIMA: &str = "SARIMA";

/// Options for [`run_transfer_benchmark`].
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkOptions {
    pub include_sarima: bool,
    pub sarima_orders: Option<SarimaOrders>,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions { include_sarima: true, sarima_orders: None }
    }
}

/// Pretrains on `public`, then for every target computes test-day forecasts
/// of the fine-tuned, pretrained-only and fresh models (and SARIMA when
/// requested) and tabulates their MAE.
pub fn run_transfer_benchmark(
    public: &[LoadSeries],
    targets: &[LoadSeries],
    pc: &PipelineConfig,
    opts: &BenchmarkOptions,
) -> Result<MetricReport> {
    let s = pc.model.samples_per_day;
    let (pretrained, report) = pretrain_on(public, pc)?;
    log::info!("pretrained: best validation MAE {:.5} at epoch {}", report.best_val_mae, report.best_epoch);
    let mut cases = Vec::new();
    for target in targets {
        let target = conform(target, s)?;
        let (train, test, reference) = split_target(&target, s, pc.test_days)?;
        let actual: Vec<Vec<f64>> = test.iter().map(|w| w.target.clone()).collect();
        let (tfl, _) = finetune_on(&pretrained, &train, &reference, pc)?;
        let (fresh, _) = fresh_on(&train, &reference, pc)?;
        let base = pretrained_only(&pretrained, &reference);
        let mut forecasts = vec![
            (TFL.to_string(), forecast_windows(&tfl, &test)?),
            (PRETRAINED.to_string(), forecast_windows(&base, &test)?),
            (FRESH.to_string(), forecast_windows(&fresh, &test)?),
        ];
        if opts.include_sarima {
            let orders = opts.sarima_orders.unwrap_or_else(|| SarimaOrders::default_for(s));
            let (offset, days) = target.full_days().ok_or_else(|| Error::Data("target has no full day".into()))?;
            let first_test = offset + (days - pc.test_days) * s;
            let spec = sarima_fit(&target.values[..first_test], orders)?;
            let days = (0..pc.test_days)
                .map(|d| sarima_forecast(&spec, &target.values[..first_test + d * s], s))
                .collect::<Result<Vec<_>>>()?;
            forecasts.push((SARIMA.to_string(), days));
        }
        cases.push(CustomerForecasts { customer_id: target.customer_id.clone(), actual, forecasts });
    }
    evaluate_models(&cases, None)
}

/// Setup of the demand-charge-conditioned training comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedBenchmarkSpec {
    pub customers: usize,
    pub days: usize,
    pub test_days: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Battery in units of each customer's training maximum.
    pub battery: BatterySpec,
    pub lambda: f64,
}

impl Default for ConditionedBenchmarkSpec {
    fn default() -> Self {
        ConditionedBenchmarkSpec {
            customers: 4,
            days: 84,
            test_days: 14,
            model: ModelConfig {
                conditioned: true,
                ..ModelConfig::compact(24, vec![8, 16, 32, 32, 64], vec![(2, 1), (2, 1), (2, 1), (3, 2), (1, 2)], 64)
            },
            train: TrainConfig { epochs: 150, ..TrainConfig::default() },
            battery: BatterySpec { capacity: 0.5, p_max: 0.25, delta_t: 1.0, s0: 0.25 },
            lambda: 1.0,
        }
    }
}

/// Test-set scores of one trained model, in normalised units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionedOutcome {
    pub mae: f64,
    pub dct_error: f64,
}

/// Scores `model` on normalised test windows: mean per-day MAE and mean
/// per-day absolute DCT error of the forecast (clipped at zero).
pub fn score_dct(model: &ForecastModel, test: &[WindowSample], battery: &BatterySpec) -> Result<ConditionedOutcome> {
    if test.is_empty() {
        return Err(Error::Param("no test windows".into()));
    }
    let refs: Vec<&Tensor> = test.iter().map(|w| &w.input).collect();
    let pred = model.predict_batch(&Tensor::stack(&refs)?)?;
    let s = model.config.samples_per_day;
    let (mut m, mut d) = (0.0, 0.0);
    for (w, p) in test.iter().zip(pred.data().chunks(s)) {
        m += mae(&w.target, p)?;
        let clipped: Vec<f64> = p.iter().map(|v| v.max(0.0)).collect();
        d += dct_error(&w.target, &clipped, battery)?;
    }
    let n = test.len() as f64;
    Ok(ConditionedOutcome { mae: m / n, dct_error: d / n })
}

/// Normalised train, validation and test windows of the peaky-load corpus.
pub fn peaky_windows(spec: &ConditionedBenchmarkSpec, seed: u64) -> Result<(Vec<WindowSample>, Vec<WindowSample>, Vec<WindowSample>)> {
    let s = spec.model.samples_per_day;
    let series = peaky_benchmark(spec.customers, spec.days, s, seed)?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in &series {
        let (tr, te, reference) = split_target(c, s, spec.test_days)?;
        train.extend(normalize(&tr, &reference));
        test.extend(normalize(&te, &reference));
    }
    let (train, val) = split_train_val(&train, 0.7, &mut Rng::new(seed).derive(5))?;
    Ok((train, val, test))
}

/// Trains the same network with the DCT term switched off (`λ = 0`) and on
/// (`λ = spec.lambda`) from identical initial weights, and scores both.
pub fn run_conditioned_benchmark(spec: &ConditionedBenchmarkSpec, seed: u64) -> Result<(ConditionedOutcome, ConditionedOutcome)> {
    let (train, val, test) = peaky_windows(spec, seed)?;
    let tc = TrainConfig { seed, battery: Some(spec.battery), ..spec.train.clone() };
    let run = |lambda: f64| -> Result<ConditionedOutcome> {
        let cfg = ModelConfig { conditioned: true, lambda_dct: lambda, ..spec.model.clone() };
        let mut model = build_model(&cfg, &mut Rng::new(seed))?;
        fit(&mut model, &train, &val, &tc)?;
        score_dct(&model, &test, &spec.battery)
    };
    Ok((run(0.0)?, run(spec.lambda)?))
}
