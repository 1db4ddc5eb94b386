//! Command-line front end.
//!
//! Every option can also be given in a `--config` file of `key = value`
//! lines, where the key is the option name with dashes or underscores.
//! Flags win over the file, the file wins over built-in defaults. Exit codes:
//! 0 success, 1 usage or configuration error, 2 data or format error,
//! 3 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;

use crate::baselines::{sarima_fit, sarima_forecast, seasonal_naive_forecast, SarimaOrders};
use crate::benchmarks::{run_transfer_benchmark, BenchmarkOptions};
use crate::dataio::{load_csv_series, load_manifest, HISTORY_DAYS};
use crate::demand_charge::{compute_dct, default_tol, simulate_feasibility, BatterySpec};
use crate::error::{Error, Result};
use crate::evaluation::{MetricReport, REFERENCE_MODEL};
use crate::forecaster::{
    build_model, load_weights, save_weights, ActivationOrder, ConditionerInput, EarlyStopMetric, ModelConfig, TrainConfig,
};
use crate::nn::{gradcheck, Rng, Tensor};
use crate::synth::{transfer_benchmark, write_corpus, TransferBenchmarkSpec};
use crate::transfer::{conform, finetune, predict_next_day, pretrain, Checkpoint, PipelineConfig};
use crate::util::write_atomic;

#[derive(Parser, Debug)]
#[command(name = "loadcast", version, about = "Day-ahead load forecasting with transfer learning and demand-charge tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic public + target corpus with manifests.
    Synth(SynthArgs),
    /// Train the forecaster on every customer of a manifest.
    Pretrain(PretrainArgs),
    /// Fine-tune a pretrained checkpoint on one target (or every target of a manifest).
    Finetune(FinetuneArgs),
    /// Forecast the day after a load series ends.
    Predict(PredictArgs),
    /// TNA.MAE report from an MAE table, or a full benchmark run.
    Evaluate(EvaluateArgs),
    /// Seasonal-naive or SARIMA next-day forecast.
    Baseline(BaselineArgs),
    /// Demand-charge threshold of a load profile.
    Dct(DctArgs),
    /// Finite-difference check of backpropagation on a reduced network.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples_per_day: Option<usize>,
    #[arg(long)]
    public_customers: Option<usize>,
    #[arg(long)]
    public_weeks: Option<usize>,
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    target_train_weeks: Option<usize>,
    #[arg(long)]
    target_test_weeks: Option<usize>,
    #[arg(long)]
    public_noise: Option<f64>,
    #[arg(long)]
    target_noise: Option<f64>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    samples_per_day: Option<usize>,
    /// Comma-separated filters per conv block, e.g. `32,64,128,256,512`.
    #[arg(long)]
    filters: Option<String>,
    /// Comma-separated `HxW` pools per block, e.g. `4x1,2x1,2x1,2x2,2x2`.
    #[arg(long)]
    pools: Option<String>,
    #[arg(long)]
    dense_width: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// `relu_bn` or `bn_relu`.
    #[arg(long)]
    activation_order: Option<String>,
    #[arg(long)]
    conditioned: Option<bool>,
    #[arg(long)]
    lambda_dct: Option<f64>,
    #[arg(long)]
    surrogate_weight: Option<f64>,
    /// `forecast` or `features`.
    #[arg(long)]
    conditioner_input: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// `mae` or `mse`.
    #[arg(long)]
    early_stop: Option<String>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Battery for conditioned training, in units of the normalised load.
    #[arg(long)]
    battery_capacity: Option<f64>,
    #[arg(long)]
    battery_pmax: Option<f64>,
    #[arg(long)]
    battery_dt: Option<f64>,
    #[arg(long)]
    battery_s0: Option<f64>,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `customer_id,path` manifest of public series.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Weight file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Target load series (CSV).
    #[arg(long)]
    target: Option<PathBuf>,
    /// Fine-tune every target of this manifest, in parallel.
    #[arg(long)]
    all: Option<PathBuf>,
    /// Weight file, or output directory with `--all`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    samples_per_day: Option<usize>,
    #[arg(long)]
    test_days: Option<usize>,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fine-tuned weight file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Load series whose last 28 full days are the history.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Long-format `customer_id,model,mae_kw` table.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Public manifest for a full benchmark run.
    #[arg(long)]
    public: Option<PathBuf>,
    /// Target manifest for a full benchmark run.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long)]
    test_days: Option<usize>,
    #[arg(long)]
    sarima: Option<bool>,
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    ours: Option<String>,
    /// Per-row report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json_out: Option<PathBuf>,
    #[arg(long)]
    long_out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    series: Option<PathBuf>,
    /// `sarima` or `naive`.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    samples_per_day: Option<usize>,
    /// Non-seasonal `p,d,q`.
    #[arg(long)]
    order: Option<String>,
    /// Seasonal `P,D,Q`.
    #[arg(long)]
    seasonal_order: Option<String>,
    /// Seasonal period; defaults to samples per day.
    #[arg(long)]
    period: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DctArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV with a `load_kw` column.
    #[arg(long)]
    load: Option<PathBuf>,
    /// Battery energy capacity (kWh).
    #[arg(long)]
    capacity: Option<f64>,
    /// Battery power limit (kW).
    #[arg(long)]
    pmax: Option<f64>,
    /// Interval length (h).
    #[arg(long)]
    dt: Option<f64>,
    /// Initial state of charge (kWh).
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Write the greedy dispatch at the threshold to this CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Largest acceptable relative error.
    #[arg(long)]
    threshold: Option<f64>,
}

/// Values from the config file, plus a record of every resolved setting.
struct Settings {
    source: Option<PathBuf>,
    file: BTreeMap<String, String>,
    resolved: Mutex<Vec<(String, String)>>,
}

impl Settings {
    fn load(path: Option<&Path>, command: &str) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let allowed: Vec<String> = Cli::command()
                .find_subcommand(command)
                .map(|c| c.get_arguments().map(|a| a.get_id().to_string()).filter(|id| id != "config").collect())
                .unwrap_or_default();
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("{}:{}: expected `key = value`", path.display(), i + 1)))?;
                let key = k.trim().replace('-', "_");
                if !allowed.contains(&key) {
                    return Err(Error::Config(format!("{}:{}: unknown key `{}` for `{command}`", path.display(), i + 1, k.trim())));
                }
                file.insert(key, v.trim().to_string());
            }
        }
        Ok(Settings { source: path.map(Path::to_path_buf), file, resolved: Mutex::new(Vec::new()) })
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.lock().expect("settings lock").push((key.to_string(), value));
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                let src = self.source.as_ref().map_or(String::new(), |p| p.display().to_string());
                Error::Config(format!("{src}: bad value {v:?} for `{key}`"))
            }),
        }
    }

    fn opt<T: FromStr + Display>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        self.opt_or(key, flag, None)
    }

    fn opt_or<T: FromStr + Display>(&self, key: &str, flag: Option<T>, default: Option<T>) -> Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?.or(default),
        };
        self.record(key, v.as_ref().map_or("(unset)".into(), |v| v.to_string()));
        Ok(v)
    }

    fn get<T: FromStr + Display>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    fn path(&self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file.get(key).map(PathBuf::from),
        };
        self.record(key, v.as_ref().map_or("(unset)".into(), |p| p.display().to_string()));
        Ok(v)
    }

    fn required_path(&self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.path(key, flag)?.ok_or_else(|| Error::Config(format!("--{} is required", key.replace('_', "-"))))
    }

    /// An input path that must exist before any work starts.
    fn input(&self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        let p = self.required_path(key, flag)?;
        if !p.is_file() {
            return Err(Error::Data(format!("--{}: {} does not exist or is not a file", key.replace('_', "-"), p.display())));
        }
        Ok(p)
    }

    fn print(&self) {
        eprintln!("# resolved configuration");
        for (k, v) in self.resolved.lock().expect("settings lock").iter() {
            eprintln!("{k} = {v}");
        }
    }
}

fn parse_list<T: FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',').map(|x| x.trim().parse().map_err(|_| Error::Config(format!("--{key}: bad list item {x:?}")))).collect()
}

fn parse_pools(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|p| {
            let (a, b) = p.trim().split_once('x').ok_or_else(|| Error::Config(format!("--pools: expected HxW, got {p:?}")))?;
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(Error::Config(format!("--pools: expected HxW, got {p:?}"))),
            }
        })
        .collect()
}

fn model_config(st: &Settings, a: ModelArgs) -> Result<ModelConfig> {
    let s = st.get("samples_per_day", a.samples_per_day, 96)?;
    let base = ModelConfig::standard(s);
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let filters = st.get("filters", a.filters, join(&base.conv_filters))?;
    let pools = st.get("pools", a.pools, base.pools.iter().map(|(h, w)| format!("{h}x{w}")).collect::<Vec<_>>().join(","))?;
    let order = st.get("activation_order", a.activation_order, base.activation_order.as_str().to_string())?;
    let cin = st.get("conditioner_input", a.conditioner_input, base.conditioner_input.as_str().to_string())?;
    let cfg = ModelConfig {
        conv_filters: parse_list("filters", &filters)?,
        pools: parse_pools(&pools)?,
        dense_width: st.get("dense_width", a.dense_width, base.dense_width)?,
        dropout_p: st.get("dropout", a.dropout, base.dropout_p)?,
        activation_order: ActivationOrder::parse(&order).ok_or_else(|| Error::Config(format!("--activation-order: unknown value {order:?}")))?,
        conditioned: st.get("conditioned", a.conditioned, false)?,
        lambda_dct: st.get("lambda_dct", a.lambda_dct, base.lambda_dct)?,
        surrogate_weight: st.get("surrogate_weight", a.surrogate_weight, base.surrogate_weight)?,
        conditioner_input: ConditionerInput::parse(&cin).ok_or_else(|| Error::Config(format!("--conditioner-input: unknown value {cin:?}")))?,
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Training settings plus the split fraction and seed.
fn train_config(st: &Settings, a: TrainArgs, defaults: &TrainConfig) -> Result<(TrainConfig, f64, u64)> {
    let seed = st.get("seed", a.seed, 0u64)?;
    let metric = st.get("early_stop", a.early_stop, "mae".to_string())?;
    let battery = match (
        st.opt("battery_capacity", a.battery_capacity)?,
        st.opt("battery_pmax", a.battery_pmax)?,
        st.opt("battery_dt", a.battery_dt)?,
        st.opt("battery_s0", a.battery_s0)?,
    ) {
        (None, None, None, None) => None,
        (Some(c), Some(p), dt, s0) => Some(BatterySpec::new(c, p, dt.unwrap_or(1.0), s0.unwrap_or(0.0))?),
        _ => return Err(Error::Config("--battery-capacity and --battery-pmax must be given together".into())),
    };
    let tc = TrainConfig {
        epochs: st.get("epochs", a.epochs, defaults.epochs)?,
        batch_size: st.get("batch_size", a.batch_size, defaults.batch_size)?,
        adam: crate::nn::AdamConfig { lr: st.get("lr", a.lr, defaults.adam.lr)?, ..defaults.adam },
        seed,
        patience: st.opt_or("patience", a.patience, defaults.patience)?,
        early_stop_metric: match metric.as_str() {
            "mae" => EarlyStopMetric::Mae,
            "mse" => EarlyStopMetric::Mse,
            other => return Err(Error::Config(format!("--early-stop: expected mae or mse, got {other:?}"))),
        },
        battery,
        ..defaults.clone()
    };
    tc.validate().map_err(|e| Error::Config(e.to_string()))?;
    let fraction = st.get("train_fraction", a.train_fraction, 0.7)?;
    Ok((tc, fraction, seed))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let st = Settings::load(a.config.as_deref(), "synth")?;
    let d = TransferBenchmarkSpec::default();
    let out = st.required_path("out", a.out)?;
    let seed = st.get("seed", a.seed, 0)?;
    let spec = TransferBenchmarkSpec {
        samples_per_day: st.get("samples_per_day", a.samples_per_day, d.samples_per_day)?,
        public_customers: st.get("public_customers", a.public_customers, d.public_customers)?,
        public_weeks: st.get("public_weeks", a.public_weeks, d.public_weeks)?,
        targets: st.get("targets", a.targets, d.targets)?,
        target_train_weeks: st.get("target_train_weeks", a.target_train_weeks, d.target_train_weeks)?,
        target_test_weeks: st.get("target_test_weeks", a.target_test_weeks, d.target_test_weeks)?,
        public_noise: st.get("public_noise", a.public_noise, d.public_noise)?,
        target_noise: st.get("target_noise", a.target_noise, d.target_noise)?,
        ..d
    };
    st.print();
    let b = transfer_benchmark(&spec, seed)?;
    write_corpus(&out, "public", &b.public)?;
    write_corpus(&out, "targets", &b.targets)?;
    println!("wrote {} public and {} target series to {}", b.public.len(), b.targets.len(), out.display());
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let st = Settings::load(a.config.as_deref(), "pretrain")?;
    let manifest = st.input("manifest", a.manifest)?;
    let out = st.required_path("out", a.out)?;
    let model = model_config(&st, a.model)?;
    let (tc, fraction, seed) = train_config(&st, a.train, &TrainConfig::default())?;
    st.print();
    for e in load_manifest(&manifest)? {
        if !e.path.is_file() {
            return Err(Error::Data(format!("{}: series {} does not exist", manifest.display(), e.path.display())));
        }
    }
    let pc = PipelineConfig { model, pretrain: tc, train_fraction: fraction, seed, ..PipelineConfig::default() };
    let ck = pretrain(&manifest, &out, &pc)?;
    println!("checkpoint {} best_val_mae {} best_epoch {}", ck.path.display(), ck.val_mae, ck.best_epoch);
    Ok(())
}

fn threads() -> usize {
    std::env::var("LOADCAST_THREADS").ok().and_then(|v| v.parse().ok()).filter(|n| *n > 0).unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    })
}

fn cmd_finetune(a: FinetuneArgs) -> Result<()> {
    let st = Settings::load(a.config.as_deref(), "finetune")?;
    let checkpoint = st.input("checkpoint", a.checkpoint)?;
    let target = st.path("target", a.target)?;
    let all = st.path("all", a.all)?;
    let out = st.required_path("out", a.out)?;
    let samples_per_day = st.opt("samples_per_day", a.samples_per_day)?;
    let test_days = st.get("test_days", a.test_days, 7)?;
    let (tc, fraction, seed) = train_config(&st, a.train, &TrainConfig::finetune())?;
    let targets = match (target, all) {
        (Some(t), None) => {
            if !t.is_file() {
                return Err(Error::Data(format!("--target: {} does not exist", t.display())));
            }
            vec![(None, t)]
        }
        (None, Some(m)) => {
            if !m.is_file() {
                return Err(Error::Data(format!("--all: {} does not exist", m.display())));
            }
            load_manifest(&m)?.into_iter().map(|e| (Some(e.customer_id), e.path)).collect()
        }
        _ => return Err(Error::Config("give exactly one of --target and --all".into())),
    };
    st.print();
    let pretrained = load_weights(&checkpoint)?;
    let mut model = pretrained.config.clone();
    if let Some(s) = samples_per_day {
        model.samples_per_day = s;
    }
    let base = PipelineConfig { model, finetune: tc, train_fraction: fraction, test_days, seed, ..PipelineConfig::default() };
    let run = |i: usize, id: &Option<String>, path: &Path| -> Result<String> {
        let pc = PipelineConfig { seed: seed.wrapping_add(i as u64), ..base.clone() };
        let (m, report) = finetune(&checkpoint, path, &pc)?;
        let dest = match id {
            Some(id) => out.join(format!("{id}.lcw")),
            None => out.clone(),
        };
        save_weights(&m, &dest)?;
        let ck = Checkpoint { path: dest.clone(), val_mae: report.best_val_mae, best_epoch: report.best_epoch, seed: pc.seed, epochs_run: report.val_mae.len() };
        write_atomic(&Checkpoint::metadata_path(&dest), ck.metadata(m.normalization_reference).as_bytes())?;
        Ok(format!("{} best_val_mae {} reference_kw {}", dest.display(), report.best_val_mae, m.reference()?))
    };
    if targets.len() == 1 && targets[0].0.is_none() {
        println!("{}", run(0, &targets[0].0, &targets[0].1)?);
        return Ok(());
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads()).build().map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<Result<String>> =
        pool.install(|| targets.par_iter().enumerate().map(|(i, (id, path))| run(i, id, path)).collect());
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}

fn day_csv(start: chrono::DateTime<chrono::Utc>, interval: chrono::TimeDelta, values: &[f64]) -> String {
    let mut s = String::from("timestamp,load_kw\n");
    for (i, v) in values.iter().enumerate() {
        let t = start + interval * i as i32;
        s.push_str(&format!("{},{v}\n", t.format("%Y-%m-%dT%H:%M:%SZ")));
    }
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let st = Settings::load(a.config.as_deref(), "predict")?;
    let model_path = st.input("model", a.model)?;
    let history = st.input("history", a.history)?;
    let out = st.path("out", a.out)?;
    st.print();
    let model = load_weights(&model_path)?;
    let s = model.config.samples_per_day;
    let series = conform(&load_csv_series(&history)?, s)?;
    let (offset, days) = series.full_days().ok_or_else(|| Error::Data("history has no full day".into()))?;
    if days < HISTORY_DAYS {
        return Err(Error::Data(format!("{}: need {HISTORY_DAYS} full days of history, got {days}", history.display())));
    }
    let end = offset + days * s;
    let forecast = predict_next_day(&model, &series.values[end - HISTORY_DAYS * s..end])?;
    emit(out.as_deref(), &day_csv(series.timestamp(end), series.interval, &forecast))
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let st = Settings::load(a.config.as_deref(), "evaluate")?;
    let fixture = st.path("fixture", a.fixture)?;
    let public = st.path("public", a.public)?;
    let targets = st.path("targets", a.targets)?;
    let reference = st.get("reference", a.reference, REFERENCE_MODEL.to_string())?;
    let ours = st.get("ours", a.ours, "TFL".to_string())?;
    let out = st.path("out", a.out)?;
    let json_out = st.path("json_out", a.json_out)?;
    let long_out = st.path("long_out", a.long_out)?;
    let report = match (fixture, public, targets) {
        (Some(f), None, None) => {
            if !f.is_file() {
                return Err(Error::Data(format!("--fixture: {} does not exist", f.display())));
            }
            st.print();
            MetricReport::from_csv_path(&f)?
        }
        (None, Some(p), Some(t)) => {
            for m in [&p, &t] {
                if !m.is_file() {
                    return Err(Error::Data(format!("manifest {} does not exist", m.display())));
                }
            }
            let model = model_config(&st, a.model)?;
            let (tc, fraction, seed) = train_config(&st, a.train, &TrainConfig::default())?;
            let test_days = st.get("test_days", a.test_days, 7)?;
            let sarima = st.get("sarima", a.sarima, true)?;
            st.print();
            let load = |m: &Path| -> Result<Vec<_>> { load_manifest(m)?.iter().map(|e| load_csv_series(&e.path)).collect() };
            let pc = PipelineConfig {
                model,
                pretrain: tc.clone(),
                fresh: tc,
                train_fraction: fraction,
                test_days,
                seed,
                ..PipelineConfig::default()
            };
            run_transfer_benchmark(&load(&p)?, &load(&t)?, &pc, &BenchmarkOptions { include_sarima: sarima, sarima_orders: None })?
        }
        _ => return Err(Error::Config("give either --fixture, or both --public and --targets".into())),
    };
    if let Some(p) = &out {
        write_atomic(p, report.to_csv(&reference)?.as_bytes())?;
    }
    if let Some(p) = &json_out {
        write_atomic(p, report.to_json(&reference)?.as_bytes())?;
    }
    if let Some(p) = &long_out {
        write_atomic(p, report.to_long_csv(&reference)?.as_bytes())?;
    }
    print!("{}", report.summary_csv(&reference, &ours)?);
    Ok(())
}

fn parse_triple(key: &str, s: &str) -> Result<(usize, usize, usize)> {
    match parse_list::<usize>(key, s)?[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::Config(format!("--{key}: expected three comma-separated integers, got {s:?}"))),
    }
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let st = Settings::load(a.config.as_deref(), "baseline")?;
    let path = st.input("series", a.series)?;
    let method = st.get("method", a.method, "sarima".to_string())?;
    let series = load_csv_series(&path)?;
    let natural = series.samples_per_day().unwrap_or(24);
    let s = st.get("samples_per_day", a.samples_per_day, natural)?;
    let order = st.get("order", a.order, "1,0,1".to_string())?;
    let seasonal = st.get("seasonal_order", a.seasonal_order, "0,1,1".to_string())?;
    let period = st.get("period", a.period, s)?;
    let out = st.path("out", a.out)?;
    st.print();
    let series = conform(&series, s)?;
    let (offset, days) = series.full_days().ok_or_else(|| Error::Data("series has no full day".into()))?;
    let end = offset + days * s;
    let history = &series.values[..end];
    let forecast = match method.as_str() {
        "naive" => seasonal_naive_forecast(history, s)?,
        "sarima" => {
            let (p, d, q) = parse_triple("order", &order)?;
            let (sp, sd, sq) = parse_triple("seasonal-order", &seasonal)?;
            let spec = sarima_fit(history, SarimaOrders { p, d, q, sp, sd, sq, s: period })?;
            eprintln!("ar = {:?}, ma = {:?}, sar = {:?}, sma = {:?}, sigma2 = {}", spec.ar, spec.ma, spec.sar, spec.sma, spec.sigma2);
            sarima_forecast(&spec, history, s)?
        }
        other => return Err(Error::Config(format!("--method: expected sarima or naive, got {other:?}"))),
    };
    emit(out.as_deref(), &day_csv(series.timestamp(end), series.interval, &forecast))
}

fn read_load_column(path: &Path) -> Result<Vec<f64>> {
    let ingest = |line: usize, msg: String| Error::Ingest { path: path.to_path_buf(), line, msg };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| ingest(0, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| ingest(1, e.to_string()))?.clone();
    let col = headers.iter().position(|h| h.trim() == "load_kw").ok_or_else(|| ingest(1, "missing column `load_kw`".into()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ingest(i + 2, e.to_string()))?;
        let raw = rec.get(col).unwrap_or("").trim();
        let v: f64 = raw.parse().map_err(|_| ingest(i + 2, format!("bad load value {raw:?}")))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(ingest(i + 2, format!("load must be finite and nonnegative, got {v}")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(ingest(1, "no readings".into()));
    }
    Ok(out)
}

fn cmd_dct(a: DctArgs) -> Result<()> {
    let st = Settings::load(a.config.as_deref(), "dct")?;
    let path = st.input("load", a.load)?;
    let battery = BatterySpec::new(
        st.get("capacity", a.capacity, 0.0)?,
        st.get("pmax", a.pmax, 0.0)?,
        st.get("dt", a.dt, 1.0)?,
        st.get("s0", a.s0, 0.0)?,
    )?;
    let tol_flag = st.opt("tol", a.tol)?;
    let trace_out = st.path("trace_out", a.trace_out)?;
    st.print();
    let load = read_load_column(&path)?;
    let tol = tol_flag.unwrap_or_else(|| default_tol(&load));
    let dct = compute_dct(&load, &battery, tol)?;
    if let Some(p) = trace_out {
        let (_, trace) = simulate_feasibility(&load, &battery, dct)?;
        write_atomic(&p, trace.to_csv(&load).as_bytes())?;
    }
    println!("{dct}");
    Ok(())
}

/// Reduced five-block network with 4–16 filters on 8-sample days.
pub fn gradcheck_network(seed: u64) -> Result<(crate::forecaster::ForecastModel, Tensor, Tensor)> {
    let cfg = ModelConfig::compact(8, vec![4, 8, 8, 16, 16], vec![(2, 1), (2, 1), (2, 1), (1, 2), (1, 2)], 16);
    let mut rng = Rng::new(seed);
    let model = build_model(&cfg, &mut rng)?;
    let n = 8;
    let x = Tensor::new(vec![n, 4, 8, 7], (0..n * 224).map(|_| rng.normal()).collect())?;
    let y = Tensor::new(vec![n, 8], (0..n * 8).map(|_| rng.uniform()).collect())?;
    Ok((model, x, y))
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<bool> {
    let st = Settings::load(a.config.as_deref(), "gradcheck")?;
    let seed = st.get("seed", a.seed, 0)?;
    let eps = st.get("eps", a.eps, 1e-6)?;
    let threshold = st.get("threshold", a.threshold, 1e-4)?;
    st.print();
    let (model, x, y) = gradcheck_network(seed)?;
    let report = gradcheck(&model.net, &x, &y, eps)?;
    println!("max_rel_error {:e} at {} over {} parameters", report.max_rel_error, report.worst, report.checked);
    println!("input_rel_error {:e} at {}", report.input_rel_error, report.input_worst);
    Ok(report.max_rel_error <= threshold)
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Param(_) => 1,
        Error::Numeric(_) | Error::Degenerate(_) => 3,
        _ => 2,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Finetune(a) => cmd_finetune(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Dct(a) => cmd_dct(a),
        Command::Gradcheck(a) => match cmd_gradcheck(a) {
            Ok(true) => Ok(()),
            Ok(false) => return 3,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(std::env::args_os())
}
