//! Exit criteria. Each test prints one `criterion N: PASS|FAIL` line and
//! then asserts it.

use std::path::Path;
use std::time::Instant;

use loadcast::baselines::{sarima_fit, sarima_forecast, SarimaOrders};
use loadcast::benchmarks::{run_conditioned_benchmark, run_transfer_benchmark, BenchmarkOptions, ConditionedBenchmarkSpec, FRESH, TFL};
use loadcast::cli::gradcheck_network;
use loadcast::dataio::{
    build_windows, denormalize, history_to_window, normalize, split_train_val, window_to_history, LoadSeries,
    NormalizationRef, RefSource, HISTORY_DAYS,
};
use loadcast::demand_charge::{compute_dct, compute_dct_oracle, oracle_resolution, BatterySpec};
use loadcast::evaluation::{improvement_pct, na_mae, tna_mae, MetricReport, REFERENCE_MODEL};
use loadcast::forecaster::{build_model, evaluate_mse, fit, read_weights, save_weights, write_weights, ModelConfig, TrainConfig};
use loadcast::nn::{gradcheck, Layer, LayerKind, Rng};
use loadcast::synth::{generate_series, transfer_benchmark, write_corpus, LoadProfile, TransferBenchmarkSpec};
use loadcast::transfer::{finetune, pretrain, PipelineConfig};

fn verdict(n: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!("criterion {n}: {} {name} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/customer_mae.csv")
}

fn compact(s: usize) -> ModelConfig {
    ModelConfig::compact(s, vec![8, 16, 32, 32, 64], vec![(2, 1), (2, 1), (2, 1), (3, 2), (1, 2)], 64)
}

#[test]
fn criterion_01_fixture_replay() {
    const TNA_TOL: f64 = 0.01;
    const PCT_TOL: f64 = 1.0;
    let t0 = Instant::now();
    let report = MetricReport::from_csv_path(&fixture()).unwrap();
    assert_eq!(report.customers().len(), 23);
    assert_eq!(report.rows.len(), 92);
    let tna = tna_mae(&na_mae(&report, REFERENCE_MODEL).unwrap()).unwrap();
    let get = |m: &str| tna.iter().find(|(k, _)| k == m).unwrap().1;
    let mut checks = Vec::new();
    checks.push(("Pre-trained", get("Pre-trained") == 1.0, format!("{:.4} vs 1.00 exact", get("Pre-trained"))));
    for (m, want) in [("TFL", 0.70), ("Fresh", 0.84), ("SARIMA", 0.87)] {
        checks.push((m, (get(m) - want).abs() <= TNA_TOL, format!("{:.4} vs {want}", get(m))));
    }
    for (m, want) in [("Pre-trained", 30.0), ("Fresh", 17.0), ("SARIMA", 20.0)] {
        let pct = improvement_pct(get("TFL"), get(m)).unwrap();
        checks.push((m, (pct - want).abs() <= PCT_TOL, format!("TFL vs {m} {pct:.2}% vs {want}%")));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let all = checks.iter().all(|c| c.1) && elapsed < 1.0;
    let detail: Vec<String> = checks.iter().map(|(_, ok, d)| format!("{}{d}", if *ok { "" } else { "!" })).collect();
    assert!(verdict(1, "fixture replay", all, &format!("{}; {elapsed:.3}s", detail.join("; "))));
}

#[test]
fn criterion_02_network_shapes() {
    let t0 = Instant::now();
    let model = build_model(&ModelConfig::standard(96), &mut Rng::new(0)).unwrap();
    let trace = model.net.shape_trace(&[1, 4, 96, 7]).unwrap();
    // Expected (H, W, C) per stage, batch axis dropped.
    let mut stages = vec![vec![96, 7, 4]];
    for (layer, shape) in model.net.layers.iter().zip(&trace) {
        let hwc = match shape[..] {
            [_, c, h, w] => vec![h, w, c],
            [_, n] => vec![1, n],
            _ => continue,
        };
        let row = match layer {
            Layer::Param { params, .. } => matches!(params.kind, LayerKind::Conv2d | LayerKind::LinearOutput),
            Layer::MaxPool { .. } => true,
            Layer::Dropout { .. } => true,
            _ => false,
        };
        if row {
            stages.push(hwc);
        }
    }
    let expected: Vec<Vec<usize>> = vec![
        vec![96, 7, 4],
        vec![96, 7, 32],
        vec![24, 7, 32],
        vec![24, 7, 64],
        vec![12, 7, 64],
        vec![12, 7, 128],
        vec![6, 7, 128],
        vec![6, 7, 256],
        vec![3, 3, 256],
        vec![3, 3, 512],
        vec![1, 1, 512],
        vec![1, 512],
        vec![1, 96],
    ];
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = stages == expected && elapsed < 1.0;
    assert!(verdict(2, "network shapes", pass, &format!("{} stages matched; {elapsed:.3}s", stages.len())), "{stages:?}");
}

#[test]
fn criterion_03_gradcheck() {
    const MAX_REL: f64 = 1e-4;
    let t0 = Instant::now();
    let (model, x, y) = gradcheck_network(7).unwrap();
    let filters: Vec<usize> = model.config.conv_filters.clone();
    assert!(filters.iter().all(|f| (4..=16).contains(f)) && model.config.samples_per_day == 8);
    let r = gradcheck(&model.net, &x, &y, 1e-6).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = r.max_rel_error <= MAX_REL && elapsed < 60.0;
    let detail = format!(
        "max rel error {:.2e} at {} over {} parameters, inputs {:.2e}; {elapsed:.1}s",
        r.max_rel_error, r.worst, r.checked, r.input_rel_error
    );
    assert!(verdict(3, "gradient suite", pass, &detail));
}

#[test]
fn criterion_04_transfer_benchmark() {
    const SEEDS: u64 = 5;
    let mut tfl = 0.0;
    let mut fresh = 0.0;
    let mut slowest = 0.0f64;
    for seed in 0..SEEDS {
        let t0 = Instant::now();
        let data = transfer_benchmark(&TransferBenchmarkSpec::default(), seed).unwrap();
        assert_eq!((data.public.len(), data.targets.len()), (10, 5));
        let pc = PipelineConfig { model: compact(24), seed, ..PipelineConfig::default() };
        let opts = BenchmarkOptions { include_sarima: false, sarima_orders: None };
        let report = run_transfer_benchmark(&data.public, &data.targets, &pc, &opts).unwrap();
        let tna = tna_mae(&na_mae(&report, REFERENCE_MODEL).unwrap()).unwrap();
        let get = |m: &str| tna.iter().find(|(k, _)| k == m).unwrap().1;
        println!("  seed {seed}: TFL {:.4} Fresh {:.4}", get(TFL), get(FRESH));
        tfl += get(TFL) / SEEDS as f64;
        fresh += get(FRESH) / SEEDS as f64;
        slowest = slowest.max(t0.elapsed().as_secs_f64());
    }
    let pass = tfl < fresh && tfl < 1.0 && slowest <= 1800.0;
    let detail = format!("mean TNA.MAE TFL {tfl:.4}, Fresh {fresh:.4}, Pre-trained 1.0; slowest run {slowest:.0}s");
    assert!(verdict(4, "synthetic transfer benchmark", pass, &detail));
}

#[test]
fn criterion_05_overfit() {
    const TARGET_MSE: f64 = 1e-3;
    let t0 = Instant::now();
    let mut rng = Rng::new(17);
    let profile = LoadProfile::random(&mut rng, (50.0, 200.0), 0.05);
    let start = chrono::NaiveDate::from_ymd_opt(2020, 3, 2).unwrap();
    let series = generate_series("overfit", &profile, start, HISTORY_DAYS + 10, 24, &mut rng).unwrap();
    let windows = build_windows(&series, 24).unwrap();
    assert_eq!(windows.len(), 10);
    let reference = NormalizationRef::from_values(&series.values, RefSource::TargetTrainSet).unwrap();
    let windows = normalize(&windows, &reference);
    let cfg = ModelConfig { dropout_p: 0.0, ..compact(24) };
    let mut model = build_model(&cfg, &mut Rng::new(3)).unwrap();
    let tc = TrainConfig { epochs: 2000, batch_size: 10, seed: 3, patience: None, ..TrainConfig::default() };
    let report = fit(&mut model, &windows, &windows, &tc).unwrap();
    // Loss of the final training epoch, batch statistics in the BN layers.
    let mse = *report.train_loss.last().unwrap();
    let inference = evaluate_mse(&model, &windows).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = report.train_loss.len() <= 2000 && mse < TARGET_MSE && elapsed <= 300.0;
    let detail = format!("training MSE {mse:.2e} after {} epochs, {inference:.2e} with running statistics; {elapsed:.1}s", report.train_loss.len());
    assert!(verdict(5, "overfit sanity", pass, &detail));
}

/// Payload bytes of the conv and batch-norm layers, which lead the file.
fn feature_bytes(bytes: &[u8]) -> (&[u8], &[u8]) {
    let model = read_weights(bytes).unwrap();
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let payload = &bytes[10 + header_len..];
    let mut frozen = 0;
    let mut rest = 0;
    for (_, _, p) in model.net.param_layers() {
        match p.kind {
            LayerKind::Conv2d | LayerKind::BatchNorm => frozen += p.num_values() * 4,
            _ => rest += p.num_values() * 4,
        }
    }
    (&payload[..frozen], &payload[frozen..frozen + rest])
}

#[test]
fn criterion_06_freeze_certificate() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let spec = TransferBenchmarkSpec { public_customers: 3, public_weeks: 6, targets: 1, ..TransferBenchmarkSpec::default() };
    let data = transfer_benchmark(&spec, 11).unwrap();
    write_corpus(dir.path(), "public", &data.public).unwrap();
    write_corpus(dir.path(), "targets", &data.targets).unwrap();
    let mut pc = PipelineConfig { model: compact(24), seed: 11, ..PipelineConfig::default() };
    pc.pretrain.epochs = 5;
    pc.finetune.epochs = 20;
    let ck = dir.path().join("pre.lcw");
    pretrain(&dir.path().join("public_manifest.csv"), &ck, &pc).unwrap();
    let (tuned, _) = finetune(&ck, &dir.path().join("targets/target_01.csv"), &pc).unwrap();
    let out = dir.path().join("tuned.lcw");
    save_weights(&tuned, &out).unwrap();

    let before = std::fs::read(&ck).unwrap();
    let after = std::fs::read(&out).unwrap();
    let (conv_a, dense_a) = feature_bytes(&before);
    let (conv_b, dense_b) = feature_bytes(&after);
    let differing = conv_a.iter().zip(conv_b).filter(|(a, b)| a != b).count();
    let dense_changed = dense_a != dense_b;
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = conv_a.len() == conv_b.len() && differing == 0 && dense_changed && elapsed < 60.0;
    let detail = format!("{differing} of {} conv/BN bytes differ; dense/output changed: {dense_changed}; {elapsed:.1}s", conv_a.len());
    assert!(verdict(6, "freeze certificate", pass, &detail));
}

fn random_battery(rng: &mut Rng) -> BatterySpec {
    let capacity = rng.uniform_range(0.0, 20.0);
    let dt = [0.25, 0.5, 1.0][(rng.uniform() * 3.0) as usize % 3];
    BatterySpec::new(capacity, rng.uniform_range(0.5, 15.0), dt, capacity * rng.uniform()).unwrap()
}

#[test]
fn criterion_07_dct_oracle() {
    const SOC_GRID: usize = 2049;
    const THRESHOLD_GRID: usize = 2048;
    let t0 = Instant::now();
    let mut rng = Rng::new(2024);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut failures = 0;
    for _ in 0..100 {
        let len = 1 + (rng.uniform() * 12.0) as usize % 12;
        let load: Vec<f64> = (0..len).map(|_| rng.uniform_range(0.0, 30.0)).collect();
        let b = random_battery(&mut rng);
        let tol = 1e-6;
        let bisect = compute_dct(&load, &b, tol).unwrap();
        let oracle = compute_dct_oracle(&load, &b, SOC_GRID, THRESHOLD_GRID).unwrap();
        let allowed = tol.max(oracle_resolution(len, &b, SOC_GRID, THRESHOLD_GRID));
        let gap = (bisect - oracle).abs();
        worst_excess = worst_excess.max(gap - allowed);
        if gap > allowed {
            failures += 1;
        }
    }
    let load = [3.0, 9.5, 4.0, 7.25];
    let no_storage = compute_dct(&load, &BatterySpec::new(0.0, 5.0, 0.25, 0.0).unwrap(), 1e-9).unwrap();
    let flat = compute_dct(&[6.5; 8], &BatterySpec::new(10.0, 3.0, 1.0, 0.0).unwrap(), 1e-9).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = failures == 0 && no_storage == 9.5 && flat == 6.5 && elapsed < 60.0;
    let detail = format!(
        "{failures} of 100 outside tolerance (worst margin {worst_excess:.2e}); C=0 gives {no_storage}; flat load gives {flat}; {elapsed:.1}s"
    );
    assert!(verdict(7, "DCT oracle equivalence", pass, &detail));
}

#[test]
fn criterion_08_dct_invariants() {
    const TOL: f64 = 1e-9;
    let t0 = Instant::now();
    let mut rng = Rng::new(88);
    let mut bad = [0usize; 3];
    for _ in 0..1000 {
        let len = 1 + (rng.uniform() * 24.0) as usize % 24;
        let load: Vec<f64> = (0..len).map(|_| rng.uniform_range(0.0, 100.0)).collect();
        let b = random_battery(&mut rng);
        let d = compute_dct(&load, &b, TOL).unwrap();

        let c = rng.uniform_range(0.0, 50.0);
        let shifted: Vec<f64> = load.iter().map(|v| v + c).collect();
        if (compute_dct(&shifted, &b, TOL).unwrap() - (d + c)).abs() > 2.0 * TOL + 1e-12 * (d + c) {
            bad[0] += 1;
        }

        let alpha = rng.uniform_range(0.1, 10.0);
        let scaled: Vec<f64> = load.iter().map(|v| v * alpha).collect();
        let ds = compute_dct(&scaled, &b.scaled(1.0 / alpha), TOL).unwrap();
        if (ds - alpha * d).abs() > (1.0 + alpha) * TOL + 1e-12 * alpha * d.abs() {
            bad[1] += 1;
        }

        let more_c = BatterySpec::new(b.capacity + rng.uniform_range(0.0, 10.0), b.p_max, b.delta_t, b.s0).unwrap();
        let more_p = BatterySpec::new(b.capacity, b.p_max + rng.uniform_range(0.0, 10.0), b.delta_t, b.s0).unwrap();
        let more_s = BatterySpec::new(b.capacity, b.p_max, b.delta_t, b.s0 + rng.uniform() * (b.capacity - b.s0)).unwrap();
        if [more_c, more_p, more_s].iter().any(|o| compute_dct(&load, o, TOL).unwrap() > d + TOL) {
            bad[2] += 1;
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = bad == [0, 0, 0] && elapsed < 60.0;
    let detail = format!("violations: shift {}, homogeneity {}, monotonicity {}; {elapsed:.1}s", bad[0], bad[1], bad[2]);
    assert!(verdict(8, "DCT invariants", pass, &detail));
}

#[test]
fn criterion_09_sarima() {
    let t0 = Instant::now();
    let mut rng = Rng::new(909);
    let mut x = vec![0.0; 5200];
    for t in 1..x.len() {
        x[t] = 0.7 * x[t - 1] + rng.normal();
    }
    let ar1 = x.split_off(200);
    let orders = SarimaOrders { p: 1, d: 0, q: 0, sp: 0, sd: 0, sq: 0, s: 1 };
    let phi = sarima_fit(&ar1, orders).unwrap().ar[0];

    let s = 24;
    let walk: Vec<f64> = (0..20 * s).map(|_| rng.uniform_range(0.0, 50.0)).collect();
    let seasonal = SarimaOrders { p: 0, d: 0, q: 0, sp: 0, sd: 1, sq: 0, s };
    let spec = sarima_fit(&walk, seasonal).unwrap();
    let forecast = sarima_forecast(&spec, &walk, s).unwrap();
    let repeats = forecast == walk[walk.len() - s..];
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = (phi - 0.7).abs() <= 0.05 && repeats && elapsed < 60.0;
    let detail = format!("phi {phi:.4}; seasonal random walk repeats last season: {repeats}; {elapsed:.2}s");
    assert!(verdict(9, "SARIMA recovery", pass, &detail));
}

#[test]
fn criterion_10_conditioned_training() {
    const SEEDS: u64 = 5;
    const MAX_MAE_DEGRADATION: f64 = 0.20;
    let spec = ConditionedBenchmarkSpec::default();
    let (mut plain_dct, mut cond_dct, mut plain_mae, mut cond_mae) = (0.0, 0.0, 0.0, 0.0);
    let mut slowest = 0.0f64;
    for seed in 0..SEEDS {
        let t0 = Instant::now();
        let (plain, cond) = run_conditioned_benchmark(&spec, seed).unwrap();
        println!(
            "  seed {seed}: lambda=0 mae {:.4} dct {:.4}; lambda={} mae {:.4} dct {:.4}",
            plain.mae, plain.dct_error, spec.lambda, cond.mae, cond.dct_error
        );
        plain_dct += plain.dct_error / SEEDS as f64;
        cond_dct += cond.dct_error / SEEDS as f64;
        plain_mae += plain.mae / SEEDS as f64;
        cond_mae += cond.mae / SEEDS as f64;
        slowest = slowest.max(t0.elapsed().as_secs_f64());
    }
    let degradation = cond_mae / plain_mae - 1.0;
    let pass = spec.lambda == 1.0 && cond_dct <= plain_dct && degradation <= MAX_MAE_DEGRADATION && slowest <= 1800.0;
    let detail = format!(
        "mean DCT error {plain_dct:.4} -> {cond_dct:.4}; MAE {plain_mae:.4} -> {cond_mae:.4} ({:+.1}%); slowest seed {slowest:.0}s",
        100.0 * degradation
    );
    assert!(verdict(10, "conditioned training", pass, &detail));
}

#[test]
fn criterion_11_round_trips() {
    let t0 = Instant::now();
    let cfg = ModelConfig { conditioned: true, ..compact(24) };
    let mut model = build_model(&cfg, &mut Rng::new(4)).unwrap();
    model.normalization_reference = Some(123.25);
    model.freeze_feature_extractor();
    let first = write_weights(&model);
    let second = write_weights(&read_weights(&first).unwrap());
    let weights_ok = first == second;

    let mut rng = Rng::new(12);
    let reference = NormalizationRef::new(rng.uniform_range(1.0, 1e4), RefSource::TargetTrainSet).unwrap();
    let profile: Vec<f64> = (0..96).map(|_| rng.uniform_range(0.0, 2e4)).collect();
    let scaled: Vec<f64> = profile.iter().map(|v| v / reference.max_value).collect();
    let norm_err = denormalize(&scaled, &reference)
        .iter()
        .zip(&profile)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);

    let start: chrono::DateTime<chrono::Utc> = "2021-05-03T00:00:00Z".parse().unwrap();
    let values: Vec<f64> = (0..40 * 24).map(|i| i as f64).collect();
    let series = LoadSeries::new("rt", start, chrono::TimeDelta::hours(1), values.clone()).unwrap();
    let windows = build_windows(&series, 24).unwrap();
    let windows_ok = windows.iter().enumerate().all(|(d, w)| {
        window_to_history(&w.input).unwrap() == values[d * 24..(d + HISTORY_DAYS) * 24]
            && history_to_window(&values[d * 24..(d + HISTORY_DAYS) * 24], 24).unwrap() == w.input
    });
    let (a, b) = split_train_val(&windows, 0.7, &mut rng).unwrap();
    let split_ok = a.len() + b.len() == windows.len();

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = weights_ok && norm_err <= 1e-12 && windows_ok && split_ok && elapsed < 60.0;
    let detail = format!(
        "weights byte-identical: {weights_ok} ({} bytes); normalisation error {norm_err:.1e}; window index map exact: {windows_ok}; {elapsed:.2}s",
        first.len()
    );
    assert!(verdict(11, "round trips", pass, &detail));
}
