//! Synthetic transfer-learning benchmark: pretrain on ten public customers,
//! compare fine-tuned, pretrained-only, fresh and SARIMA forecasts on five
//! small target customers.
//!
//! `cargo run --release --example transfer_benchmark -- [seed] [epochs]`

use loadcast::evaluation::{na_mae, tna_mae, REFERENCE_MODEL};
use loadcast::forecaster::ModelConfig;
use loadcast::synth::{transfer_benchmark, TransferBenchmarkSpec};
use loadcast::benchmarks::{run_transfer_benchmark, BenchmarkOptions};
use loadcast::transfer::PipelineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(400);

    let spec = TransferBenchmarkSpec::default();
    let data = transfer_benchmark(&spec, seed)?;
    let mut pc = PipelineConfig {
        model: ModelConfig::compact(24, vec![8, 16, 32, 32, 64], vec![(2, 1), (2, 1), (2, 1), (3, 2), (1, 2)], 64),
        seed,
        ..PipelineConfig::default()
    };
    pc.pretrain.epochs = epochs;
    pc.fresh.epochs = epochs;

    let t0 = std::time::Instant::now();
    let report = run_transfer_benchmark(&data.public, &data.targets, &pc, &BenchmarkOptions::default())?;
    println!("{}", report.to_csv(REFERENCE_MODEL)?);
    for (model, v) in tna_mae(&na_mae(&report, REFERENCE_MODEL)?)? {
        println!("TNA.MAE {model:<12} {v:.4}");
    }
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
