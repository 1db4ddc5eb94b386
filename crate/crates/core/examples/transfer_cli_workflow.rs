//! The file-based workflow behind the `synth`, `pretrain`, `finetune` and
//! `predict` commands, run in a temporary directory with a small network.
//!
//! `cargo run --release --example transfer_cli_workflow`

use loadcast::dataio::{load_csv_series, HISTORY_DAYS};
use loadcast::forecaster::{save_weights, ModelConfig};
use loadcast::synth::{transfer_benchmark, write_corpus, TransferBenchmarkSpec};
use loadcast::transfer::{finetune, predict_next_day, pretrain, read_metadata, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("loadcast-workflow-{}", std::process::id()));
    let spec = TransferBenchmarkSpec { public_customers: 4, public_weeks: 8, targets: 1, ..Default::default() };
    let data = transfer_benchmark(&spec, 1)?;
    write_corpus(&dir, "public", &data.public)?;
    write_corpus(&dir, "targets", &data.targets)?;

    let mut pc = PipelineConfig {
        model: ModelConfig::compact(24, vec![8, 16, 32, 32, 64], vec![(2, 1), (2, 1), (2, 1), (3, 2), (1, 2)], 64),
        seed: 1,
        ..Default::default()
    };
    pc.pretrain.epochs = 200;
    let checkpoint = dir.join("pretrained.lcw");
    let ck = pretrain(&dir.join("public_manifest.csv"), &checkpoint, &pc)?;
    println!("pretrained: validation MAE {:.4} at epoch {}", ck.val_mae, ck.best_epoch);
    print!("{}", read_metadata(&checkpoint)?);

    let target = dir.join("targets/target_01.csv");
    let (model, report) = finetune(&checkpoint, &target, &pc)?;
    println!("fine-tuned: validation MAE {:.4}, reference {:.2} kW", report.best_val_mae, model.reference()?);
    save_weights(&model, &dir.join("target_01.lcw"))?;

    let series = load_csv_series(&target)?;
    let s = 24;
    let end = series.len() - 7 * s;
    let forecast = predict_next_day(&model, &series.values[end - HISTORY_DAYS * s..end])?;
    for (t, (f, a)) in forecast.iter().zip(&series.values[end..end + s]).enumerate() {
        println!("{t:>2}  forecast {f:>8.2}  actual {a:>8.2}");
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
