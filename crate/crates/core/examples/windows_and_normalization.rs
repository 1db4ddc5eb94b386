//! Builds training windows from a load series, shows the weeks-as-channels
//! layout of one window, and scales it by the training maximum.
//!
//! `cargo run --example windows_and_normalization`

use chrono::{DateTime, TimeDelta, Utc};
use loadcast::dataio::{build_windows, denormalize, normalize, window_to_history, LoadSeries, NormalizationRef, RefSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = 4;
    let start: DateTime<Utc> = "2023-06-05T00:00:00Z".parse()?;
    // Reading value encodes day * 10 + sample, which makes the layout visible.
    let values: Vec<f64> = (0..31 * s).map(|i| ((i / s) * 10 + i % s) as f64).collect();
    let series = LoadSeries::new("demo", start, TimeDelta::hours(6), values)?;
    let windows = build_windows(&series, s)?;
    println!("{} windows, first target date {}", windows.len(), windows[0].target_date);

    let w = &windows[0];
    for week in 0..4 {
        println!("week channel {week}");
        for t in 0..s {
            let row: Vec<String> = (0..7).map(|j| format!("{:>4}", w.input.data()[(week * s + t) * 7 + j])).collect();
            println!("  sample {t}: {}", row.join(""));
        }
    }
    println!("target {:?}", w.target);
    assert_eq!(window_to_history(&w.input)?, series.values[..28 * s]);

    let reference = NormalizationRef::from_values(&series.values, RefSource::TargetTrainSet)?;
    let scaled = normalize(&windows, &reference);
    println!("reference {} kW, scaled target {:?}", reference.max_value, scaled[0].target);
    println!("restored target {:?}", denormalize(&scaled[0].target, &reference));
    Ok(())
}
