//! Prints the layer-by-layer output shapes of the full forecasting network
//! for a given number of samples per day.
//!
//! `cargo run --example network_shapes -- [samples_per_day]`

use loadcast::forecaster::{build_model, ModelConfig};
use loadcast::nn::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s: usize = std::env::args().nth(1).map(|v| v.parse()).transpose()?.unwrap_or(96);
    let cfg = ModelConfig::standard(s);
    cfg.validate()?;
    let model = build_model(&cfg, &mut Rng::new(0))?;
    let trace = model.net.shape_trace(&[1, 4, s, 7])?;
    println!("{:<12} {:?}", "input", [4, s, 7]);
    for (layer, shape) in model.net.layers.iter().zip(&trace) {
        let name = layer.name().map(str::to_string).unwrap_or_else(|| format!("{layer:?}"));
        let name: String = name.chars().take(24).collect();
        println!("{name:<24} {:?}", &shape[1..]);
    }
    println!("{} trainable values", model.net.num_parameters());
    Ok(())
}
