//! Central-difference check of backpropagation on a reduced five-block
//! network (S = 8, 4 to 16 filters).
//!
//! `cargo run --release --example gradcheck -- [seed] [eps]`

use loadcast::cli::gradcheck_network;
use loadcast::nn::gradcheck;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let eps: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1e-6);
    let (model, x, y) = gradcheck_network(seed)?;
    let r = gradcheck(&model.net, &x, &y, eps)?;
    println!("parameters checked  {}", r.checked);
    println!("max relative error  {:.3e} ({})", r.max_rel_error, r.worst);
    println!("input gradients     {:.3e} ({})", r.input_rel_error, r.input_worst);
    Ok(())
}
