//! Demand-charge-conditioned training on peaky synthetic loads: the same
//! network trained with and without the DCT penalty.
//!
//! `cargo run --release --example conditioned_training -- [seed] [lambda]`

use loadcast::benchmarks::{run_conditioned_benchmark, ConditionedBenchmarkSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let lambda: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let spec = ConditionedBenchmarkSpec { lambda, ..Default::default() };
    let t0 = std::time::Instant::now();
    let (plain, cond) = run_conditioned_benchmark(&spec, seed)?;
    println!("lambda=0     MAE {:.5}  DCT error {:.5}", plain.mae, plain.dct_error);
    println!("lambda={lambda:<6} MAE {:.5}  DCT error {:.5}", cond.mae, cond.dct_error);
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
