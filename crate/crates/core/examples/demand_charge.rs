//! Demand-charge threshold of a day of load for a small battery: bisection
//! over the greedy dispatch, compared with the grid reference solver, and the
//! dispatch that achieves it.
//!
//! `cargo run --example demand_charge`

use loadcast::demand_charge::{compute_dct, compute_dct_oracle, default_tol, oracle_resolution, simulate_feasibility, BatterySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let load = [42.0, 40.0, 45.0, 61.0, 78.0, 80.0, 74.0, 55.0, 48.0, 44.0, 41.0, 40.0];
    let battery = BatterySpec::new(30.0, 15.0, 1.0, 20.0)?;
    let dct = compute_dct(&load, &battery, default_tol(&load))?;
    let oracle = compute_dct_oracle(&load, &battery, 2049, 2048)?;
    println!("peak load        {:.3} kW", 80.0);
    println!("threshold        {dct:.4} kW");
    println!("grid reference   {oracle:.4} kW (resolution {:.4})", oracle_resolution(load.len(), &battery, 2049, 2048));
    let (feasible, trace) = simulate_feasibility(&load, &battery, dct)?;
    assert!(feasible);
    print!("{}", trace.to_csv(&load));
    Ok(())
}
