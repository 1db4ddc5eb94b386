//! Seasonal ARIMA fitted by conditional sum of squares on a synthetic
//! customer, next-day forecast compared with the seasonal-naive one.
//!
//! `cargo run --release --example sarima_baseline -- [seed]`

use chrono::NaiveDate;
use loadcast::baselines::{sarima_fit, sarima_forecast, seasonal_naive_forecast, SarimaOrders};
use loadcast::evaluation::mae;
use loadcast::nn::Rng;
use loadcast::synth::{generate_series, LoadProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let s = 24;
    let mut rng = Rng::new(seed);
    let profile = LoadProfile::random(&mut rng, (20.0, 200.0), 0.05);
    let series = generate_series("demo", &profile, NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(), 42, s, &mut rng)?;
    let (history, actual) = series.values.split_at(series.values.len() - s);

    let orders = SarimaOrders::default_for(s);
    let spec = sarima_fit(history, orders)?;
    println!("orders {orders:?}");
    println!("ar {:?} ma {:?} sma {:?} sigma2 {:.4}", spec.ar, spec.ma, spec.sma, spec.sigma2);
    println!("CSS iterations {}", spec.css_trace.len());
    let sarima = sarima_forecast(&spec, history, s)?;
    let naive = seasonal_naive_forecast(history, s)?;
    println!("MAE sarima {:.3} kW, seasonal naive {:.3} kW", mae(actual, &sarima)?, mae(actual, &naive)?);
    Ok(())
}
