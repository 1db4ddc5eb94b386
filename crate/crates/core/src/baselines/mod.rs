//! Comparison forecasters: seasonal naive and a conditional-sum-of-squares
//! seasonal ARIMA.

mod naive;
mod nelder_mead;
mod sarima;

pub use naive::seasonal_naive_forecast;
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use sarima::{
    difference, difference_poly, integrate, is_stationary, sarima_fit, sarima_forecast, SarimaOrders, SarimaSpec,
};
