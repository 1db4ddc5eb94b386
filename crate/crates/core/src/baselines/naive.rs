use crate::dataio::DAYS_PER_WEEK;
use crate::error::{Error, Result};

/// The day after `series` ends, predicted as the profile observed one week
/// before it.
pub fn seasonal_naive_forecast(series: &[f64], samples_per_day: usize) -> Result<Vec<f64>> {
    let week = DAYS_PER_WEEK * samples_per_day;
    if samples_per_day == 0 || series.len() < week {
        return Err(Error::Data(format!("seasonal naive needs {week} readings of history, got {}", series.len())));
    }
    let start = series.len() - week;
    Ok(series[start..start + samples_per_day].to_vec())
}
