use chrono::{NaiveDate, TimeDelta};

use super::LoadSeries;
use crate::error::{Error, Result};
use crate::nn::{Rng, Tensor};

pub const WEEKS: usize = 4;
pub const DAYS_PER_WEEK: usize = 7;
pub const HISTORY_DAYS: usize = WEEKS * DAYS_PER_WEEK;

/// One training pair: 28 days of history arranged weeks-as-channels
/// (`[4, S, 7]`) and the following day's profile.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub input: Tensor,
    pub target: Vec<f64>,
    pub target_date: NaiveDate,
}

/// Arranges 28 consecutive daily profiles (flattened, oldest first) into the
/// `[week, sample-of-day, day-of-week]` layout: `input[w, t, j]` is sample `t`
/// of history day `7w + j`. Column `j` therefore holds the same weekday in
/// all four week channels, and column 0 shares the target day's weekday.
pub fn history_to_window(history: &[f64], samples_per_day: usize) -> Result<Tensor> {
    let s = samples_per_day;
    if s == 0 || history.len() != HISTORY_DAYS * s {
        return Err(Error::Shape(format!("history must hold {HISTORY_DAYS}×{s} readings, got {}", history.len())));
    }
    let mut data = vec![0.0; WEEKS * s * DAYS_PER_WEEK];
    for w in 0..WEEKS {
        for j in 0..DAYS_PER_WEEK {
            let day = &history[(w * DAYS_PER_WEEK + j) * s..][..s];
            for (t, v) in day.iter().enumerate() {
                data[(w * s + t) * DAYS_PER_WEEK + j] = *v;
            }
        }
    }
    Tensor::new(vec![WEEKS, s, DAYS_PER_WEEK], data)
}

/// Inverse of [`history_to_window`].
pub fn window_to_history(window: &Tensor) -> Result<Vec<f64>> {
    let s = match *window.shape() {
        [WEEKS, s, DAYS_PER_WEEK] => s,
        ref other => return Err(Error::Shape(format!("window must be [4, S, 7], got {other:?}"))),
    };
    let x = window.data();
    let mut out = vec![0.0; HISTORY_DAYS * s];
    for w in 0..WEEKS {
        for j in 0..DAYS_PER_WEEK {
            for t in 0..s {
                out[(w * DAYS_PER_WEEK + j) * s + t] = x[(w * s + t) * DAYS_PER_WEEK + j];
            }
        }
    }
    Ok(out)
}

/// One sample per complete day from the 29th on. The series interval must
/// give exactly `samples_per_day` readings per day; a leading partial day
/// is skipped.
pub fn build_windows(series: &LoadSeries, samples_per_day: usize) -> Result<Vec<WindowSample>> {
    if series.samples_per_day() != Some(samples_per_day) {
        return Err(Error::Param(format!(
            "series interval {} does not give {samples_per_day} samples per day",
            series.interval
        )));
    }
    let s = samples_per_day;
    let (offset, days) = series
        .full_days()
        .ok_or_else(|| Error::Data(format!("{}: no reading falls on midnight", series.customer_id)))?;
    if days <= HISTORY_DAYS {
        return Err(Error::Data(format!(
            "{}: {days} full days; at least {} are needed for one window",
            series.customer_id,
            HISTORY_DAYS + 1
        )));
    }
    let first_date = series.timestamp(offset).date_naive();
    let v = &series.values[offset..];
    (HISTORY_DAYS..days)
        .map(|d| {
            let input = history_to_window(&v[(d - HISTORY_DAYS) * s..d * s], s)?;
            Ok(WindowSample {
                input,
                target: v[d * s..(d + 1) * s].to_vec(),
                target_date: first_date + TimeDelta::days(d as i64),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefSource {
    PerCustomerPretrain,
    TargetTrainSet,
}

/// Max-normalization reference in kW.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationRef {
    pub max_value: f64,
    pub source: RefSource,
}

impl NormalizationRef {
    pub fn new(max_value: f64, source: RefSource) -> Result<Self> {
        if !(max_value.is_finite() && max_value > 0.0) {
            return Err(Error::Degenerate(format!("normalization reference must be positive, got {max_value}")));
        }
        Ok(NormalizationRef { max_value, source })
    }

    /// Reference from the largest of `values`; all-zero data is degenerate.
    pub fn from_values(values: &[f64], source: RefSource) -> Result<Self> {
        let max = values.iter().copied().fold(0.0, f64::max);
        Self::new(max, source)
    }
}

/// Divides inputs and targets by the reference. Values above the reference
/// are passed through unclipped.
pub fn normalize(samples: &[WindowSample], reference: &NormalizationRef) -> Vec<WindowSample> {
    let k = reference.max_value;
    samples
        .iter()
        .map(|s| {
            let mut input = s.input.clone();
            input.data_mut().iter_mut().for_each(|v| *v /= k);
            WindowSample { input, target: s.target.iter().map(|v| v / k).collect(), target_date: s.target_date }
        })
        .collect()
}

pub fn denormalize(profile: &[f64], reference: &NormalizationRef) -> Vec<f64> {
    profile.iter().map(|v| v * reference.max_value).collect()
}

/// Seeded random partition with `round(fraction · n)` items (at least one,
/// at most `n − 1`) in the first part.
pub fn split_train_val<T: Clone>(samples: &[T], fraction: f64, rng: &mut Rng) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Param(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let n = samples.len();
    if n < 2 {
        return Err(Error::Data(format!("{n} samples cannot populate both a training and a validation split")));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let (a, b) = idx.split_at(n_train);
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    Ok((a.iter().map(|&i| samples[i].clone()).collect(), b.iter().map(|&i| samples[i].clone()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Datelike, Utc};

    fn daily_series(days: usize, s: usize) -> LoadSeries {
        // Reading encodes (day, sample) so any index mix-up is visible.
        let values = (0..days * s).map(|i| (i / s) as f64 * 1000.0 + (i % s) as f64).collect();
        let start: DateTime<Utc> = "2024-01-01T00:00:00Z".parse().unwrap();
        LoadSeries::new("c", start, TimeDelta::minutes((1440 / s) as i64), values).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(build_windows(&daily_series(35, 24), 24).unwrap().len(), 7);
        assert!(matches!(build_windows(&daily_series(28, 24), 24), Err(Error::Data(_))));
        assert!(matches!(build_windows(&daily_series(40, 24), 96), Err(Error::Param(_))));
    }

    #[test]
    fn index_map_matches_naive_oracle() {
        let s = 8;
        let series = daily_series(33, s);
        let windows = build_windows(&series, s).unwrap();
        for (k, win) in windows.iter().enumerate() {
            let d = HISTORY_DAYS + k;
            for w in 0..4 {
                for t in 0..s {
                    for j in 0..7 {
                        let day = d - 28 + 7 * w + j;
                        let expect = series.values[day * s + t];
                        assert_eq!(win.input.data()[(w * s + t) * 7 + j], expect);
                    }
                }
            }
            assert_eq!(win.target, series.values[d * s..(d + 1) * s].to_vec());
            assert_eq!(win.target_date.ordinal0() as usize, d);
            // Column 0 carries the target's weekday in every week channel.
            assert_eq!((d - 28) % 7, d % 7);
        }
    }

    #[test]
    fn leading_partial_day_is_skipped() {
        let mut series = daily_series(31, 24);
        series.start -= TimeDelta::hours(3);
        series.values.splice(0..0, [7.0, 7.0, 7.0]);
        let w = build_windows(&series, 24).unwrap();
        assert_eq!(w.len(), 31 - 28);
        assert_eq!(w[0].target[0], 28_000.0);
    }

    #[test]
    fn normalization_examples() {
        let r = NormalizationRef::new(200.0, RefSource::TargetTrainSet).unwrap();
        assert_eq!(denormalize(&[0.25], &r), vec![50.0]);
        let w = build_windows(&daily_series(29, 24), 24).unwrap();
        let n = normalize(&w, &r);
        assert_eq!(n[0].target[1], w[0].target[1] / 200.0);
        assert!(matches!(NormalizationRef::from_values(&[0.0, 0.0], RefSource::TargetTrainSet), Err(Error::Degenerate(_))));
    }

    #[test]
    fn split_examples() {
        let items: Vec<usize> = (0..10).collect();
        let (a, b) = split_train_val(&items, 0.7, &mut Rng::new(1)).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        let (a2, b2) = split_train_val(&items, 0.7, &mut Rng::new(1)).unwrap();
        assert_eq!((a.clone(), b.clone()), (a2, b2));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
        assert!(split_train_val(&items[..1], 0.7, &mut Rng::new(1)).is_err());
    }
}
