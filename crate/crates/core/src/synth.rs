//! Synthetic commercial load families with daily business-hours shapes,
//! weekday/weekend structure, per-customer scale and multiplicative noise.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, TimeDelta, Utc};

use crate::dataio::{write_csv_series, LoadSeries};
use crate::error::{Error, Result};
use crate::nn::Rng;
use crate::util::write_atomic;

/// Shape and noise of one synthetic customer.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadProfile {
    /// Peak-scale load in kW.
    pub scale: f64,
    /// Always-on share of the load.
    pub base_fraction: f64,
    /// Opening and closing hour of the busy period.
    pub open_hour: f64,
    pub close_hour: f64,
    /// Extra afternoon bump as a share of the busy level.
    pub bump: f64,
    pub bump_hour: f64,
    pub saturday: f64,
    pub sunday: f64,
    /// Standard deviation of multiplicative per-reading noise.
    pub noise: f64,
    /// Standard deviation of the day-to-day level AR(1) process.
    pub day_level_sd: f64,
    /// Daily spike: probability, relative height, width in hours. The spike
    /// hour is uniform over the busy period.
    pub spike_prob: f64,
    pub spike_height: f64,
    pub spike_width: f64,
}

impl LoadProfile {
    /// Draws a business-like profile. `scale_range` and `noise` set the
    /// family; the shape parameters are drawn from fixed ranges.
    pub fn random(rng: &mut Rng, scale_range: (f64, f64), noise: f64) -> Self {
        let (lo, hi) = scale_range;
        LoadProfile {
            scale: (lo.ln() + rng.uniform() * (hi.ln() - lo.ln())).exp(),
            base_fraction: rng.uniform_range(0.2, 0.45),
            open_hour: rng.uniform_range(6.0, 9.0),
            close_hour: rng.uniform_range(16.0, 20.0),
            bump: rng.uniform_range(0.0, 0.25),
            bump_hour: rng.uniform_range(12.0, 16.0),
            saturday: rng.uniform_range(0.3, 0.8),
            sunday: rng.uniform_range(0.15, 0.6),
            noise,
            day_level_sd: 0.03,
            spike_prob: 0.0,
            spike_height: 0.0,
            spike_width: 1.0,
        }
    }

    /// Noise-free relative load (busy weekday ≈ 1) at `hour` on `weekday`
    /// (0 = Monday).
    pub fn shape(&self, hour: f64, weekday: u32) -> f64 {
        let edge = |h: f64| 1.0 / (1.0 + (-(h) * 2.5).exp());
        let busy = edge(hour - self.open_hour) * edge(self.close_hour - hour);
        let bump = self.bump * (-(hour - self.bump_hour).powi(2) / 2.0).exp();
        let day = match weekday {
            5 => self.saturday,
            6 => self.sunday,
            _ => 1.0,
        };
        self.base_fraction + (1.0 - self.base_fraction) * day * (busy + bump) / (1.0 + self.bump)
    }
}

/// `days` whole days of readings starting at midnight of `start`.
pub fn generate_series(id: &str, profile: &LoadProfile, start: NaiveDate, days: usize, samples_per_day: usize, rng: &mut Rng) -> Result<LoadSeries> {
    if samples_per_day == 0 || 86_400 % samples_per_day != 0 {
        return Err(Error::Param(format!("{samples_per_day} samples per day does not divide a day evenly")));
    }
    let step_h = 24.0 / samples_per_day as f64;
    let mut values = Vec::with_capacity(days * samples_per_day);
    let mut level = 0.0;
    for d in 0..days {
        let date = start + TimeDelta::days(d as i64);
        let wd = date.weekday().num_days_from_monday();
        level = 0.7 * level + profile.day_level_sd * rng.normal();
        let spike = (rng.uniform() < profile.spike_prob).then(|| {
            let hour = rng.uniform_range(profile.open_hour, profile.close_hour);
            let height = profile.spike_height * rng.uniform_range(0.6, 1.4);
            (hour, height)
        });
        for t in 0..samples_per_day {
            let hour = (t as f64 + 0.5) * step_h;
            let mut v = profile.shape(hour, wd) * (1.0 + level);
            if let Some((h0, height)) = spike {
                let x = (hour - h0) / profile.spike_width;
                if x.abs() < 1.0 {
                    v += height * 0.5 * (1.0 + (PI * x).cos());
                }
            }
            v *= 1.0 + profile.noise * rng.normal();
            values.push((v * profile.scale).max(0.0));
        }
    }
    let start_ts: DateTime<Utc> = start.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
    LoadSeries::new(id, start_ts, TimeDelta::seconds(86_400 / samples_per_day as i64), values)
}

/// Parameters of the public-plus-targets transfer benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferBenchmarkSpec {
    pub samples_per_day: usize,
    pub public_customers: usize,
    pub public_weeks: usize,
    pub targets: usize,
    pub target_train_weeks: usize,
    pub target_test_weeks: usize,
    pub public_noise: f64,
    pub target_noise: f64,
    pub public_scale: (f64, f64),
    pub target_scale: (f64, f64),
}

impl Default for TransferBenchmarkSpec {
    fn default() -> Self {
        TransferBenchmarkSpec {
            samples_per_day: 24,
            public_customers: 10,
            public_weeks: 12,
            targets: 5,
            target_train_weeks: 5,
            target_test_weeks: 1,
            public_noise: 0.03,
            target_noise: 0.06,
            public_scale: (50.0, 500.0),
            target_scale: (5.0, 2000.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransferBenchmark {
    pub public: Vec<LoadSeries>,
    pub targets: Vec<LoadSeries>,
}

pub fn transfer_benchmark(spec: &TransferBenchmarkSpec, seed: u64) -> Result<TransferBenchmark> {
    let mut rng = Rng::new(seed);
    let start = NaiveDate::from_ymd_opt(2019, 1, 7).expect("valid date");
    let mut public = Vec::new();
    for i in 0..spec.public_customers {
        let p = LoadProfile::random(&mut rng, spec.public_scale, spec.public_noise);
        public.push(generate_series(&format!("public_{:02}", i + 1), &p, start, spec.public_weeks * 7, spec.samples_per_day, &mut rng)?);
    }
    let mut targets = Vec::new();
    let days = (spec.target_train_weeks + spec.target_test_weeks) * 7;
    for i in 0..spec.targets {
        let p = LoadProfile::random(&mut rng, spec.target_scale, spec.target_noise);
        targets.push(generate_series(&format!("target_{:02}", i + 1), &p, start, days, spec.samples_per_day, &mut rng)?);
    }
    Ok(TransferBenchmark { public, targets })
}

/// Customers whose busy days carry one sharp spike at a random hour, so the
/// day's peak (and hence its demand-charge threshold) is hard to forecast.
pub fn peaky_benchmark(customers: usize, days: usize, samples_per_day: usize, seed: u64) -> Result<Vec<LoadSeries>> {
    let mut rng = Rng::new(seed);
    let start = NaiveDate::from_ymd_opt(2019, 1, 7).expect("valid date");
    (0..customers)
        .map(|i| {
            let mut p = LoadProfile::random(&mut rng, (100.0, 100.0), 0.02);
            p.spike_prob = 0.8;
            p.spike_height = 0.6;
            p.spike_width = 1.5;
            generate_series(&format!("peaky_{:02}", i + 1), &p, start, days, samples_per_day, &mut rng)
        })
        .collect()
}

/// Writes each series to `<dir>/<sub>/<id>.csv` plus a `<sub>_manifest.csv`.
pub fn write_corpus(dir: &Path, sub: &str, series: &[LoadSeries]) -> Result<()> {
    let folder = dir.join(sub);
    std::fs::create_dir_all(&folder).map_err(|e| Error::io(&folder, e))?;
    let mut manifest = String::from("customer_id,path\n");
    for s in series {
        let file = format!("{}.csv", s.customer_id);
        write_csv_series(s, &folder.join(&file))?;
        manifest.push_str(&format!("{},{sub}/{file}\n", s.customer_id));
    }
    write_atomic(&dir.join(format!("{sub}_manifest.csv")), manifest.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_shape_and_determinism() {
        let spec = TransferBenchmarkSpec::default();
        let a = transfer_benchmark(&spec, 3).unwrap();
        let b = transfer_benchmark(&spec, 3).unwrap();
        assert_eq!(a.public, b.public);
        assert_eq!(a.public.len(), 10);
        assert_eq!(a.targets.len(), 5);
        assert_eq!(a.public[0].values.len(), 12 * 7 * 24);
        assert_eq!(a.targets[0].values.len(), 6 * 7 * 24);
        assert_eq!(a.public[0].samples_per_day(), Some(24));
        assert!(a.targets.iter().all(|s| s.values.iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn weekends_are_quieter() {
        let mut rng = Rng::new(1);
        let p = LoadProfile::random(&mut rng, (10.0, 10.0), 0.0);
        assert!(p.shape(12.0, 6) < p.shape(12.0, 2));
        assert!(p.shape(2.0, 2) < p.shape(12.0, 2));
        assert!((p.shape(2.0, 2) - p.base_fraction).abs() < 0.01);
    }

    #[test]
    fn corpus_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = transfer_benchmark(&TransferBenchmarkSpec { public_customers: 2, targets: 1, ..Default::default() }, 0).unwrap();
        write_corpus(dir.path(), "public", &b.public).unwrap();
        let entries = crate::dataio::load_manifest(&dir.path().join("public_manifest.csv")).unwrap();
        assert_eq!(entries.len(), 2);
        let back = crate::dataio::load_csv_series(&entries[0].path).unwrap();
        assert_eq!(back.values.len(), b.public[0].values.len());
    }
}
