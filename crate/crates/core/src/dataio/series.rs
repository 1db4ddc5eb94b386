use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta, Timelike, Utc};

use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Longest run of missing readings that is filled by interpolation.
const MAX_INTERPOLATED: i64 = 4;

/// Uniformly sampled load readings in kW.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadSeries {
    pub customer_id: String,
    pub start: DateTime<Utc>,
    pub interval: TimeDelta,
    pub values: Vec<f64>,
}

impl LoadSeries {
    pub fn new(customer_id: impl Into<String>, start: DateTime<Utc>, interval: TimeDelta, values: Vec<f64>) -> Result<Self> {
        if interval <= TimeDelta::zero() {
            return Err(Error::Param(format!("interval must be positive, got {interval}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data(format!("reading {i} is {} (loads must be finite and nonnegative)", values[i])));
        }
        Ok(LoadSeries { customer_id: customer_id.into(), start, interval, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + self.interval * i as i32
    }

    /// Readings per day, if the interval divides 24 h evenly.
    pub fn samples_per_day(&self) -> Option<usize> {
        let day = TimeDelta::days(1).num_milliseconds();
        let step = self.interval.num_milliseconds();
        (step > 0 && day % step == 0).then(|| (day / step) as usize)
    }

    /// Index of the first reading at midnight and the number of complete
    /// days from there on.
    pub fn full_days(&self) -> Option<(usize, usize)> {
        let s = self.samples_per_day()?;
        let offset = (0..s.min(self.len())).find(|&i| {
            let t = self.timestamp(i);
            t.num_seconds_from_midnight() == 0 && t.nanosecond() == 0
        })?;
        Some((offset, (self.len() - offset) / s))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok().map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}

/// Reads a `timestamp,load_kw` CSV. Timestamps are ISO-8601 in UTC; rows must
/// be strictly increasing. The interval is the smallest spacing between rows;
/// runs of up to four missing readings are linearly interpolated and longer
/// gaps are rejected.
pub fn load_csv_series(path: &Path) -> Result<LoadSeries> {
    let ingest = |line: usize, msg: String| Error::Ingest { path: path.to_path_buf(), line, msg };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ingest(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| ingest(1, e.to_string()))?.clone();
    if header.len() != 2 || &header[0] != "timestamp" || &header[1] != "load_kw" {
        return Err(ingest(1, format!("expected header `timestamp,load_kw`, got `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows: Vec<(usize, DateTime<Utc>, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ingest(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(ingest(line, format!("expected 2 fields, got {}", record.len())));
        }
        let t = parse_timestamp(&record[0]).ok_or_else(|| ingest(line, format!("unparsable timestamp `{}`", &record[0])))?;
        let v: f64 = record[1].parse().map_err(|_| ingest(line, format!("unparsable load `{}`", &record[1])))?;
        if !v.is_finite() {
            return Err(ingest(line, format!("non-finite load `{}`", &record[1])));
        }
        if v < 0.0 {
            return Err(ingest(line, format!("negative load {v}")));
        }
        if let Some(&(_, prev, _)) = rows.last() {
            if t <= prev {
                return Err(ingest(line, format!("rows not time-sorted: {t} does not follow {prev}")));
            }
        }
        rows.push((line, t, v));
    }
    if rows.len() < 2 {
        return Err(ingest(rows.first().map_or(1, |r| r.0), "need at least two readings to infer the interval".into()));
    }
    let interval = rows.windows(2).map(|w| w[1].1 - w[0].1).min().expect("two rows");
    let step = interval.num_milliseconds();
    if step <= 0 {
        return Err(ingest(rows[1].0, "sub-millisecond sampling is not supported".into()));
    }
    let mut values = vec![rows[0].2];
    for w in rows.windows(2) {
        let (_, t0, v0) = w[0];
        let (line, t1, v1) = w[1];
        let gap = (t1 - t0).num_milliseconds();
        if gap % step != 0 {
            return Err(ingest(line, format!("spacing {} is not a multiple of the interval {interval}", t1 - t0)));
        }
        let k = gap / step;
        if k - 1 > MAX_INTERPOLATED {
            return Err(ingest(line, format!("gap from {t0} to {t1} ({} missing readings)", k - 1)));
        }
        for j in 1..k {
            let f = j as f64 / k as f64;
            values.push(v0 + f * (v1 - v0));
        }
        values.push(v1);
    }
    let customer_id = path.file_stem().map_or_else(|| "series".to_string(), |s| s.to_string_lossy().into_owned());
    LoadSeries::new(customer_id, rows[0].1, interval, values)
}

pub fn write_csv_series(series: &LoadSeries, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(series.len() * 32);
    out.push_str("timestamp,load_kw\n");
    for (i, v) in series.values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", series.timestamp(i).format("%Y-%m-%dT%H:%M:%SZ"), v));
    }
    write_atomic(path, out.as_bytes())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub customer_id: String,
    pub path: PathBuf,
}

/// Reads a `customer_id,path` listing. Relative paths resolve against the
/// manifest's directory; blank lines and `#` comments are skipped, as is an
/// optional `customer_id,path` header.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "customer_id,path") {
            continue;
        }
        let (id, p) = line.split_once(',').ok_or_else(|| Error::Ingest {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("expected `customer_id,path`, got `{line}`"),
        })?;
        let p = PathBuf::from(p.trim());
        entries.push(ManifestEntry { customer_id: id.trim().to_string(), path: if p.is_absolute() { p } else { base.join(p) } });
    }
    Ok(entries)
}

/// Changes the sampling interval. Coarser targets average whole bins (a
/// trailing partial bin is dropped); finer targets interpolate linearly and
/// hold the last reading so every source step still spans a full bin.
pub fn resample(series: &LoadSeries, target: TimeDelta) -> Result<LoadSeries> {
    let src = series.interval.num_milliseconds();
    let dst = target.num_milliseconds();
    if dst <= 0 {
        return Err(Error::Param(format!("target interval must be positive, got {target}")));
    }
    let values = if dst == src {
        series.values.clone()
    } else if dst % src == 0 {
        let k = (dst / src) as usize;
        series.values.chunks_exact(k).map(|c| c.iter().sum::<f64>() / k as f64).collect()
    } else if src % dst == 0 {
        let k = (src / dst) as usize;
        let v = &series.values;
        let mut out = Vec::with_capacity(v.len() * k);
        for i in 0..v.len() {
            let next = v.get(i + 1).copied().unwrap_or(v[i]);
            for j in 0..k {
                out.push(v[i] + (next - v[i]) * j as f64 / k as f64);
            }
        }
        out
    } else {
        return Err(Error::Param(format!("intervals {} and {target} are not commensurate", series.interval)));
    };
    LoadSeries::new(series.customer_id.clone(), series.start, target, values)
}
