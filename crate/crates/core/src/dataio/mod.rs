//! Load-series ingestion, resampling, 4-week windowing and max-normalization.

mod series;
mod windows;

pub use series::{load_csv_series, load_manifest, resample, write_csv_series, LoadSeries, ManifestEntry};
pub use windows::{
    build_windows, denormalize, history_to_window, normalize, split_train_val, window_to_history,
    NormalizationRef, RefSource, WindowSample, DAYS_PER_WEEK, HISTORY_DAYS, WEEKS,
};
