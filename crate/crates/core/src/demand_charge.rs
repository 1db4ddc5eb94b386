//! Battery peak shaving: dispatch feasibility for a meter threshold and the
//! demand charge threshold (DCT), the smallest peak the meter can be held to:
//!
//! ```text
//! DCT = min over p, s of max_t (x_t + p_t)
//!   s.t. |p_t| ≤ p_max,  s_t = s_{t-1} + p_t·Δt,  0 ≤ s_t ≤ C
//! ```
//!
//! For a fixed threshold `T` the constraints on step `t` are
//! `max(-p_max, -s_{t-1}/Δt) ≤ p_t ≤ min(p_max, T - x_t, (C - s_{t-1})/Δt)`.
//! Charging as hard as allowed keeps the state of charge at least as high as
//! any other feasible schedule (induction on `t`: the upper bound is
//! monotone in `s_{t-1}` once capped at `C`, and a higher charge only
//! relaxes the lower bound). So a threshold is feasible iff the greedy
//! schedule survives, and feasibility is monotone in `T`, which is what the
//! bisection in [`compute_dct`] relies on.

use crate::error::{Error, Result};

/// Slack, in kWh relative to the battery scale, absorbed when checking the
/// state of charge against zero.
const SOC_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatterySpec {
    /// Capacity `C` in kWh.
    pub capacity: f64,
    /// Power limit in kW, for both charging and discharging.
    pub p_max: f64,
    /// Step duration in hours.
    pub delta_t: f64,
    /// Initial state of charge in kWh.
    pub s0: f64,
}

impl BatterySpec {
    pub fn new(capacity: f64, p_max: f64, delta_t: f64, s0: f64) -> Result<Self> {
        let b = BatterySpec { capacity, p_max, delta_t, s0 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.capacity, self.p_max, self.delta_t, self.s0].iter().all(|v| v.is_finite());
        if !finite || self.capacity < 0.0 || self.p_max < 0.0 || self.delta_t <= 0.0 {
            return Err(Error::Param(format!("invalid battery {self:?}")));
        }
        if self.s0 < 0.0 || self.s0 > self.capacity {
            return Err(Error::Param(format!("initial charge {} outside [0, {}]", self.s0, self.capacity)));
        }
        Ok(())
    }

    /// Same battery in units where loads are divided by `k`.
    pub fn scaled(&self, k: f64) -> BatterySpec {
        BatterySpec { capacity: self.capacity / k, p_max: self.p_max / k, delta_t: self.delta_t, s0: self.s0 / k }
    }

    pub fn as_features(&self) -> [f64; 4] {
        [self.capacity, self.p_max, self.delta_t, self.s0]
    }
}

/// Greedy dispatch. `p` is positive when charging.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DispatchTrace {
    pub p: Vec<f64>,
    pub soc: Vec<f64>,
    pub meter: Vec<f64>,
}

impl DispatchTrace {
    /// `t,load_kw,p_kw,soc_kwh,meter_kw` rows.
    pub fn to_csv(&self, load: &[f64]) -> String {
        let mut out = String::from("t,load_kw,p_kw,soc_kwh,meter_kw\n");
        for t in 0..self.p.len() {
            out.push_str(&format!("{t},{},{},{},{}\n", load[t], self.p[t], self.soc[t], self.meter[t]));
        }
        out
    }
}

fn validate_load(load: &[f64]) -> Result<()> {
    if load.is_empty() {
        return Err(Error::Param("empty load".into()));
    }
    if let Some(i) = load.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Param(format!("load[{i}] = {} is not a finite nonnegative value", load[i])));
    }
    Ok(())
}

fn peak(load: &[f64]) -> f64 {
    load.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn greedy(load: &[f64], b: &BatterySpec, threshold: f64, trace: Option<&mut DispatchTrace>) -> bool {
    let slack = SOC_SLACK * b.capacity.max(1.0);
    let mut s = b.s0;
    let mut trace = trace;
    for &x in load {
        let p = if x > threshold {
            let need = x - threshold;
            if need > b.p_max || s - need * b.delta_t < -slack {
                return false;
            }
            -need
        } else {
            (threshold - x).min(b.p_max).min((b.capacity - s) / b.delta_t).max(0.0)
        };
        s = (s + p * b.delta_t).clamp(0.0, b.capacity);
        if let Some(tr) = trace.as_deref_mut() {
            tr.p.push(p);
            tr.soc.push(s);
            tr.meter.push(x + p);
        }
    }
    true
}

/// Whether the meter can be held at or below `threshold`, with the greedy
/// dispatch (partial up to the failing step when infeasible).
pub fn simulate_feasibility(load: &[f64], battery: &BatterySpec, threshold: f64) -> Result<(bool, DispatchTrace)> {
    validate_load(load)?;
    battery.validate()?;
    let mut trace = DispatchTrace::default();
    let ok = greedy(load, battery, threshold, Some(&mut trace));
    Ok((ok, trace))
}

/// Default bisection tolerance, `1e-6 · max(load)`.
pub fn default_tol(load: &[f64]) -> f64 {
    let m = peak(load);
    if m > 0.0 {
        1e-6 * m
    } else {
        1e-12
    }
}

/// Bisection over `[max(load) − p_max, max(load)]` to width `tol`. The
/// result is feasible and `result − tol` is not (unless the result is the
/// lower bound itself).
pub fn compute_dct(load: &[f64], battery: &BatterySpec, tol: f64) -> Result<f64> {
    validate_load(load)?;
    battery.validate()?;
    if !(tol > 0.0) {
        return Err(Error::Param(format!("tolerance must be positive, got {tol}")));
    }
    let hi0 = peak(load);
    let lo0 = hi0 - battery.p_max;
    if greedy(load, battery, lo0, None) {
        return Ok(lo0);
    }
    let (mut lo, mut hi) = (lo0, hi0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if greedy(load, battery, mid, None) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Resolution of [`compute_dct_oracle`]: threshold grid spacing plus the
/// largest threshold shift that SoC snapping can cause over the horizon.
pub fn oracle_resolution(len: usize, battery: &BatterySpec, soc_grid_n: usize, threshold_grid_n: usize) -> f64 {
    let t_step = battery.p_max / threshold_grid_n as f64;
    let soc_step = if soc_grid_n > 1 { battery.capacity / (soc_grid_n - 1) as f64 } else { 0.0 };
    t_step + len as f64 * soc_step / battery.delta_t
}

/// Independent reference solver for short horizons: for each candidate
/// threshold on a uniform grid over `[max − p_max, max]`, propagates the set
/// of reachable grid states of charge step by step and accepts the threshold
/// if the set never empties. Returns the smallest accepted grid threshold.
pub fn compute_dct_oracle(load: &[f64], battery: &BatterySpec, soc_grid_n: usize, threshold_grid_n: usize) -> Result<f64> {
    validate_load(load)?;
    battery.validate()?;
    if load.len() > 16 {
        return Err(Error::Size(format!("oracle handles at most 16 steps, got {}", load.len())));
    }
    if soc_grid_n < 256 || threshold_grid_n < 256 {
        return Err(Error::Param("oracle grids need at least 256 points".into()));
    }
    let hi = peak(load);
    let lo = hi - battery.p_max;
    let candidate = |k: usize| if k == threshold_grid_n { hi } else { lo + (hi - lo) * k as f64 / threshold_grid_n as f64 };
    let soc_levels: Vec<f64> = if battery.capacity > 0.0 {
        (0..soc_grid_n).map(|j| battery.capacity * j as f64 / (soc_grid_n - 1) as f64).collect()
    } else {
        vec![0.0]
    };
    // Grid point at or below s0; the exact s0 is also seeded when off-grid
    // by treating it as reachable at its floor (conservative).
    let start = soc_levels.iter().rposition(|&v| v <= battery.s0 + 1e-12 * battery.capacity.max(1.0)).unwrap_or(0);

    let feasible = |threshold: f64| -> bool {
        let n = soc_levels.len();
        let mut reach = vec![false; n];
        reach[start] = true;
        let mut prefix = vec![0usize; n + 1];
        let eps = 1e-9 * battery.capacity.max(1.0);
        for &x in load {
            let up = battery.p_max.min(threshold - x);
            if up < -battery.p_max - 1e-12 * battery.p_max.max(1.0) {
                return false;
            }
            for j in 0..n {
                prefix[j + 1] = prefix[j] + reach[j] as usize;
            }
            let mut next = vec![false; n];
            let mut any = false;
            for (j2, &s2) in soc_levels.iter().enumerate() {
                // s2 reachable from s iff s2 − up·Δt ≤ s ≤ s2 + p_max·Δt
                let from = s2 - up * battery.delta_t - eps;
                let to = s2 + battery.p_max * battery.delta_t + eps;
                let a = soc_levels.partition_point(|&v| v < from);
                let b = soc_levels.partition_point(|&v| v <= to);
                if b > a && prefix[b] > prefix[a] {
                    next[j2] = true;
                    any = true;
                }
            }
            if !any {
                return false;
            }
            reach = next;
        }
        true
    };

    // Feasibility is monotone in the threshold; binary search the grid.
    let (mut a, mut b) = (0usize, threshold_grid_n);
    if feasible(candidate(0)) {
        return Ok(candidate(0));
    }
    while b - a > 1 {
        let m = (a + b) / 2;
        if feasible(candidate(m)) {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(candidate(b))
}

/// `|DCT(actual) − DCT(forecast)|` with a shared bisection tolerance.
pub fn dct_error(actual: &[f64], forecast: &[f64], battery: &BatterySpec) -> Result<f64> {
    if actual.len() != forecast.len() {
        return Err(Error::Shape(format!("actual has {} steps, forecast {}", actual.len(), forecast.len())));
    }
    let tol = default_tol(actual).min(default_tol(forecast));
    Ok((compute_dct(actual, battery, tol)? - compute_dct(forecast, battery, tol)?).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(c: f64, p: f64, dt: f64, s0: f64) -> BatterySpec {
        BatterySpec::new(c, p, dt, s0).unwrap()
    }

    #[test]
    fn no_battery_feasible_iff_above_peak() {
        let load = [3.0, 7.0, 2.0];
        let bat = b(0.0, 5.0, 1.0, 0.0);
        assert!(simulate_feasibility(&load, &bat, 7.0).unwrap().0);
        assert!(!simulate_feasibility(&load, &bat, 6.99).unwrap().0);
        assert_eq!(compute_dct(&load, &bat, 1e-6).unwrap(), 7.0);
    }

    #[test]
    fn hand_feasibility_case() {
        let bat = b(2.0, 2.0, 1.0, 2.0);
        let (ok, trace) = simulate_feasibility(&[5.0, 1.0], &bat, 3.0).unwrap();
        assert!(ok);
        assert_eq!(trace.p[0], -2.0);
        assert_eq!(trace.meter[0], 3.0);
        assert!(!simulate_feasibility(&[5.0, 1.0], &bat, 2.9).unwrap().0);
    }

    #[test]
    fn feasible_trace_respects_constraints() {
        let load = [4.0, 9.0, 8.0, 1.0, 0.5, 7.0];
        let bat = b(5.0, 3.0, 0.5, 2.0);
        let dct = compute_dct(&load, &bat, 1e-9).unwrap();
        let (ok, tr) = simulate_feasibility(&load, &bat, dct).unwrap();
        assert!(ok);
        assert_eq!(tr.p.len(), load.len());
        let mut prev = bat.s0;
        for t in 0..load.len() {
            assert!(tr.p[t].abs() <= bat.p_max + 1e-12);
            assert!((tr.soc[t] - (prev + tr.p[t] * bat.delta_t)).abs() < 1e-9);
            assert!(tr.soc[t] >= 0.0 && tr.soc[t] <= bat.capacity);
            assert!(tr.meter[t] <= dct + 1e-12);
            prev = tr.soc[t];
        }
    }

    #[test]
    fn closed_form_dcts() {
        let tol = 1e-9;
        assert_eq!(compute_dct(&[6.0; 10], &b(4.0, 2.0, 1.0, 0.0), tol).unwrap(), 6.0);
        let d = compute_dct(&[5.0, 5.0, 1.0], &b(2.0, 4.0, 1.0, 2.0), tol).unwrap();
        assert!((d - 4.0).abs() <= tol, "{d}");
        let o = compute_dct_oracle(&[5.0, 5.0, 1.0], &b(2.0, 4.0, 1.0, 2.0), 1025, 1024).unwrap();
        assert!((o - 4.0).abs() <= oracle_resolution(3, &b(2.0, 4.0, 1.0, 2.0), 1025, 1024));
    }

    #[test]
    fn bisection_certificate() {
        let load = [2.0, 8.0, 3.0, 9.5, 1.0];
        let bat = b(3.0, 4.0, 1.0, 1.5);
        let tol = 1e-4;
        let d = compute_dct(&load, &bat, tol).unwrap();
        assert!(simulate_feasibility(&load, &bat, d).unwrap().0);
        assert!(d == 9.5 - 4.0 || !simulate_feasibility(&load, &bat, d - tol).unwrap().0);
    }

    #[test]
    fn oracle_guards() {
        let bat = b(1.0, 1.0, 1.0, 0.0);
        assert!(matches!(compute_dct_oracle(&[1.0; 17], &bat, 256, 256), Err(Error::Size(_))));
        assert!(matches!(compute_dct_oracle(&[1.0; 4], &bat, 16, 256), Err(Error::Param(_))));
        assert_eq!(compute_dct_oracle(&[1.0, 3.0, 2.0], &b(0.0, 2.0, 1.0, 0.0), 256, 256).unwrap(), 3.0);
    }

    #[test]
    fn dct_error_shift_and_identity() {
        let actual = [2.0, 6.0, 7.0, 3.0, 1.0, 5.0];
        let bat = b(2.0, 1.5, 1.0, 1.0);
        assert_eq!(dct_error(&actual, &actual, &bat).unwrap(), 0.0);
        let shifted: Vec<f64> = actual.iter().map(|v| v + 2.5).collect();
        assert!((dct_error(&actual, &shifted, &bat).unwrap() - 2.5).abs() < 1e-4);
    }

    #[test]
    fn better_mae_can_mean_worse_dct() {
        // Flat load with one sharp peak; forecast A keeps the peak but one
        // step late, forecast B flattens it away.
        let mut actual = vec![1.0; 24];
        actual[12] = 5.0;
        let mut shape_preserving = vec![1.0; 24];
        shape_preserving[13] = 5.0;
        let smoothed = vec![1.0; 24];
        let bat = b(1.0, 1.0, 1.0, 1.0);
        let mae = |f: &[f64]| actual.iter().zip(f).map(|(a, b)| (a - b).abs()).sum::<f64>() / 24.0;
        assert!(mae(&smoothed) < mae(&shape_preserving));
        let err_a = dct_error(&actual, &shape_preserving, &bat).unwrap();
        let err_b = dct_error(&actual, &smoothed, &bat).unwrap();
        assert!(err_a < err_b, "{err_a} vs {err_b}");
        assert!(err_b > 2.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(BatterySpec::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(BatterySpec::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(compute_dct(&[1.0, -1.0], &b(1.0, 1.0, 1.0, 0.0), 1e-6).is_err());
        assert!(compute_dct(&[1.0], &b(1.0, 1.0, 1.0, 0.0), 0.0).is_err());
    }
}
