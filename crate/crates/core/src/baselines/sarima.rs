use super::nelder_mead::{nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};

/// `(p, d, q)(P, D, Q)_s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SarimaOrders {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub sp: usize,
    pub sd: usize,
    pub sq: usize,
    pub s: usize,
}

impl SarimaOrders {
    /// `(1,0,1)(0,1,1)_s`.
    pub fn default_for(s: usize) -> Self {
        SarimaOrders { p: 1, d: 0, q: 1, sp: 0, sd: 1, sq: 1, s }
    }

    pub fn num_coefficients(&self) -> usize {
        self.p + self.q + self.sp + self.sq
    }

    fn seasonal(&self) -> bool {
        self.sp + self.sd + self.sq > 0
    }

    /// Readings consumed by differencing.
    pub fn diff_lag(&self) -> usize {
        self.d + self.sd * self.s
    }

    /// Shortest differenced series accepted by [`sarima_fit`]: ten readings
    /// per coefficient per seasonal period (at least one of each).
    pub fn min_fit_len(&self) -> usize {
        10 * self.num_coefficients().max(1) * if self.seasonal() { self.s } else { 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::Param("seasonal period must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SarimaSpec {
    pub orders: SarimaOrders,
    /// Non-seasonal AR coefficients φ in `1 − φ₁B − …`.
    pub ar: Vec<f64>,
    /// Non-seasonal MA coefficients θ in `1 + θ₁B + …`.
    pub ma: Vec<f64>,
    pub sar: Vec<f64>,
    pub sma: Vec<f64>,
    /// Mean of the differenced series; zero whenever any differencing is applied.
    pub mean: f64,
    /// In-sample residual variance.
    pub sigma2: f64,
    pub stationary: bool,
    /// Conditional sum of squares after each optimiser iteration.
    pub css_trace: Vec<f64>,
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn lag_poly(coeffs: &[f64], step: usize, sign: f64) -> Vec<f64> {
    let mut p = vec![0.0; coeffs.len() * step + 1];
    p[0] = 1.0;
    for (i, c) in coeffs.iter().enumerate() {
        p[(i + 1) * step] = sign * c;
    }
    p
}

/// Combined lag weights `(α, β)` such that
/// `z_t = Σ αᵢ z_{t−i} + e_t + Σ βⱼ e_{t−j}`; index 0 is unused.
fn lag_weights(ar: &[f64], ma: &[f64], sar: &[f64], sma: &[f64], s: usize) -> (Vec<f64>, Vec<f64>) {
    let a = poly_mul(&lag_poly(ar, 1, -1.0), &lag_poly(sar, s, -1.0));
    let m = poly_mul(&lag_poly(ma, 1, 1.0), &lag_poly(sma, s, 1.0));
    (a.iter().map(|v| -v).collect(), m)
}

/// One-step residuals with pre-sample shocks set to zero. Returns `None` if
/// the recursion blows up.
fn residuals(z: &[f64], alpha: &[f64], beta: &[f64]) -> Option<Vec<f64>> {
    let start = alpha.len() - 1;
    let mut e = vec![0.0; z.len()];
    for t in start..z.len() {
        let mut v = z[t];
        for i in 1..alpha.len() {
            v -= alpha[i] * z[t - i];
        }
        for j in 1..beta.len().min(t + 1) {
            v -= beta[j] * e[t - j];
        }
        if !v.is_finite() || v.abs() > 1e150 {
            return None;
        }
        e[t] = v;
    }
    Some(e)
}

/// Coefficients of `(1 − B)^d (1 − B^s)^D`.
pub fn difference_poly(d: usize, sd: usize, s: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 0..d {
        p = poly_mul(&p, &[1.0, -1.0]);
    }
    for _ in 0..sd {
        p = poly_mul(&p, &lag_poly(&[1.0], s, -1.0));
    }
    p
}

/// Applies ordinary and seasonal differencing; the result is shorter by
/// `d + D·s`.
pub fn difference(series: &[f64], d: usize, sd: usize, s: usize) -> Vec<f64> {
    let c = difference_poly(d, sd, s);
    let lag = c.len() - 1;
    (lag..series.len()).map(|t| c.iter().enumerate().map(|(k, ck)| ck * series[t - k]).sum()).collect()
}

/// Inverse of [`difference`]: continues `history` (at least `d + D·s`
/// readings) with the values whose differences are `diffs`. Returns history
/// followed by the reconstructed readings.
pub fn integrate(diffs: &[f64], history: &[f64], d: usize, sd: usize, s: usize) -> Result<Vec<f64>> {
    let c = difference_poly(d, sd, s);
    let lag = c.len() - 1;
    if history.len() < lag {
        return Err(Error::Data(format!("integration needs {lag} readings of history, got {}", history.len())));
    }
    let mut y = history.to_vec();
    for w in diffs {
        let t = y.len();
        let v = w - (1..=lag).map(|k| c[k] * y[t - k]).sum::<f64>();
        y.push(v);
    }
    Ok(y)
}

/// Whether `1 − φ₁z − … − φₚzᵖ` has all roots outside the unit circle,
/// by the step-down recursion on reflection coefficients.
pub fn is_stationary(phi: &[f64]) -> bool {
    let mut a = phi.to_vec();
    while let Some(&k) = a.last() {
        if !(k.abs() < 1.0) {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        a = (0..m - 1).map(|i| (a[i] + k * a[m - 2 - i]) / denom).collect();
    }
    true
}

fn split(orders: &SarimaOrders, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (p, q, sp) = (orders.p, orders.q, orders.sp);
    (x[..p].to_vec(), x[p..p + q].to_vec(), x[p + q..p + q + sp].to_vec(), x[p + q + sp..].to_vec())
}

fn check_series(series: &[f64]) -> Result<()> {
    match series.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Data(format!("series[{i}] is not finite"))),
        None => Ok(()),
    }
}

/// Fits AR, MA and seasonal coefficients by minimising the conditional sum
/// of squares of the differenced, demeaned series with Nelder–Mead.
pub fn sarima_fit(series: &[f64], orders: SarimaOrders) -> Result<SarimaSpec> {
    orders.validate()?;
    check_series(series)?;
    let w = difference(series, orders.d, orders.sd, orders.s);
    let need = orders.min_fit_len();
    if w.len() < need {
        return Err(Error::Data(format!(
            "SARIMA fit needs at least {need} readings after differencing, got {}",
            w.len()
        )));
    }
    let mean = if orders.d + orders.sd == 0 { w.iter().sum::<f64>() / w.len() as f64 } else { 0.0 };
    let z: Vec<f64> = w.iter().map(|v| v - mean).collect();
    let css = |x: &[f64]| -> f64 {
        let (ar, ma, sar, sma) = split(&orders, x);
        let (alpha, beta) = lag_weights(&ar, &ma, &sar, &sma, orders.s);
        match residuals(&z, &alpha, &beta) {
            Some(e) => e[alpha.len() - 1..].iter().map(|v| v * v).sum(),
            None => f64::INFINITY,
        }
    };
    let k = orders.num_coefficients();
    let result = nelder_mead(css, &vec![0.0; k], &NelderMeadOptions { max_iter: 2000 * k.max(1), ..Default::default() });
    if !result.f.is_finite() {
        let tail: Vec<String> = result.trace.iter().rev().take(5).map(|v| format!("{v:e}")).collect();
        return Err(Error::Numeric(format!(
            "SARIMA CSS optimisation diverged after {} iterations (last objective values {})",
            result.iterations,
            tail.join(", ")
        )));
    }
    let (ar, ma, sar, sma) = split(&orders, &result.x);
    let stationary = is_stationary(&ar) && is_stationary(&sar);
    if !stationary {
        log::warn!("fitted SARIMA AR polynomial has a root on or inside the unit circle: ar={ar:?} sar={sar:?}");
    }
    let used = z.len() - (orders.p + orders.sp * orders.s);
    let mut css_trace = result.trace;
    if css_trace.is_empty() {
        css_trace.push(result.f);
    }
    Ok(SarimaSpec { orders, ar, ma, sar, sma, mean, sigma2: result.f / used as f64, stationary, css_trace })
}

/// Iterated one-step forecasts `horizon` readings past the end of `series`,
/// with future shocks at zero and differencing undone.
pub fn sarima_forecast(spec: &SarimaSpec, series: &[f64], horizon: usize) -> Result<Vec<f64>> {
    check_series(series)?;
    let o = &spec.orders;
    let (alpha, beta) = lag_weights(&spec.ar, &spec.ma, &spec.sar, &spec.sma, o.s);
    let need = o.diff_lag() + alpha.len().max(beta.len());
    if series.len() < need {
        return Err(Error::Data(format!("SARIMA forecast needs {need} readings of history, got {}", series.len())));
    }
    let mut z: Vec<f64> = difference(series, o.d, o.sd, o.s).iter().map(|v| v - spec.mean).collect();
    let mut e = residuals(&z, &alpha, &beta).ok_or_else(|| Error::Numeric("SARIMA residual recursion diverged".into()))?;
    let n = z.len();
    for t in n..n + horizon {
        let mut v = 0.0;
        for i in 1..alpha.len() {
            v += alpha[i] * z[t - i];
        }
        for j in 1..beta.len() {
            v += beta[j] * e[t - j];
        }
        z.push(v);
        e.push(0.0);
    }
    let future: Vec<f64> = z[n..].iter().map(|v| v + spec.mean).collect();
    let y = integrate(&future, series, o.d, o.sd, o.s)?;
    let out = y[series.len()..].to_vec();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("SARIMA forecast is not finite".into()));
    }
    Ok(out)
}
