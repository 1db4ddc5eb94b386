//! Forecast error metrics and the per-customer, per-model report.
//!
//! Aggregation order: MAE per test day, mean over days, ratio to the
//! reference model per customer, then mean over customers.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::demand_charge::{dct_error, BatterySpec};
use crate::error::{Error, Result};

/// Name of the model every other model is normalised against.
pub const REFERENCE_MODEL: &str = "Pre-trained";

/// Mean absolute error `(1/N) Σ |aᵢ − pᵢ|`.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::Shape(format!("MAE of {} actual vs {} predicted values", actual.len(), predicted.len())));
    }
    if actual.is_empty() {
        return Err(Error::Param("MAE of empty vectors".into()));
    }
    Ok(actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum::<f64>() / actual.len() as f64)
}

/// `(other − ours) / other · 100`.
pub fn improvement_pct(tna_ours: f64, tna_other: f64) -> Result<f64> {
    if !(tna_other > 0.0) {
        return Err(Error::Degenerate(format!("improvement relative to nonpositive TNA.MAE {tna_other}")));
    }
    Ok((tna_other - tna_ours) / tna_other * 100.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaeRow {
    pub customer_id: String,
    pub model: String,
    pub mae_kw: f64,
    pub dct_error_kw: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NaRow {
    pub customer_id: String,
    pub model: String,
    pub na_mae: f64,
}

/// Averaged test-day MAE for every (customer, model) pair, in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub rows: Vec<MaeRow>,
}

impl MetricReport {
    pub fn insert(&mut self, customer_id: &str, model: &str, mae_kw: f64, dct_error_kw: Option<f64>) -> Result<()> {
        if !(mae_kw >= 0.0 && mae_kw.is_finite()) {
            return Err(Error::Data(format!("{customer_id}/{model}: MAE must be a finite nonnegative number, got {mae_kw}")));
        }
        if self.get(customer_id, model).is_some() {
            return Err(Error::Data(format!("duplicate entry for {customer_id}/{model}")));
        }
        self.rows.push(MaeRow { customer_id: customer_id.into(), model: model.into(), mae_kw, dct_error_kw });
        Ok(())
    }

    pub fn get(&self, customer_id: &str, model: &str) -> Option<&MaeRow> {
        self.rows.iter().find(|r| r.customer_id == customer_id && r.model == model)
    }

    fn ordered(&self, f: impl Fn(&MaeRow) -> &str) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for r in &self.rows {
            if !seen.iter().any(|s| s == f(r)) {
                seen.push(f(r).to_string());
            }
        }
        seen
    }

    pub fn customers(&self) -> Vec<String> {
        self.ordered(|r| &r.customer_id)
    }

    pub fn models(&self) -> Vec<String> {
        self.ordered(|r| &r.model)
    }

    /// Reads a long-format `customer_id,model,mae_kw` table.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Ingest {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("missing column `{name}`"),
            })
        };
        let (ci, mi, vi) = (col("customer_id")?, col("model")?, col("mae_kw")?);
        let mut report = MetricReport::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = i + 2;
            let field = |k: usize| rec.get(k).map(str::trim).unwrap_or("");
            let v: f64 = field(vi).parse().map_err(|_| Error::Ingest {
                path: path.to_path_buf(),
                line,
                msg: format!("bad mae_kw {:?}", field(vi)),
            })?;
            report.insert(field(ci), field(mi), v, None).map_err(|e| Error::Ingest { path: path.to_path_buf(), line, msg: e.to_string() })?;
        }
        Ok(report)
    }

    /// `customer_id,model,mae_kw,na_mae[,dct_error_kw]`.
    pub fn to_csv(&self, reference: &str) -> Result<String> {
        let na = na_mae(self, reference)?;
        let with_dct = self.rows.iter().any(|r| r.dct_error_kw.is_some());
        let mut out = String::from(if with_dct { "customer_id,model,mae_kw,na_mae,dct_error_kw\n" } else { "customer_id,model,mae_kw,na_mae\n" });
        for (r, n) in self.rows.iter().zip(&na) {
            out.push_str(&format!("{},{},{},{}", r.customer_id, r.model, r.mae_kw, n.na_mae));
            if with_dct {
                out.push(',');
                if let Some(d) = r.dct_error_kw {
                    out.push_str(&d.to_string());
                }
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// `model,tna_mae,improvement_vs_pretrained_pct,<ours>_improvement_pct`:
    /// per model, its gain over the reference and the gain of `ours` over it.
    pub fn summary_csv(&self, reference: &str, ours: &str) -> Result<String> {
        let tna = tna_mae(&na_mae(self, reference)?)?;
        let ours_tna = tna.iter().find(|(m, _)| m == ours).map(|(_, v)| *v);
        let ref_tna = tna.iter().find(|(m, _)| m == reference).map(|(_, v)| *v).unwrap_or(1.0);
        let mut out = format!("model,tna_mae,improvement_vs_pretrained_pct,{ours}_improvement_pct\n");
        for (model, v) in &tna {
            let vs_ref = improvement_pct(*v, ref_tna)?;
            let gain = match ours_tna {
                Some(o) if model != ours => format!("{:.4}", improvement_pct(o, *v)?),
                _ => String::new(),
            };
            out.push_str(&format!("{model},{v:.6},{vs_ref:.4},{gain}\n"));
        }
        Ok(out)
    }

    /// Nested JSON: per-customer rows, NA.MAE, TNA.MAE per model.
    pub fn to_json(&self, reference: &str) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            reference: &'a str,
            customers: BTreeMap<String, BTreeMap<String, Cell>>,
            tna_mae: BTreeMap<String, f64>,
        }
        #[derive(Serialize)]
        struct Cell {
            mae_kw: f64,
            na_mae: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            dct_error_kw: Option<f64>,
        }
        let na = na_mae(self, reference)?;
        let mut customers: BTreeMap<String, BTreeMap<String, Cell>> = BTreeMap::new();
        for (r, n) in self.rows.iter().zip(&na) {
            customers.entry(r.customer_id.clone()).or_default().insert(
                r.model.clone(),
                Cell { mae_kw: r.mae_kw, na_mae: n.na_mae, dct_error_kw: r.dct_error_kw },
            );
        }
        let tna_mae = tna_mae(&na)?.into_iter().collect();
        serde_json::to_string_pretty(&Doc { reference, customers, tna_mae }).map_err(|e| Error::Format(e.to_string()))
    }

    /// Plot-ready `customer_id,model,metric,value` rows.
    pub fn to_long_csv(&self, reference: &str) -> Result<String> {
        let na = na_mae(self, reference)?;
        let mut out = String::from("customer_id,model,metric,value\n");
        for (r, n) in self.rows.iter().zip(&na) {
            out.push_str(&format!("{},{},mae_kw,{}\n", r.customer_id, r.model, r.mae_kw));
            out.push_str(&format!("{},{},na_mae,{}\n", r.customer_id, r.model, n.na_mae));
            if let Some(d) = r.dct_error_kw {
                out.push_str(&format!("{},{},dct_error_kw,{d}\n", r.customer_id, r.model));
            }
        }
        Ok(out)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Ingest { path: path.to_path_buf(), line, msg: e.to_string() }
}

/// Every row's MAE divided by the same customer's `reference` MAE, in row order.
pub fn na_mae(report: &MetricReport, reference: &str) -> Result<Vec<NaRow>> {
    let mut out = Vec::with_capacity(report.rows.len());
    for r in &report.rows {
        let denom = report
            .get(&r.customer_id, reference)
            .ok_or_else(|| Error::Data(format!("customer {} has no `{reference}` entry", r.customer_id)))?
            .mae_kw;
        if !(denom > 0.0) {
            return Err(Error::Degenerate(format!("customer {}: `{reference}` MAE is zero", r.customer_id)));
        }
        out.push(NaRow { customer_id: r.customer_id.clone(), model: r.model.clone(), na_mae: r.mae_kw / denom });
    }
    Ok(out)
}

/// Mean NA.MAE per model over all customers, in first-appearance order.
/// Every model must have a value for every customer.
pub fn tna_mae(rows: &[NaRow]) -> Result<Vec<(String, f64)>> {
    let mut customers: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !customers.contains(&r.customer_id.as_str()) {
            customers.push(&r.customer_id);
        }
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("no NA.MAE values".into()));
    }
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for m in &models {
        let mut sum = 0.0;
        for c in &customers {
            match rows.iter().find(|r| r.model == *m && r.customer_id == *c) {
                Some(r) => sum += r.na_mae,
                None => missing.push(format!("{c}/{m}")),
            }
        }
        out.push((m.to_string(), sum / customers.len() as f64));
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!("missing NA.MAE cells: {}", missing.join(", "))));
    }
    Ok(out)
}

/// Test-day forecasts of several models for one customer, in kW.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomerForecasts {
    pub customer_id: String,
    /// Observed profile of each test day.
    pub actual: Vec<Vec<f64>>,
    /// `(model name, forecast per test day)`.
    pub forecasts: Vec<(String, Vec<Vec<f64>>)>,
}

/// Per-day MAE (and DCT error, given a battery) averaged over test days for
/// every (customer, model).
pub fn evaluate_models(cases: &[CustomerForecasts], battery: Option<&BatterySpec>) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    for case in cases {
        if case.actual.is_empty() {
            return Err(Error::Data(format!("customer {} has no test days", case.customer_id)));
        }
        for (model, days) in &case.forecasts {
            if days.len() != case.actual.len() {
                return Err(Error::Shape(format!(
                    "{}/{model}: {} forecasts for {} test days",
                    case.customer_id,
                    days.len(),
                    case.actual.len()
                )));
            }
            let mut mae_sum = 0.0;
            let mut dct_sum = 0.0;
            for (actual, pred) in case.actual.iter().zip(days) {
                mae_sum += mae(actual, pred)?;
                if let Some(b) = battery {
                    let clipped: Vec<f64> = pred.iter().map(|v| v.max(0.0)).collect();
                    dct_sum += dct_error(actual, &clipped, b)?;
                }
            }
            let n = days.len() as f64;
            report.insert(&case.customer_id, model, mae_sum / n, battery.map(|_| dct_sum / n))?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> MetricReport {
        MetricReport::from_csv_path(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/customer_mae.csv")).unwrap()
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 1.5);
        assert_eq!(mae(&[1.0, 7.0], &[3.0, 2.0]).unwrap(), mae(&[3.0, 2.0], &[1.0, 7.0]).unwrap());
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn improvement_examples() {
        assert!((improvement_pct(0.70, 0.87).unwrap() - 19.54).abs() < 0.01);
        assert!((improvement_pct(0.70, 1.0).unwrap() - 30.0).abs() < 1e-12);
        assert_eq!(improvement_pct(0.5, 0.5).unwrap(), 0.0);
        assert!(matches!(improvement_pct(0.5, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fixture_ratios() {
        let r = fixture();
        assert_eq!(r.customers().len(), 23);
        assert_eq!(r.models(), vec!["TFL", "Pre-trained", "Fresh", "SARIMA"]);
        let na = na_mae(&r, REFERENCE_MODEL).unwrap();
        let find = |c: &str, m: &str| na.iter().find(|x| x.customer_id == c && x.model == m).unwrap().na_mae;
        assert!((find("grocery_1", "TFL") - 6.1 / 8.3).abs() < 1e-15);
        assert!((find("grocery_1", "TFL") - 0.7349).abs() < 1e-4);
        assert!((find("manufacturing_2", "TFL") - 0.9910).abs() < 1e-4);
        assert!(na.iter().filter(|x| x.model == REFERENCE_MODEL).all(|x| x.na_mae == 1.0));
        let tna = tna_mae(&na).unwrap();
        assert_eq!(tna[1], ("Pre-trained".to_string(), 1.0));
    }

    #[test]
    fn single_customer_and_missing_cells() {
        let mut r = MetricReport::default();
        r.insert("a", "Pre-trained", 4.0, None).unwrap();
        r.insert("a", "X", 3.0, None).unwrap();
        assert_eq!(tna_mae(&na_mae(&r, REFERENCE_MODEL).unwrap()).unwrap()[1].1, 0.75);
        r.insert("b", "Pre-trained", 2.0, None).unwrap();
        assert!(matches!(tna_mae(&na_mae(&r, REFERENCE_MODEL).unwrap()), Err(Error::Data(m)) if m.contains("b/X")));
        r.insert("c", "X", 1.0, None).unwrap();
        assert!(matches!(na_mae(&r, REFERENCE_MODEL), Err(Error::Data(_))));
        let mut z = MetricReport::default();
        z.insert("a", "Pre-trained", 0.0, None).unwrap();
        assert!(matches!(na_mae(&z, REFERENCE_MODEL), Err(Error::Degenerate(_))));
        assert!(matches!(z.insert("a", "Pre-trained", 1.0, None), Err(Error::Data(_))));
    }

    #[test]
    fn perfect_and_biased_models() {
        let actual = vec![vec![5.0; 4], vec![5.0; 4]];
        let case = CustomerForecasts {
            customer_id: "flat".into(),
            actual: actual.clone(),
            forecasts: vec![
                ("Pre-trained".into(), vec![vec![4.0; 4], vec![6.0; 4]]),
                ("perfect".into(), actual.clone()),
                ("biased".into(), actual.iter().map(|d| d.iter().map(|v| v + 0.25).collect()).collect()),
            ],
        };
        let battery = BatterySpec::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let r = evaluate_models(&[case], Some(&battery)).unwrap();
        assert_eq!(r.get("flat", "perfect").unwrap().mae_kw, 0.0);
        assert_eq!(r.get("flat", "perfect").unwrap().dct_error_kw, Some(0.0));
        assert_eq!(r.get("flat", "biased").unwrap().mae_kw, 0.25);
        let na = na_mae(&r, REFERENCE_MODEL).unwrap();
        assert_eq!(na.iter().map(|x| x.na_mae).collect::<Vec<_>>(), vec![1.0, 0.0, 0.25]);
    }

    #[test]
    fn emitters() {
        let r = fixture();
        let csv = r.to_csv(REFERENCE_MODEL).unwrap();
        assert!(csv.starts_with("customer_id,model,mae_kw,na_mae\n"));
        assert_eq!(csv.lines().count(), 93);
        let summary = r.summary_csv(REFERENCE_MODEL, "TFL").unwrap();
        assert_eq!(summary.lines().count(), 5);
        assert!(summary.lines().nth(2).unwrap().starts_with("Pre-trained,1.000000,0.0000,"));
        let json: serde_json::Value = serde_json::from_str(&r.to_json(REFERENCE_MODEL).unwrap()).unwrap();
        assert_eq!(json["tna_mae"]["Pre-trained"], 1.0);
        assert_eq!(r.to_long_csv(REFERENCE_MODEL).unwrap().lines().count(), 1 + 2 * 92);
    }
}
