//! Normalised error table from the bundled 23-customer MAE grid: per-customer
//! NA.MAE, their mean per model, and relative improvements.
//!
//! `cargo run --example evaluate_fixture`

use std::path::Path;

use loadcast::evaluation::{improvement_pct, na_mae, tna_mae, MetricReport, REFERENCE_MODEL};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/customer_mae.csv");
    let report = MetricReport::from_csv_path(&path)?;
    let rows = na_mae(&report, REFERENCE_MODEL)?;
    for customer in report.customers() {
        let cells: Vec<String> =
            rows.iter().filter(|r| r.customer_id == customer).map(|r| format!("{} {:.3}", r.model, r.na_mae)).collect();
        println!("{customer:<22} {}", cells.join("  "));
    }
    let tna = tna_mae(&rows)?;
    let tfl = tna.iter().find(|(m, _)| m == "TFL").map(|t| t.1).unwrap_or(f64::NAN);
    println!();
    for (model, v) in &tna {
        println!("TNA.MAE {model:<12} {v:.4}   TFL improvement {:>6.2}%", improvement_pct(tfl, *v)?);
    }
    Ok(())
}
