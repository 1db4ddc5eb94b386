use std::path::Path;
use std::process::{Command, Output};

fn loadcast(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadcast")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/customer_mae.csv").display().to_string()
}

const COMPACT: [&str; 8] = ["--samples-per-day", "24", "--filters", "8,8,8,8,8", "--pools", "2x1,2x1,2x1,3x2,1x2", "--dense-width", "16"];

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(loadcast(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(loadcast(&["dct", "--help"], dir.path()).status.code(), Some(0));
    assert_eq!(loadcast(&["frobnicate"], dir.path()).status.code(), Some(1));
    let o = loadcast(&["dct", "--capacity", "1", "--pmax", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--load"));
}

#[test]
fn dct_without_storage_is_the_peak() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("l.csv"), "timestamp,load_kw\n0,4\n1,11.5\n2,7\n").unwrap();
    let o = loadcast(&["dct", "--load", "l.csv", "--capacity", "0", "--pmax", "5", "--dt", "0.25", "--s0", "0"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "11.5");
    assert!(stderr(&o).contains("capacity = 0"));
}

#[test]
fn dct_trace_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("l.csv"), "load_kw\n5\n7\n3\n9\n2\n").unwrap();
    std::fs::write(dir.path().join("run.conf"), "# battery\ncapacity = 4\npmax = 3\ntrace-out = t.csv\n").unwrap();
    let o = loadcast(&["dct", "--config", "run.conf", "--load", "l.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dct: f64 = stdout(&o).trim().parse().unwrap();
    assert!((dct - 6.0).abs() < 1e-5, "{dct}");
    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(trace.lines().count(), 6);

    // A flag beats the file.
    let o = loadcast(&["dct", "--config", "run.conf", "--load", "l.csv", "--capacity", "0"], dir.path());
    assert_eq!(stdout(&o).trim(), "9");

    std::fs::write(dir.path().join("bad.conf"), "capacity = 4\nwarp = 9\n").unwrap();
    let o = loadcast(&["dct", "--config", "bad.conf", "--load", "l.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("warp"));
}

#[test]
fn dct_data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = loadcast(&["dct", "--load", "missing.csv", "--capacity", "1", "--pmax", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.csv"));
    std::fs::write(dir.path().join("l.csv"), "load_kw\n1\nabc\n").unwrap();
    let o = loadcast(&["dct", "--load", "l.csv", "--capacity", "1", "--pmax", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("l.csv"));
    std::fs::write(dir.path().join("neg.csv"), "load_kw\n1\n-2\n").unwrap();
    let o = loadcast(&["dct", "--load", "neg.csv", "--capacity", "1", "--pmax", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("neg.csv:3:"), "{}", stderr(&o));
}

#[test]
fn evaluate_fixture_reports_tna() {
    let dir = tempfile::tempdir().unwrap();
    let o = loadcast(&["evaluate", "--fixture", &fixture(), "--json-out", "r.json", "--out", "r.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let tfl = text.lines().find(|l| l.starts_with("TFL,")).unwrap();
    let v: f64 = tfl.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 0.70).abs() <= 0.01, "{tfl}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert!(json.is_object() || json.is_array());
    assert!(dir.path().join("r.csv").is_file());
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = loadcast(&["gradcheck", "--seed", "7"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("max_rel_error"));
    assert!(stderr(&o).contains("seed = 7"));
    let o = loadcast(&["gradcheck", "--seed", "7", "--threshold", "1e-300"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn synth_pretrain_finetune_predict() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = loadcast(&["synth", "--out", "c", "--seed", "3", "--public-customers", "3", "--public-weeks", "6", "--targets", "2"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let mut args = vec!["pretrain", "--manifest", "c/public_manifest.csv", "--out", "pre.lcw", "--epochs", "3", "--seed", "1"];
    args.extend(COMPACT);
    let o = loadcast(&args, p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(p.join("pre.lcw.meta").is_file());

    let o = loadcast(&["finetune", "--checkpoint", "pre.lcw", "--all", "c/targets_manifest.csv", "--out", "ft", "--epochs", "3"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(p.join("ft/target_01.lcw").is_file() && p.join("ft/target_02.lcw.meta").is_file());

    let o = loadcast(&["finetune", "--checkpoint", "pre.lcw", "--target", "c/targets/target_01.csv", "--out", "one.lcw", "--epochs", "3"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // Same seed and customer index as the batch run.
    assert_eq!(std::fs::read(p.join("one.lcw")).unwrap(), std::fs::read(p.join("ft/target_01.lcw")).unwrap());

    let o = loadcast(&["finetune", "--checkpoint", "pre.lcw", "--target", "c/targets/target_01.csv", "--out", "x.lcw", "--samples-per-day", "48"], p);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let o = loadcast(&["predict", "--model", "ft/target_01.lcw", "--history", "c/targets/target_01.csv", "--out", "day.csv"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = std::fs::read_to_string(p.join("day.csv")).unwrap();
    assert_eq!(first.lines().next(), Some("timestamp,load_kw"));
    assert_eq!(first.lines().count(), 25);
    let o = loadcast(&["predict", "--model", "ft/target_01.lcw", "--history", "c/targets/target_01.csv", "--out", "again.csv"], p);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first, std::fs::read_to_string(p.join("again.csv")).unwrap());

    let o = loadcast(&["predict", "--model", "c/public_manifest.csv", "--history", "c/targets/target_01.csv"], p);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn baseline_methods() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = loadcast(&["synth", "--out", "c", "--public-customers", "2", "--public-weeks", "5", "--targets", "1"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let series = "c/targets/target_01.csv";
    let o = loadcast(&["baseline", "--series", series, "--method", "naive"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(p.join(series)).unwrap();
    let last_week: Vec<&str> = text.lines().skip(1).collect();
    let expected: Vec<&str> = last_week[last_week.len() - 7 * 24..][..24].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    let got: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    for (g, e) in got.iter().zip(&expected) {
        assert_eq!(g.parse::<f64>().unwrap(), e.parse::<f64>().unwrap());
    }
    let o = loadcast(&["baseline", "--series", series, "--method", "sarima", "--out", "s.csv"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(p.join("s.csv")).unwrap().lines().count(), 25);
    let o = loadcast(&["baseline", "--series", series, "--method", "prophet"], p);
    assert_eq!(o.status.code(), Some(1));
}
