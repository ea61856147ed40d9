use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spamsim_core::ErrorModel;
use tempfile::TempDir;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn spamsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spamsim"))
        .args(args)
        .env_remove("SPAMSIM_SEED")
        .output()
        .expect("spawn spamsim")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(name: &str, doc: &Value) {
    let schema = read_json(&root().join("schemas").join(format!("{name}.schema.json")));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

fn run_spam(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run-spam", "--paper-defaults", "--shots", "3000", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    spamsim(&args)
}

#[test]
fn shipped_defaults_match_builtin_model() {
    let text = fs::read_to_string(root().join("configs/paper_defaults.json")).unwrap();
    assert_eq!(ErrorModel::from_json_str(&text).unwrap(), ErrorModel::paper_defaults());
    assert_schema("error_model", &serde_json::from_str(&text).unwrap());

    let out = spamsim(&["show-defaults"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn run_spam_outputs_validate() {
    let tmp = TempDir::new().unwrap();
    let out = run_spam(tmp.path(), &["--seed", "11", "--records", "--encoding", "g", "--mode", "rus"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let summary = read_json(&tmp.path().join("summary.json"));
    assert_schema("summary", &summary);
    assert_eq!(summary["mode"]["kind"], "repeat-until-success");
    let manifest = read_json(&tmp.path().join("manifest.json"));
    assert_schema("manifest", &manifest);
    assert_eq!(manifest["seed"], 11);

    for output in manifest["outputs"].as_array().unwrap() {
        assert!(Path::new(output.as_str().unwrap()).exists(), "{output}");
    }
    let shots = fs::read_to_string(tmp.path().join("shots.csv")).unwrap();
    assert_eq!(shots.lines().count(), 1 + 6000);
    assert!(tmp.path().join("histogram_one_R5.csv").exists());
}

#[test]
fn same_seed_gives_identical_summary_across_thread_counts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    assert!(run_spam(a.path(), &["--seed", "5", "--threads", "1"]).status.success());
    assert!(run_spam(b.path(), &["--seed", "5", "--threads", "8"]).status.success());
    assert!(run_spam(c.path(), &["--seed", "6", "--threads", "8"]).status.success());
    let sa = fs::read(a.path().join("summary.json")).unwrap();
    let sb = fs::read(b.path().join("summary.json")).unwrap();
    let sc = fs::read(c.path().join("summary.json")).unwrap();
    assert_eq!(sa, sb);
    assert_ne!(sa, sc);
    assert_eq!(fs::read(a.path().join("histogram_zero_R3.csv")).unwrap(), fs::read(b.path().join("histogram_zero_R3.csv")).unwrap());
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_spamsim"))
        .args(["run-spam", "--paper-defaults", "--shots", "100", "--out", tmp.path().to_str().unwrap()])
        .env("SPAMSIM_SEED", "424242")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read_json(&tmp.path().join("manifest.json"))["seed"], 424242);
    assert_eq!(read_json(&tmp.path().join("summary.json"))["seed"], 424242);
}

#[test]
fn invalid_input_exits_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_spam(tmp.path(), &["--shots", "0"]).status.code(), Some(2));
    assert_eq!(spamsim(&["run-spam", "--paper-defaults", "--encoding", "x"]).status.code(), Some(2));
    assert_eq!(spamsim(&["run-spam"]).status.code(), Some(2));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"pump": 1}"#).unwrap();
    assert_eq!(spamsim(&["predict-rejection", bad.to_str().unwrap()]).status.code(), Some(2));

    let mut model: Value = serde_json::from_str(&fs::read_to_string(root().join("configs/paper_defaults.json")).unwrap()).unwrap();
    model["pulses"][0]["error_rate"] = Value::from(1.5);
    fs::write(&bad, model.to_string()).unwrap();
    assert_eq!(spamsim(&["predict-rejection", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_file_exits_3_and_names_it() {
    let out = spamsim(&["predict-rejection", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/model.json"));
    assert_eq!(spamsim(&["lifetime-fit", "/nonexistent/d.csv"]).status.code(), Some(3));
}

fn gaussian_histogram(path: &Path, mean: f64, sigma: f64, total: f64) {
    let mut s = String::from("bin_low,frequency\n");
    for bin in -60..=60 {
        let x = (bin as f64 - mean) / sigma;
        let n = (total * (-0.5 * x * x).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())).round();
        s.push_str(&format!("{bin},{n}\n"));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn calibrate_symmetric_histograms() {
    let tmp = TempDir::new().unwrap();
    let (bright, dark) = (tmp.path().join("b.csv"), tmp.path().join("d.csv"));
    gaussian_histogram(&bright, 5.0, 1.5, 1e5);
    gaussian_histogram(&dark, -5.0, 1.5, 1e5);
    let dir = tmp.path().join("cal");
    let out = spamsim(&["calibrate-threshold", bright.to_str().unwrap(), dark.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cal = read_json(&dir.join("calibration.json"));
    assert_schema("calibration", &cal);
    assert_schema("manifest", &read_json(&dir.join("manifest.json")));
    assert_eq!(cal["threshold"], 0);
    assert!(cal["crossing"].as_f64().unwrap().abs() < 1e-6);
}

#[test]
fn identical_histograms_exit_4() {
    let tmp = TempDir::new().unwrap();
    let h = tmp.path().join("h.csv");
    gaussian_histogram(&h, 0.0, 3.0, 1e4);
    let out = spamsim(&["calibrate-threshold", h.to_str().unwrap(), h.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn predict_rejection_report() {
    let tmp = TempDir::new().unwrap();
    let out = spamsim(&["predict-rejection", "--paper-defaults", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    let report = read_json(&tmp.path().join("rejection.json"));
    assert_schema("rejection", &report);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let m0 = rows.iter().find(|r| r["encoding"] == "Metastable" && r["state"] == "Zero").unwrap();
    assert!((m0["first_order"].as_f64().unwrap() - 0.0356).abs() < 1e-12);
}

#[test]
fn bias_vanishes_at_full_pulse() {
    let out = spamsim(&["bias-scan", "--paper-defaults", "--t-grid", "1.0,0.7", "--shots", "20000", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let t: f64 = row[1].parse().unwrap();
        let closed: f64 = row[3].parse().unwrap();
        let measured: f64 = row[2].parse().unwrap();
        let se: f64 = row[4].parse().unwrap();
        if t == 1.0 {
            assert!(closed.abs() < 1e-9, "{row:?}");
        } else {
            assert!(closed.abs() > 0.01, "{row:?}");
        }
        assert!((measured - closed).abs() < 5.0 * se.max(1e-3), "{row:?}");
    }
}

#[test]
fn lifetime_fit_recovers_tau() {
    let tmp = TempDir::new().unwrap();
    let tau: f64 = 27.2;
    let delays = [1.0, 5.0, 10.0, 20.0, 40.0];

    let fractions = tmp.path().join("fractions.csv");
    let mut s = String::from("delay,fraction\n");
    for t in delays {
        s.push_str(&format!("{t},{}\n", 1.0 - (-t / tau).exp()));
    }
    fs::write(&fractions, s).unwrap();
    let out = spamsim(&["lifetime-fit", fractions.to_str().unwrap()]);
    assert!(out.status.success());
    let fit: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_schema("lifetime", &fit);
    assert!((fit["tau"].as_f64().unwrap() - tau).abs() < 1e-6);

    // 1000 samples per delay with the expected number decayed.
    let samples = tmp.path().join("samples.csv");
    let mut s = String::from("delay,decayed\n");
    for t in delays {
        let k = (1000.0 * (1.0 - (-t / tau).exp())).round() as usize;
        for i in 0..1000 {
            s.push_str(&format!("{t},{}\n", u8::from(i < k)));
        }
    }
    fs::write(&samples, s).unwrap();
    let dir = tmp.path().join("fit");
    let out = spamsim(&["lifetime-fit", samples.to_str().unwrap(), "--z", "2", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let fit = read_json(&dir.join("lifetime.json"));
    assert_schema("lifetime", &fit);
    assert_eq!(fit["method"], "maximum-likelihood");
    let (lo, hi) = (fit["interval"][0].as_f64().unwrap(), fit["interval"][1].as_f64().unwrap());
    assert!(lo < tau && tau < hi, "{fit}");
}
