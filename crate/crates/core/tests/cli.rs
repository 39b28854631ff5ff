use hillres::oracle::{periodic_edges, square_well};
use hillres::potentials::PeriodicPotential;
use hillres::Complex64;
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const MATHIEU_WELL: &str = r#"{"p": {"kind": "series", "mean": 0.0, "cos": [2.0], "sin": [0.7]},
  "q": {"t": 1.0, "pieces": [{"from": 0.0, "to": 1.0, "coeffs": [-3.0]}]},
  "n_max": 6, "z_max": 12}"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hillres"))
        .args(&args[..1])
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(&args[1..])
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

#[test]
fn free_background_has_no_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"p": {"kind": "series", "mean": 0.0, "cos": [], "sin": []},
                  "q": {"t": 1.0, "pieces": []}, "n_max": 5}"#;
    let out = run(dir.path(), cfg, &["bands"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lens = column(&dir.path().join("out/bands.csv"), "gap_len");
    assert_eq!(lens.len(), 5);
    assert!(lens.iter().all(|l| l.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn missing_perturbation_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"p": {"kind": "series", "mean": 0.0, "cos": [1.0], "sin": []}}"#, &["bands"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`q`"));
}

#[test]
fn bad_nested_field_reports_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MATHIEU_WELL.replace("\"coeffs\": [-3.0]", "\"coeffs\": \"deep\"");
    let out = run(dir.path(), &cfg, &["bands"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q.pieces[0].coeffs"));
}

#[test]
fn unknown_tolerance_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), MATHIEU_WELL, &["bands", "--tol", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn band_table_matches_the_box_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"p": {"kind": "series", "mean": 0.0, "cos": [2.0], "sin": []},
                  "q": {"t": 1.0, "pieces": []}, "n_max": 4}"#;
    let out = run(dir.path(), cfg, &["bands"]);
    assert!(out.status.success());
    let p = PeriodicPotential::series(0.0, vec![2.0], vec![]).unwrap();
    let (_, edges) = periodic_edges(&p, 4, 200).unwrap();
    let table = rows(&dir.path().join("out/bands.csv"));
    for (row, (lo, hi)) in table.iter().zip(&edges) {
        let e_minus: f64 = row[1].parse().unwrap();
        let e_plus: f64 = row[2].parse().unwrap();
        assert!((e_minus - lo).abs() < 1e-5 && (e_plus - hi).abs() < 1e-5, "{row:?} vs {lo} {hi}");
    }
}

#[test]
fn unperturbed_states_one_per_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"p": {"kind": "series", "mean": 0.0, "cos": [2.0, 0.5], "sin": [0.7]},
                  "q": {"t": 1.0, "pieces": []}, "n_max": 4, "z_max": 14}"#;
    let out = run(dir.path(), cfg, &["states"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/states.json")).unwrap()).unwrap();
    for gap in report["gaps"].as_array().unwrap() {
        assert_eq!(gap["count"], 1);
        assert_eq!(gap["states"][0]["z"][0], gap["mu"]);
    }
    assert!(report["resonances"].as_array().unwrap().is_empty());
    assert_eq!(report["verdicts"]["parity"], true);
}

#[test]
fn unperturbed_generic_residuals_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"p": {"kind": "series", "mean": 0.0, "cos": [1.0, 0.5, 0.3], "sin": [0.7, 0.4, 0.2]},
                  "q": {"t": 1.0, "pieces": []}, "n_max": 3, "verify": {"n_from": 1, "n_to": 3}}"#;
    let out = run(dir.path(), cfg, &["verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let path = dir.path().join("out/verify.csv");
    let table = rows(&path);
    let generic: Vec<_> = table.iter().filter(|r| &r[0] == "generic").collect();
    assert_eq!(generic.len(), 3);
    assert!(generic.iter().all(|r| r[4].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn square_well_resonances_match_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"p": {"kind": "series", "mean": 0.0, "cos": [], "sin": []},
                  "q": {"t": 1.0, "pieces": [{"from": 0.0, "to": 1.0, "coeffs": [-4.0]}]},
                  "n_max": 2, "z_max": 15}"#;
    let out = run(dir.path(), cfg, &["states"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("out/states.csv");
    let table = rows(&path);
    let found: Vec<Complex64> = table
        .iter()
        .filter(|r| &r[0] == "resonance")
        .map(|r| Complex64::new(r[3].parse().unwrap(), r[4].parse().unwrap()))
        .collect();
    let exact: Vec<Complex64> =
        square_well::resonances(4.0, 1.0, 15.0, 30.0).into_iter().filter(|z| z.norm() <= 15.0 && z.re.abs() > 1e-6).collect();
    assert_eq!(found.len(), exact.len(), "{found:?} vs {exact:?}");
    for z in &exact {
        assert!(found.iter().any(|w| (w - z).norm() < 1e-6), "{z} missing");
    }
}

#[test]
fn corrupted_edge_tolerance_breaks_parity() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), MATHIEU_WELL, &["states", "--tol", "tol_edge=0.5"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/states.json")).unwrap()).unwrap();
    assert_eq!(report["verdicts"]["parity"], false);
}

#[test]
fn rerun_from_emitted_config_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(dir.path(), MATHIEU_WELL, &["states", "--z-max", "8", "--tol", "tol_cls=2e-3", "--threads", "2"]);
    assert!(first.status.success());
    let emitted = std::fs::read_to_string(dir.path().join("out/run_config.json")).unwrap();

    let again = tempfile::tempdir().unwrap();
    let second = run(again.path(), &emitted, &["states"]);
    assert!(second.status.success());
    for file in ["states.csv", "states.json", "run_config.json"] {
        let a = std::fs::read(dir.path().join("out").join(file)).unwrap();
        let b = std::fs::read(again.path().join("out").join(file)).unwrap();
        if file == "run_config.json" {
            // Only the output directory differs.
            let mut va: Value = serde_json::from_slice(&a).unwrap();
            let mut vb: Value = serde_json::from_slice(&b).unwrap();
            va["out"] = Value::Null;
            vb["out"] = Value::Null;
            assert_eq!(va, vb);
        } else {
            assert!(a == b, "{file} differs");
        }
    }
}

#[test]
fn count_reports_slope_and_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), MATHIEU_WELL, &["count", "--z-max", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/count.json")).unwrap()).unwrap();
    assert!((report["target"].as_f64().unwrap() - 2.0 / std::f64::consts::PI).abs() < 1e-15);
    let counts = column(&dir.path().join("out/count.csv"), "count");
    assert_eq!(counts.len(), 40);
    let last: usize = counts.last().unwrap().parse().unwrap();
    assert_eq!(last, report["resonances"].as_u64().unwrap() as usize);
}
