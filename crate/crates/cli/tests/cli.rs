//! End-to-end tests of the `zerolab` binary: exit codes, CSV schemas,
//! determinism and manifest reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn zerolab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zerolab"))
}

fn write_measure(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn tone_json(dir: &Path) -> PathBuf {
    write_measure(dir, "tone.json", r#"{"atoms":[{"lambda":1.0,"mass":0.5}]}"#)
}

fn uniform12_json(dir: &Path) -> PathBuf {
    write_measure(
        dir,
        "uniform12.json",
        r#"{"pieces":[{"lo":1.0,"hi":2.0,"density":0.5}]}"#,
    )
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn zeros_on_pure_tone_pins_counts() {
    let dir = TempDir::new().unwrap();
    let measure = tone_json(dir.path());
    let out = dir.path().join("zeros.csv");
    let output = run(zerolab()
        .args(["zeros", "--measure"])
        .arg(&measure)
        .args(["-T", "100", "--samples", "10", "--seed", "42", "--out"])
        .arg(&out));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let body = fs::read_to_string(&out).unwrap();
    let mut rows = 0;
    for record in csv::Reader::from_reader(body.as_bytes()).records() {
        let record = record.expect("RFC-4180 row");
        let n: u32 = record[2].parse().unwrap();
        assert!(n == 31 || n == 32, "N = {n}");
        rows += 1;
    }
    assert_eq!(rows, 10);

    // summary file exists and parses
    let summary = fs::read_to_string(dir.path().join("zeros.summary.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(summary.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        vec!["T", "n_samples", "mean_density", "std_err", "min_density", "max_density", "kac_rice_density"]
    );
    assert_eq!(reader.records().count(), 1);
}

#[test]
fn identical_seeds_give_byte_identical_outputs() {
    let dir = TempDir::new().unwrap();
    let measure = tone_json(dir.path());
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let output = run(zerolab()
            .args(["zeros", "--measure"])
            .arg(&measure)
            .args(["-T", "50", "--samples", "20", "--seed", "7", "--out"])
            .arg(out));
        assert!(output.status.success());
    }
    assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
}

#[test]
fn invalid_measure_exits_2_and_names_the_invariant() {
    let dir = TempDir::new().unwrap();
    let measure = write_measure(
        dir.path(),
        "bad.json",
        r#"{"atoms":[{"lambda":1.0,"mass":0.35}],"normalize":false}"#,
    );
    let out = dir.path().join("zeros.csv");
    let output = run(zerolab()
        .args(["zeros", "--measure"])
        .arg(&measure)
        .args(["-T", "10", "--samples", "2", "--seed", "1", "--out"])
        .arg(&out));
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("mass"), "stderr: {stderr}");
}

#[test]
fn scan_emits_markers_and_step_shape() {
    let dir = TempDir::new().unwrap();
    let measure = uniform12_json(dir.path());
    let out = dir.path().join("scan.csv");
    let output = run(zerolab()
        .args(["scan", "--measure"])
        .arg(&measure)
        .args([
            "-T",
            "60",
            "--eta-grid",
            "0.25,0.45,0.62",
            "--samples",
            "200",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&out));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let body = fs::read_to_string(&out).unwrap();
    let header = body.lines().next().unwrap();
    assert!(header.starts_with("# markers:"));
    assert!(header.contains("B_over_pi=0.3183"), "{header}");
    assert!(header.contains("gamma_over_pi=0.4862"), "{header}");
    assert!(header.contains("A_over_pi=0.6366"), "{header}");
    // data rows parse as CSV once the comment line is stripped
    let data: String = body.lines().skip(1).collect::<Vec<_>>().join("\n");
    let mut reader = csv::Reader::from_reader(data.as_bytes());
    assert_eq!(reader.records().count(), 3);
}

#[test]
fn scan_rejects_empty_and_out_of_range_grids() {
    let dir = TempDir::new().unwrap();
    let measure = uniform12_json(dir.path());
    let out = dir.path().join("scan.csv");
    let output = run(zerolab()
        .args(["scan", "--measure"])
        .arg(&measure)
        .args(["-T", "60", "--eta-grid", "", "--samples", "100", "--seed", "3", "--out"])
        .arg(&out));
    assert_eq!(output.status.code(), Some(2));

    let output = run(zerolab()
        .args(["scan", "--measure"])
        .arg(&measure)
        .args(["-T", "60", "--eta-grid", "5.0", "--samples", "100", "--seed", "3", "--out"])
        .arg(&out));
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("2A/pi"));
}

#[test]
fn pure_tone_scan_has_step_shape() {
    let dir = TempDir::new().unwrap();
    let measure = tone_json(dir.path());
    let out = dir.path().join("scan.csv");
    let output = run(zerolab()
        .args(["scan", "--measure"])
        .arg(&measure)
        .args([
            "-T",
            "100",
            "--eta-grid",
            "0.10,0.20,0.30,0.33,0.40",
            "--samples",
            "150",
            "--seed",
            "11",
            "--out",
        ])
        .arg(&out));
    assert!(output.status.success());
    let body = fs::read_to_string(&out).unwrap();
    let p_hats: Vec<f64> = body
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    // N is always 31 or 32: P(N >= eta T) is 1 up to eta = 0.31, 0 past 0.32
    assert_eq!(p_hats[0], 1.0);
    assert_eq!(p_hats[1], 1.0);
    assert_eq!(p_hats[2], 1.0);
    assert_eq!(p_hats[3], 0.0);
    assert_eq!(p_hats[4], 0.0);
}

#[test]
fn manifest_rerun_reproduces_outputs() {
    let dir = TempDir::new().unwrap();
    let measure = tone_json(dir.path());
    let out = dir.path().join("zeros.csv");
    let output = run(zerolab()
        .args(["zeros", "--measure"])
        .arg(&measure)
        .args(["-T", "40", "--samples", "8", "--seed", "9", "--out"])
        .arg(&out));
    assert!(output.status.success());
    let first = fs::read(&out).unwrap();
    let manifest = dir.path().join("zeros.csv.manifest.json");
    assert!(manifest.exists());

    fs::remove_file(&out).unwrap();
    let output = run(zerolab().arg("rerun").arg(&manifest));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert_eq!(fs::read(&out).unwrap(), first);
}

#[test]
fn tails_csv_schema_is_stable() {
    let dir = TempDir::new().unwrap();
    let measure = tone_json(dir.path());
    let out = dir.path().join("tails.csv");
    let output = run(zerolab()
        .args(["tails", "--measure"])
        .arg(&measure)
        .args([
            "-T",
            "20,40",
            "--eta",
            "0.5",
            "--side",
            "over",
            "--estimator",
            "naive",
            "--samples",
            "120",
            "--seed",
            "5",
            "--out",
        ])
        .arg(&out));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let body = fs::read_to_string(&out).unwrap();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        vec!["T", "eta", "estimator", "n", "hits_or_ess", "p_hat", "ci_lo", "ci_hi", "log_p", "theta", "L", "kappa"]
    );
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][2], "naive");
    // pure tone never reaches 0.5 zeros per unit time
    assert_eq!(&rows[0][5], "0");
    assert_eq!(&rows[0][8], "-inf");
}

#[test]
fn spec_summary_reports_markers() {
    let dir = TempDir::new().unwrap();
    let measure = uniform12_json(dir.path());
    let output = run(zerolab().args(["spec", "--measure"]).arg(&measure));
    assert!(output.status.success());
    let json: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(json["support"]["b"], 1.0);
    assert_eq!(json["support"]["a"], 2.0);
    let kr = json["kac_rice_density"].as_f64().unwrap();
    assert!((kr - (7.0f64 / 3.0).sqrt() / std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn sample_grid_is_deterministic_and_replayable() {
    let dir = TempDir::new().unwrap();
    let measure = tone_json(dir.path());
    let out = dir.path().join("sample.csv");
    let coeffs = dir.path().join("coeffs.json");
    let output = run(zerolab()
        .args(["sample", "--measure"])
        .arg(&measure)
        .args(["-T", "5", "--samples", "3", "--seed", "2", "--out"])
        .arg(&out)
        .arg("--coeffs-out")
        .arg(&coeffs));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let replays: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&coeffs).unwrap()).unwrap();
    assert_eq!(replays.as_array().unwrap().len(), 3);
    assert!(replays[0]["frame"].as_u64().is_some());
}
