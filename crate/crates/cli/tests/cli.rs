use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phasebench"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn phasebench")
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn sparams_path() -> PathBuf {
    workspace().join("crates/core/data/connection_block_sparams.txt")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, freqs: &[f64], sparams: Option<&Path>, shift: f64) -> PathBuf {
    let list: Vec<String> = freqs.iter().map(|f| format!("{f:?}")).collect();
    let mut text = format!("frequencies_ghz = [{}]\nseed = 11\n", list.join(", "));
    if sparams.is_none() {
        // ideal bench: lossless block and no generator drift
        text += "[bench.drift]\nrate_at_ref = 0.0\n";
    }
    if let Some(p) = sparams {
        text += &format!("[netcal]\nsparams = {:?}\n", p.display().to_string());
    }
    for f in [3.0, 4.0, 5.0, 6.0, 7.0, 8.0] {
        text += &format!("[[dut.points]]\nfreq_ghz = {f:?}\nhybrid_shift_deg = {shift:?}\n");
    }
    let path = dir.join("campaign.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn load_report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn table1_prints_neg_infinity() {
    let o = run(&["table1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().nth(1).unwrap().contains("-inf"));
}

#[test]
fn corrections_flag_the_inconsistent_row() {
    let o = run(&["corrections", "--json"]);
    assert!(o.status.success());
    let rows: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let four = rows.as_array().unwrap().iter().find(|r| r["corrections"]["frequency_ghz"] == 4.0).unwrap();
    assert_eq!(four["flagged"], true);
    assert!((four["corrections"]["dtheta_sc"].as_f64().unwrap() + 0.95).abs() < 0.02);
}

#[test]
fn corrections_rejects_bad_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.txt");
    std::fs::write(&p, "3 1 2 3\n").unwrap();
    let o = run(&["corrections", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn simulate_ideal_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &[3.0, 5.0, 8.0], None, 90.0);
    let out = dir.path().join("out");
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = load_report(&out);
    let points = report["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    for p in points {
        assert_eq!(p["status"], "ok");
        let shift = p["referencing"]["shift_deg"].as_f64().unwrap();
        assert!((shift - 90.0).abs() < 0.5, "{shift}");
        assert_eq!(p["referencing"]["verdict"], "YES");
    }
    for f in ["curves_3ghz.csv", "refs_5ghz.txt", "curves_8ghz.svg", "table.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(report["provenance"]["seed"], 11);
}

#[test]
fn missing_sparam_row_is_isolated_and_fails_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let full = std::fs::read_to_string(sparams_path()).unwrap();
    let trimmed: String = full.lines().filter(|l| !l.starts_with("8 ")).map(|l| format!("{l}\n")).collect();
    let sp = dir.path().join("no8.txt");
    std::fs::write(&sp, trimmed).unwrap();
    let cfg = write_config(dir.path(), &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0], Some(&sp), 90.0);
    let out = dir.path().join("out");
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let report = load_report(&out);
    let points = report["points"].as_array().unwrap();
    assert_eq!(points.len(), 6);
    assert_eq!(points.iter().filter(|p| p["status"] == "ok").count(), 5);
    assert_eq!(points[5]["status"], "failed");
    assert_eq!(points[5]["kind"], "netcal");
    assert_eq!(points[5]["frequency_ghz"], 8.0);

    // without corrections the missing row no longer matters
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--skip-netcal"]);
    assert!(o.status.success());
}

#[test]
fn table4_verdicts_for_the_prototype_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/paper_dut.toml");
    let out = dir.path().join("out");
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success());
    let report = load_report(&out);
    let verdicts: Vec<&str> =
        report["points"].as_array().unwrap().iter().map(|p| p["referencing"]["verdict"].as_str().unwrap()).collect();
    assert_eq!(verdicts, ["YES", "YES", "YES", "YES", "YES", "NO"]);
}

#[test]
fn exported_curves_reference_to_the_same_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/paper_dut.toml");
    let out = dir.path().join("out");
    assert!(run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let report = load_report(&out);
    for (i, f) in ["3", "4", "5", "6", "7", "8"].iter().enumerate() {
        let o = run(&[
            "reference",
            out.join(format!("curves_{f}ghz.csv")).to_str().unwrap(),
            out.join(format!("refs_{f}ghz.txt")).to_str().unwrap(),
            "--expected-len",
            "280",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(r["referencing"], report["points"][i]["referencing"], "{f} GHz");
        assert_eq!(r["refs"], report["points"][i]["refs"]);
    }
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/paper_dut.toml");
    let mut texts = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "0")] {
        let out = dir.path().join(name);
        assert!(run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads])
            .status
            .success());
        let mut v = load_report(&out);
        v["provenance"]["generated_at_unix"] = Value::Null;
        texts.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

fn synthetic_csv(n: usize, shift: f64) -> String {
    let mut s = String::from("# freq_ghz=5\n# sample_rate_hz=2800\n# beat_hz=11\n");
    for (mode, lag) in [("IxI", 0.0), ("QxI", shift)] {
        s += &format!("# mode={mode}\nsample_index,code,volts\n");
        for i in 0..n {
            let th = 37.0 + 360.0 * 11.0 * i as f64 / 2800.0;
            let v = 2.5 + 2.0 * (th - lag).to_radians().cos();
            s += &format!("{i},{},{v}\n", (v / 5.0 * 1023.0).round());
        }
    }
    s
}

fn synthetic_refs(shift: f64) -> String {
    let at = |th: f64, lag: f64| 2.5 + 2.0 * (th - lag).to_radians().cos();
    format!(
        "vi_180 = {}\nvi_90 = {}\nvq_90 = {}\nvq_180 = {}\n",
        at(180.0, 0.0),
        at(90.0, 0.0),
        at(90.0, shift),
        at(180.0, shift)
    )
}

#[test]
fn synthetic_pair_with_known_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = (dir.path().join("c.csv"), dir.path().join("r.txt"));
    std::fs::write(&c, synthetic_csv(280, 130.0)).unwrap();
    std::fs::write(&r, synthetic_refs(130.0)).unwrap();
    let o = run(&["reference", c.to_str().unwrap(), r.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let shift = v["referencing"]["shift_deg"].as_f64().unwrap();
    assert!((shift - 130.0).abs() <= 0.5, "{shift}");
}

#[test]
fn truncated_curve_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = (dir.path().join("c.csv"), dir.path().join("r.txt"));
    std::fs::write(&c, synthetic_csv(100, 90.0)).unwrap();
    std::fs::write(&r, synthetic_refs(90.0)).unwrap();
    let o = run(&["reference", c.to_str().unwrap(), r.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    std::fs::write(&p, "frequencies_ghz = [3.0]\nbogus = 1\n").unwrap();
    let o = run(&["simulate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}
