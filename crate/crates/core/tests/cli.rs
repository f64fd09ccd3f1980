use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tgi_monitor::signal::make_grid;
use tgi_monitor::tgi::{read_image_csv, write_image_csv, Image, ImageKind};

fn tgi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tgi-monitor"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn simulate(preset: &str, out: &Path) -> Output {
    tgi(&["simulate", "--preset", preset, "--out", out.to_str().unwrap()])
}

fn detect(image: &Path, baseline: &Path, mode: &str) -> (i32, Value) {
    let o = tgi(&["detect", image.to_str().unwrap(), baseline.to_str().unwrap(), "--mode", mode]);
    let json = serde_json::from_slice(&o.stdout).unwrap_or(Value::Null);
    (code(&o), json)
}

fn verdicts(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("verdicts.json")).unwrap()).unwrap()
}

#[test]
fn presets_are_listed() {
    let o = tgi(&["presets"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["fig2g", "fig3f", "fig4d", "fig5c2", "fig5c4-surrogate"] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn validate_reports_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 4\n[channel]\nloss_db = -1\n").unwrap();
    let o = tgi(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("channel.loss_db") && err.contains("line 3"), "{err}");

    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "").unwrap();
    let o = tgi(&["validate", "--config", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("loss_db = 3.0"));
}

#[test]
fn bad_usage_is_an_error() {
    assert_eq!(code(&tgi(&["simulate"])), 1);
    assert_eq!(code(&tgi(&["frobnicate"])), 1);
    assert_eq!(code(&tgi(&["--help"])), 0);
    assert_eq!(code(&tgi(&["validate", "--preset", "fig9z"])), 1);
}

#[test]
fn missing_output_directory_needs_create() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let args = ["simulate", "--preset", "fig2g", "--rounds", "20000", "--out", out.to_str().unwrap()];
    assert_eq!(code(&tgi(&args)), 1);
    assert!(!out.exists());
    let mut with_create = args.to_vec();
    with_create.push("--create");
    assert_eq!(code(&tgi(&with_create)), 0);
    assert!(out.join("images/joint.csv").is_file());
}

#[test]
fn clean_preset_exits_zero_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate("fig2g", dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let joint = dir.path().join("images/joint.csv");
    assert!(joint.is_file());

    let (c, v) = detect(&joint, &joint, "time_shift");
    assert_eq!(c, 0);
    assert_eq!(v["attacked"], false);
    assert_eq!(v["estimate"], 0.0);

    let (c, v) = detect(&joint, &dir.path().join("images/joint_baseline.csv"), "time_shift");
    assert_eq!(c, 0);
    assert_eq!(v, verdicts(dir.path())["time_shift"]);
}

#[test]
fn time_shift_round_trip() {
    let clean = tempfile::tempdir().unwrap();
    let shifted = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate("fig2g", clean.path())), 0);
    assert_eq!(code(&simulate("fig3a", shifted.path())), 2);

    let image = shifted.path().join("images/joint.csv");
    let (c, v) = detect(&image, &shifted.path().join("images/joint_baseline.csv"), "time_shift");
    assert_eq!(c, 2);
    assert_eq!(v, verdicts(shifted.path())["time_shift"]);

    let (c, v) = detect(&image, &clean.path().join("images/joint.csv"), "time_shift");
    assert_eq!(c, 2);
    let est = v["estimate"].as_f64().unwrap();
    assert!((est - 1.0).abs() <= 0.08, "{est}");
}

#[test]
fn full_blinding_exits_two_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate("fig4d", dir.path())), 2);
    let images = dir.path().join("images");
    let (c, v) = detect(&images.join("local_differential.csv"), &images.join("local_base.csv"), "blinding");
    assert_eq!(c, 2);
    assert_eq!(v, verdicts(dir.path())["blinding"]);
}

#[test]
fn zero_image_against_baseline_is_blinding() {
    let dir = tempfile::tempdir().unwrap();
    let g = make_grid(4.0, 0.08).unwrap();
    let s = 0.27 / 2.354_820_045;
    let bump: Vec<f64> = g.times().map(|t| 1e-4 * (-(t - 2.0f64).powi(2) / (2.0 * s * s)).exp()).collect();
    let base = Image::new(g, bump, vec![2e-6; 50], 1_000_000).unwrap();
    let zero = Image::new(g, vec![0.0; 50], vec![0.0; 50], 1_000_000).unwrap();
    let (bp, zp) = (dir.path().join("base.csv"), dir.path().join("zero.csv"));
    write_image_csv(&bp, &base, ImageKind::Base, "d").unwrap();
    write_image_csv(&zp, &zero, ImageKind::Measured, "d").unwrap();
    assert!(read_image_csv(&zp).is_ok());
    let (c, v) = detect(&zp, &bp, "blinding");
    assert_eq!(c, 2);
    assert_eq!(v["attacked"], true);
    assert!((v["estimate"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn malformed_or_mismatched_images_fail() {
    let dir = tempfile::tempdir().unwrap();
    let a = Image::new(make_grid(4.0, 0.08).unwrap(), vec![1.0; 50], vec![0.1; 50], 10).unwrap();
    let b = Image::new(make_grid(4.0, 0.01).unwrap(), vec![1.0; 400], vec![0.1; 400], 10).unwrap();
    let (ap, bp, junk) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("junk.csv"));
    write_image_csv(&ap, &a, ImageKind::Measured, "x").unwrap();
    write_image_csv(&bp, &b, ImageKind::Measured, "x").unwrap();
    std::fs::write(&junk, "# n=1\nfoo,bar\n1,2\n").unwrap();
    assert_eq!(detect(&ap, &bp, "time_shift").0, 1);
    assert_eq!(detect(&junk, &ap, "blinding").0, 1);
    assert_eq!(detect(&ap, &dir.path().join("missing.csv"), "blinding").0, 1);
}
