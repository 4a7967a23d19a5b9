use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use radar_dogm::io::{self, DetectionFrame, GtFrame};
use radar_dogm_cli::manifest::RunManifest;
use radar_dogm_cli::report::MetricsReport;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_radar-dogm"));
    c.env_remove(radar_dogm_cli::CONFIG_ENV);
    c
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

/// Short single-sensor crossing scenario in `dir/synth`.
fn synth(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join("synth");
    run_ok(&[
        "synth", "--scenario", "crossing-vehicle", "--seed", seed, "--duration", "2", "--sensors", "front", "--out",
        &s(&out),
    ]);
    out
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ma, mb) = (manifest(&synth(a.path(), "7")), manifest(&synth(b.path(), "7")));
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.outputs.len(), 2);
    let c = tempfile::tempdir().unwrap();
    assert_ne!(manifest(&synth(c.path(), "8")).outputs, ma.outputs);
}

#[test]
fn synth_frame_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    run_ok(&["synth", "--scenario", "static-world", "--duration", "5", "--frame-rate", "10", "--sensors", "front", "--out", &s(&out)]);
    let gts: Vec<GtFrame> = io::load(&out.join("gt.jsonl")).unwrap();
    assert_eq!(gts.len(), 50);
    assert_eq!(io::load_scans(&out.join("scans.jsonl")).unwrap().len(), 50);
    let m = manifest(&out);
    assert_eq!(m.aggregate["frames"], 50);
    assert_eq!(m.scenario.unwrap().frame_count(), 50);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["synth", "--scenario", "drifting-bus", "--out", &s(dir.path())]).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("drifting-bus"));
    assert_eq!(code(&bin().args(["run", "--out", "x"]).output().unwrap()), 1);
    assert_eq!(code(&bin().output().unwrap()), 1);
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
    assert_eq!(code(&bin().arg("--version").output().unwrap()), 0);
}

#[test]
fn modes_give_separate_detection_files() {
    let dir = tempfile::tempdir().unwrap();
    let scans = synth(dir.path(), "1").join("scans.jsonl");
    let mut files = Vec::new();
    for mode in ["radar-centric", "hsbof-rs"] {
        let out = dir.path().join(mode);
        run_ok(&["run", "--scans", &s(&scans), "--mode", mode, "--out", &s(&out)]);
        let dets: Vec<DetectionFrame> = io::load(&out.join("detections.jsonl")).unwrap();
        assert_eq!(dets.len(), 20);
        assert_eq!(manifest(&out).config.mode.name(), mode);
        files.push(std::fs::read(out.join("detections.jsonl")).unwrap());
    }
    assert_ne!(files[0], files[1]);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let scans = synth(dir.path(), "1").join("scans.jsonl");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[correction]\nt_statik = 4\n").unwrap();
    let out = bin().args(["run", "--scans", &s(&scans), "--config", &s(&cfg), "--out", &s(&dir.path().join("r"))]).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_statik"));

    std::fs::write(&cfg, "[particles]\nsigma_r = -1.0\n").unwrap();
    let out = bin()
        .env(radar_dogm_cli::CONFIG_ENV, &cfg)
        .args(["run", "--scans", &s(&scans), "--out", &s(&dir.path().join("r"))])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma_r"));
}

#[test]
fn unknown_sensor_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let scans = synth(dir.path(), "1").join("scans.jsonl");
    let cfg = dir.path().join("rear.toml");
    std::fs::write(
        &cfg,
        "[[sensors]]\nsensor_id = \"rear\"\nmax_range = 50.0\nazimuth_span = 1.0\nmount_pose = { x = -1.0, y = 0.0, yaw = 3.14 }\n",
    )
    .unwrap();
    let out = bin().args(["run", "--scans", &s(&scans), "--config", &s(&cfg), "--out", &s(&dir.path().join("r"))]).output().unwrap();
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scan 0") && err.contains("front"), "{err}");
}

#[test]
fn export_every_n() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("s");
    run_ok(&["synth", "--scenario", "crossing-pedestrian", "--duration", "5", "--sensors", "front", "--out", &s(&synth_dir)]);
    let out = dir.path().join("r");
    run_ok(&["run", "--scans", &s(&synth_dir.join("scans.jsonl")), "--export-every", "10", "--export-format", "raw", "--out", &s(&out)]);
    let mut grids: Vec<_> = std::fs::read_dir(out.join("grids")).unwrap().map(|e| e.unwrap().file_name()).collect();
    grids.sort();
    assert_eq!(grids.len(), 5);
    assert_eq!(grids[0], "grid_00009.raw");
    let g = io::import_grid_raw(&out.join("grids/grid_00049.raw")).unwrap();
    assert_eq!((g.width, g.height), (300, 300));
    let m = manifest(&out);
    assert_eq!(m.outputs.len(), 3 + 5);
    assert_eq!(m.frames.len(), 50);
    assert!(m.aggregate.get("mean_particle_count").is_some());
}

#[test]
fn manifest_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let scans = synth(dir.path(), "4").join("scans.jsonl");
    let first = dir.path().join("first");
    run_ok(&["run", "--scans", &s(&scans), "--mode", "hsbof-rs", "--seed", "21", "--out", &s(&first)]);
    let second = dir.path().join("second");
    run_ok(&["run", "--scans", &s(&scans), "--config", &s(&first.join("config.toml")), "--out", &s(&second)]);
    let (a, b) = (manifest(&first), manifest(&second));
    assert_eq!(a.config, b.config);
    assert_eq!(a.seed, 21);
    assert_eq!(a.inputs[0].sha256, b.inputs[0].sha256);
    assert_eq!(
        std::fs::read(first.join("detections.jsonl")).unwrap(),
        std::fs::read(second.join("detections.jsonl")).unwrap()
    );
}

fn eval_report(dir: &Path, dets: &[DetectionFrame], gt: &Path) -> Result<MetricsReport, String> {
    let path = dir.join("dets.jsonl");
    io::save(dets, &path).unwrap();
    let out = bin().args(["eval", "--detections", &s(&path), "--gt", &s(gt)]).output().unwrap();
    if out.status.success() {
        Ok(serde_json::from_slice(&out.stdout).unwrap())
    } else {
        assert_eq!(code(&out), 2);
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

#[test]
fn eval_against_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let gt_path = synth(dir.path(), "2").join("gt.jsonl");
    let gts: Vec<GtFrame> = io::load(&gt_path).unwrap();

    let oracle: Vec<DetectionFrame> = gts
        .iter()
        .map(|g| DetectionFrame {
            t: g.t,
            particle_count: 100,
            objects: g
                .to_objects()
                .iter()
                .map(|o| radar_dogm::eval::DetectedObject {
                    t: g.t,
                    center: o.center,
                    velocity: o.velocity,
                    confidence: 1.0,
                    particle_count: 20,
                    mean_age: 5.0,
                    mean_weight: 0.5,
                })
                .collect(),
        })
        .collect();
    let r = eval_report(dir.path(), &oracle, &gt_path).unwrap();
    assert_eq!((r.recall, r.precision, r.dx, r.dv), (1.0, 1.0, Some(0.0), Some(0.0)));
    assert_eq!(r.map, Some(1.0));
    assert_eq!(r.particles.mean_count, 100.0);

    let empty: Vec<DetectionFrame> = gts.iter().map(|g| DetectionFrame { t: g.t, particle_count: 0, objects: vec![] }).collect();
    let r = eval_report(dir.path(), &empty, &gt_path).unwrap();
    assert_eq!(r.recall, 0.0);

    let err = eval_report(dir.path(), &oracle[3..], &gt_path).unwrap_err();
    assert!(err.contains(&gts[0].t.to_string()) && err.contains(&gts[2].t.to_string()), "{err}");
}

#[test]
fn eval_report_fields_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = synth(dir.path(), "3");
    let run_dir = dir.path().join("r");
    run_ok(&["run", "--scans", &s(&synth_dir.join("scans.jsonl")), "--out", &s(&run_dir)]);
    let report = dir.path().join("report.json");
    run_ok(&[
        "eval", "--detections", &s(&run_dir.join("detections.jsonl")), "--gt", &s(&synth_dir.join("gt.jsonl")), "--out",
        &s(&report),
    ]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["dx", "dv", "recall", "precision", "tp", "fp", "fn", "ap", "map"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v["particles"]["mean_count"].as_f64().unwrap() > 0.0);
    assert!(v["ap"]["car"].is_number());
}

#[test]
fn export_frame_formats() {
    let dir = tempfile::tempdir().unwrap();
    let scans = synth(dir.path(), "5").join("scans.jsonl");
    let raw = dir.path().join("f.raw");
    run_ok(&["export-frame", "--scans", &s(&scans), "--frame", "10", "--format", "raw", "--out", &s(&raw)]);
    let bytes = std::fs::read(&raw).unwrap();
    assert_eq!(&bytes[..4], b"DOGM");
    assert_eq!(bytes.len(), 20 + 16 * 300 * 300);
    let csv = dir.path().join("f.csv");
    run_ok(&["export-frame", "--scans", &s(&scans), "--frame", "10", "--out", &s(&csv)]);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 300 * 300 + 1);
    let out = bin().args(["export-frame", "--scans", &s(&scans), "--frame", "20", "--out", &s(&csv)]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "--scans", &s(&dir.path().join("none.jsonl")), "--out", &s(dir.path())]).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("none.jsonl"));
}
