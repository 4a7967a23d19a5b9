use radar_dogm::io::{
    export_grid, import_grid_raw, load, load_scans, save, write_scans, DetectionFrame, GridFormat, GtFrame,
};
use radar_dogm::scenario::{generate_scenario, ScenarioKind, ScenarioParams};
use radar_dogm::{CellState, Error, GridMap, GridSpec, SensorConfig};

fn scenario(seed: u64) -> (Vec<radar_dogm::Scan>, Vec<GtFrame>) {
    let params = ScenarioParams { seed, duration: Some(1.0), ..ScenarioParams::preset(ScenarioKind::CrossingVehicle) };
    generate_scenario(&params, &SensorConfig::default_suite()).unwrap()
}

#[test]
fn scan_and_gt_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (scans, gts) = scenario(5);
    let sp = dir.path().join("scans.jsonl");
    let gp = dir.path().join("gt.jsonl");
    write_scans(&scans, &sp).unwrap();
    save(&gts, &gp).unwrap();
    assert_eq!(load_scans(&sp).unwrap(), scans);
    assert_eq!(load::<GtFrame>(&gp).unwrap(), gts);
}

#[test]
fn generator_files_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, seed: u64| {
        let path = dir.path().join(name);
        write_scans(&scenario(seed).0, &path).unwrap();
        std::fs::read(path).unwrap()
    };
    assert_eq!(write("a.jsonl", 11), write("b.jsonl", 11));
    assert_ne!(write("c.jsonl", 11), write("d.jsonl", 12));
}

#[test]
fn detection_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("det.jsonl");
    let frames = vec![
        DetectionFrame { t: 0.1, particle_count: 0, objects: Vec::new() },
        DetectionFrame { t: 0.2, particle_count: 12, objects: Vec::new() },
    ];
    save(&frames, &path).unwrap();
    assert_eq!(load::<DetectionFrame>(&path).unwrap(), frames);
}

#[test]
fn missing_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_scans(&dir.path().join("nope.jsonl")), Err(Error::Io(_))));
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"t\":0,\"sensor_id\":\"front\",\"ego_pose\":{\"x\":0,\"y\":0,\"yaw\":0},\"detections\":[]}\n{oops\n").unwrap();
    assert!(matches!(load_scans(&bad), Err(Error::Parse { line: 2, .. })));
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert!(load_scans(&empty).unwrap().is_empty());
}

#[test]
fn grid_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = GridMap::new(GridSpec::new(0.2, 5, 3, [1.0, -2.0]).unwrap()).unwrap();
    for (k, c) in g.cells.iter_mut().enumerate() {
        let a = 0.01 * k as f64;
        *c = CellState::new(0.5 - a, 0.2, 0.1 + a, 0.2);
    }
    let raw = dir.path().join("g.raw");
    export_grid(&g, &raw, GridFormat::Raw).unwrap();
    let back = import_grid_raw(&raw).unwrap();
    assert_eq!((back.width, back.height), (5, 3));
    for (a, b) in g.cells.iter().zip(&back.cells) {
        for s in 0..4 {
            assert!((a.0[s] - b.0[s]).abs() <= 1e-7);
        }
    }
    let csv = dir.path().join("g.csv");
    export_grid(&g, &csv, GridFormat::Csv).unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 16);
    assert!(export_grid(&g, &dir.path().join("missing/g.raw"), GridFormat::Raw).is_err());
}
