//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::Path;

use radar_dogm::config::PipelineConfig;
use radar_dogm::io::{self, DetectionFrame, GridFormat, GtFrame};
use radar_dogm::scenario::{generate_scenario, ScenarioParams};
use radar_dogm::SensorConfig;
use serde_json::json;

use crate::manifest::{FileDigest, RunManifest};
use crate::report::{evaluate, run_pipeline};
use crate::{resolve_config, CliError, EvalArgs, ExportFrameArgs, RunArgs, SynthArgs};

pub const SCANS_FILE: &str = "scans.jsonl";
pub const GT_FILE: &str = "gt.jsonl";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const FRAMES_FILE: &str = "frames.jsonl";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const GRID_DIR: &str = "grids";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::input(path, e))
}

fn load_scenario_params(path: &Path) -> Result<ScenarioParams, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::input(path, e.message()))
}

fn select_sensors(config: &PipelineConfig, ids: &[String]) -> Result<Vec<SensorConfig>, CliError> {
    if ids.is_empty() {
        return Ok(config.sensors.clone());
    }
    ids.iter()
        .map(|id| {
            config
                .sensor(id)
                .cloned()
                .ok_or_else(|| radar_dogm::Error::UnknownSensor(id.clone()).into())
        })
        .collect()
}

fn digests(dir: &Path, names: &[String]) -> Result<Vec<FileDigest>, CliError> {
    names.iter().map(|n| FileDigest::of(&dir.join(n), n)).collect()
}

pub fn synth(a: &SynthArgs, argv: &[String]) -> Result<(), CliError> {
    let mut params = match &a.params {
        Some(p) => load_scenario_params(p)?,
        None => ScenarioParams::default(),
    };
    if let Some(k) = a.scenario {
        params.kind = k;
    }
    if let Some(s) = a.seed {
        params.seed = s;
    }
    if let Some(v) = a.duration {
        params.duration = Some(v);
    }
    if let Some(v) = a.frame_rate {
        params.frame_rate = v;
    }
    if let Some(v) = a.object_speed {
        params.object_speed = Some(v);
    }
    if let Some(v) = a.ego_speed {
        params.ego_speed = v;
    }
    if let Some(v) = a.crossing_distance {
        params.crossing_distance = v;
    }
    if let Some(v) = a.clutter_rate {
        params.clutter_rate = v;
    }
    if let Some(v) = a.static_detections {
        params.static_detections = v;
    }
    let (config, config_path) = resolve_config(a.config.as_deref())?;
    let sensors = select_sensors(&config, &a.sensors)?;
    let (scans, gt) = generate_scenario(&params, &sensors)?;

    create_dir(&a.out)?;
    io::write_scans(&scans, &a.out.join(SCANS_FILE))?;
    io::save(&gt, &a.out.join(GT_FILE))?;

    let config = PipelineConfig { sensors, ..config };
    let mut m = RunManifest::new("synth", argv, config, params.seed);
    if let Some(p) = &config_path {
        m.inputs.push(FileDigest::of(p, &p.display().to_string())?);
    }
    if let Some(p) = &a.params {
        m.inputs.push(FileDigest::of(p, &p.display().to_string())?);
    }
    m.outputs = digests(&a.out, &[SCANS_FILE.into(), GT_FILE.into()])?;
    m.aggregate = json!({
        "frames": gt.len(),
        "scans": scans.len(),
        "detections": scans.iter().map(|s| s.detections.len()).sum::<usize>(),
    });
    m.scenario = Some(params);
    m.write(&a.out)
}

pub fn run(a: &RunArgs, argv: &[String]) -> Result<(), CliError> {
    let (mut config, config_path) = resolve_config(a.config.as_deref())?;
    if let Some(mode) = a.mode {
        config.mode = mode;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let scans = io::load_scans(&a.scans).map_err(|e| CliError::input(&a.scans, e))?;
    create_dir(&a.out)?;
    if a.export_every > 0 {
        create_dir(&a.out.join(GRID_DIR))?;
    }
    let ext = match a.export_format {
        GridFormat::Csv => "csv",
        GridFormat::Raw => "raw",
    };
    let mut grids = Vec::new();
    let output = run_pipeline(&scans, &config, |k, p| {
        if a.export_every > 0 && (k + 1) % a.export_every == 0 {
            let name = format!("{GRID_DIR}/grid_{k:05}.{ext}");
            io::export_grid(&p.grid, &a.out.join(&name), a.export_format)?;
            grids.push(name);
        }
        Ok(())
    })?;

    io::save(&output.detections, &a.out.join(DETECTIONS_FILE))?;
    io::save(&output.reports, &a.out.join(FRAMES_FILE))?;
    let snapshot = toml::to_string(&config).expect("configuration serializes to TOML");
    write_text(&a.out.join(CONFIG_SNAPSHOT), &snapshot)?;

    let mut m = RunManifest::new("run", argv, config.clone(), config.seed);
    m.inputs.push(FileDigest::of(&a.scans, &a.scans.display().to_string())?);
    if let Some(p) = &config_path {
        m.inputs.push(FileDigest::of(p, &p.display().to_string())?);
    }
    let mut outputs: Vec<String> = vec![DETECTIONS_FILE.into(), FRAMES_FILE.into(), CONFIG_SNAPSHOT.into()];
    outputs.extend(grids.iter().cloned());
    m.outputs = digests(&a.out, &outputs)?;
    let counts: Vec<usize> = output.reports.iter().map(|r| r.particle_count).collect();
    let steps = counts.len();
    m.aggregate = json!({
        "steps": steps,
        "mode": config.mode.name(),
        "mean_particle_count": if steps == 0 { 0.0 } else { counts.iter().sum::<usize>() as f64 / steps as f64 },
        "max_particle_count": counts.iter().copied().max().unwrap_or(0),
        "spawned": output.reports.iter().map(|r| r.spawned).sum::<usize>(),
        "flipped_cells": output.reports.iter().map(|r| r.flipped_cells).sum::<usize>(),
        "objects": output.detections.iter().map(|d| d.objects.len()).sum::<usize>(),
        "grid_exports": grids.len(),
        "mean_step_ms": if steps == 0 { 0.0 } else { output.reports.iter().map(|r| r.wall_time_ms).sum::<f64>() / steps as f64 },
    });
    m.frames = output.reports;
    m.write(&a.out)
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let (config, _) = resolve_config(a.config.as_deref())?;
    let dets: Vec<DetectionFrame> = io::load(&a.detections).map_err(|e| CliError::input(&a.detections, e))?;
    let gts: Vec<GtFrame> = io::load(&a.gt).map_err(|e| CliError::input(&a.gt, e))?;
    let report = evaluate(&dets, &gts, &config.eval)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &a.out {
        Some(path) => write_text(path, &text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Core(e.into()))
        }
    }
}

pub fn export_frame(a: &ExportFrameArgs) -> Result<(), CliError> {
    let (mut config, _) = resolve_config(a.config.as_deref())?;
    if let Some(mode) = a.mode {
        config.mode = mode;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let scans = io::load_scans(&a.scans).map_err(|e| CliError::input(&a.scans, e))?;
    if a.frame >= scans.len() {
        return Err(CliError::input(
            &a.scans,
            format!("frame {} out of range ({} scans)", a.frame, scans.len()),
        ));
    }
    run_pipeline(&scans[..=a.frame], &config, |k, p| {
        if k == a.frame {
            io::export_grid(&p.grid, &a.out, a.format).map_err(|e| CliError::input(&a.out, e))?;
        }
        Ok(())
    })?;
    Ok(())
}
