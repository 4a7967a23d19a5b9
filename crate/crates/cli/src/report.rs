//! Pipeline driver and metrics report.

use std::collections::{BTreeMap, HashMap};

use radar_dogm::config::PipelineConfig;
use radar_dogm::eval::{cluster_dynamic_cells, mean_average_precision, track_metrics, ClassLabel, EvalParams, FrameData};
use radar_dogm::fusion::{FrameReport, Pipeline};
use radar_dogm::io::{DetectionFrame, GtFrame};
use radar_dogm::Scan;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub detections: Vec<DetectionFrame>,
    pub reports: Vec<FrameReport>,
}

/// Steps a fresh pipeline through `scans`, extracting objects after every
/// scan. `on_step` sees the pipeline after each step.
pub fn run_pipeline(
    scans: &[Scan],
    config: &PipelineConfig,
    mut on_step: impl FnMut(usize, &Pipeline) -> Result<(), CliError>,
) -> Result<RunOutput, CliError> {
    let start = scans.first().map_or([0.0; 2], |s| s.ego_pose.xy());
    let mut pipeline = Pipeline::new(config.clone(), start)?;
    let mut out = RunOutput::default();
    for (index, scan) in scans.iter().enumerate() {
        let report = pipeline.step(scan).map_err(|source| CliError::Scan { index, t: scan.t, source })?;
        let objects = cluster_dynamic_cells(&pipeline.grid, &pipeline.particles, &config.eval, scan.t);
        out.detections.push(DetectionFrame {
            t: scan.t,
            particle_count: report.particle_count,
            objects,
        });
        out.reports.push(report);
        on_step(index, &pipeline)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleStats {
    /// Mean particle count over all detection frames (N.P.).
    pub mean_count: f64,
    pub max_count: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Ground-truth frames evaluated.
    pub frames: usize,
    pub single_threshold: f64,
    pub match_thresholds: Vec<f64>,
    pub dx: Option<f64>,
    pub dv: Option<f64>,
    pub recall: f64,
    pub precision: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Classes without ground truth map to null.
    pub ap: BTreeMap<ClassLabel, Option<f64>>,
    pub map: Option<f64>,
    pub particles: ParticleStats,
}

/// Pairs every ground-truth frame with the detection frame of the identical
/// timestamp and scores them. Detection frames without ground truth only
/// count towards the particle statistics.
pub fn evaluate(dets: &[DetectionFrame], gts: &[GtFrame], params: &EvalParams) -> Result<MetricsReport, CliError> {
    params.validate()?;
    let by_time: HashMap<u64, &DetectionFrame> = dets.iter().map(|d| (d.t.to_bits(), d)).collect();
    let mut missing = Vec::new();
    let mut frames = Vec::with_capacity(gts.len());
    for g in gts {
        match by_time.get(&g.t.to_bits()) {
            Some(d) => frames.push(FrameData { t: g.t, dets: d.objects.clone(), gts: g.to_objects() }),
            None => missing.push(g.t),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::MissingFrames(missing));
    }
    let tm = track_metrics(&frames, params);
    let (per_class, map) = mean_average_precision(&frames, params);
    let counts: Vec<usize> = dets.iter().map(|d| d.particle_count).collect();
    let particles = ParticleStats {
        mean_count: if counts.is_empty() { 0.0 } else { counts.iter().sum::<usize>() as f64 / counts.len() as f64 },
        max_count: counts.iter().copied().max().unwrap_or(0),
        frames: counts.len(),
    };
    Ok(MetricsReport {
        frames: frames.len(),
        single_threshold: params.single_threshold,
        match_thresholds: params.match_thresholds.clone(),
        dx: tm.dx,
        dv: tm.dv,
        recall: tm.recall,
        precision: tm.precision,
        tp: tm.tp,
        fp: tm.fp,
        fn_: tm.fn_,
        ap: per_class.into_iter().collect(),
        map,
        particles,
    })
}
