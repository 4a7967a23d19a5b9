//! Object extraction from the grid and detection metrics.
//!
//! Particles in dynamic cells are clustered by density; each cluster becomes a
//! [`DetectedObject`]. Detections are matched to ground truth by center
//! distance, and average precision follows the distance-threshold convention
//! of the nuScenes detection benchmark.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::model::{GridMap, Particle, State};
use crate::particles::particle_cell;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Clustering neighborhood radius (meters).
    pub eps: f64,
    /// Minimum neighborhood size (the point included) of a core particle.
    pub min_pts: usize,
    /// Center-distance thresholds for AP, ascending.
    pub match_thresholds: Vec<f64>,
    /// Threshold used for recall, precision and error metrics.
    pub single_threshold: f64,
    /// Mean particle age at which the age factor of the confidence saturates.
    pub age_norm: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            eps: 0.6,
            min_pts: 5,
            match_thresholds: vec![0.5, 1.0, 2.0, 4.0],
            single_threshold: 2.0,
            age_norm: 5.0,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps", self.eps),
            ("single_threshold", self.single_threshold),
            ("age_norm", self.age_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(name, format!("must be positive, got {v}")));
            }
        }
        if self.min_pts == 0 {
            return Err(param("min_pts", "must be positive"));
        }
        if self.match_thresholds.is_empty()
            || self.match_thresholds.iter().any(|&t| !(t > 0.0))
            || self.match_thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(param("match_thresholds", "must be positive and strictly ascending"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Car,
    Large,
    TwoWheeler,
    Pedestrian,
    PedestrianGroup,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::Car,
        ClassLabel::Large,
        ClassLabel::TwoWheeler,
        ClassLabel::Pedestrian,
        ClassLabel::PedestrianGroup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Car => "car",
            ClassLabel::Large => "large",
            ClassLabel::TwoWheeler => "two_wheeler",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::PedestrianGroup => "pedestrian_group",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub t: f64,
    pub center: [f64; 2],
    pub velocity: [f64; 2],
    pub confidence: f64,
    pub particle_count: usize,
    pub mean_age: f64,
    /// Mean particle weight of the cluster.
    pub mean_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub t: f64,
    pub id: u64,
    pub class: ClassLabel,
    pub center: [f64; 2],
    pub velocity: [f64; 2],
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Density clustering of 2D points. Returns a cluster id per point (`None`
/// for noise), numbered in order of each cluster's smallest point index.
///
/// Core points (at least `min_pts` points within `eps`, self included) are
/// joined into connected components. A border point goes to the cluster of
/// its nearest core neighbor, so the result does not depend on input order.
pub fn dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let key = |p: [f64; 2]| ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64);
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(*p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        let (bx, by) = key(points[i]);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = buckets.get(&(bx + dx, by + dy)) {
                    for &j in b {
                        let (ex, ey) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
                        if ex * ex + ey * ey <= eps2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
        out
    };
    let nbrs: Vec<Vec<usize>> = (0..n).map(neighbors).collect();
    let core: Vec<bool> = nbrs.iter().map(|v| v.len() >= min_pts).collect();

    // Union-find over core points.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &nbrs[i] {
            if core[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }

    let mut root_of = vec![None; n];
    for i in 0..n {
        if core[i] {
            root_of[i] = Some(find(&mut parent, i));
        } else {
            // Nearest core neighbor; ties broken by position, then index.
            root_of[i] = nbrs[i]
                .iter()
                .filter(|&&j| core[j])
                .min_by(|&&a, &&b| {
                    let da = dist(points[i], points[a]);
                    let db = dist(points[i], points[b]);
                    da.total_cmp(&db)
                        .then(points[a][0].total_cmp(&points[b][0]))
                        .then(points[a][1].total_cmp(&points[b][1]))
                        .then(a.cmp(&b))
                })
                .map(|&j| find(&mut parent, j));
        }
    }
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let mut out = vec![None; n];
    for i in 0..n {
        if let Some(r) = root_of[i] {
            let next = ids.len();
            out[i] = Some(*ids.entry(r).or_insert(next));
        }
    }
    out
}

/// One object per density cluster of the particles residing in dynamic
/// cells. The center is the weight-weighted particle mean; the velocity
/// weights each particle by weight times maturity `min(age / age_norm, 1)`.
/// Confidence is assigned by [`assign_confidence`].
pub fn cluster_dynamic_cells(grid: &GridMap, particles: &[Particle], params: &EvalParams, t: f64) -> Vec<DetectedObject> {
    let spec = &grid.spec;
    let members: Vec<&Particle> = particles
        .iter()
        .filter(|p| particle_cell(p, spec).is_some_and(|k| grid.cells[k].argmax() == State::Dynamic))
        .collect();
    let points: Vec<[f64; 2]> = members
        .iter()
        .map(|p| [p.x + spec.origin[0], p.y + spec.origin[1]])
        .collect();
    let labels = dbscan(&points, params.eps, params.min_pts);
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);

    #[derive(Default, Clone)]
    struct Acc {
        w: f64,
        wm: f64,
        wx: [f64; 2],
        wv: [f64; 2],
        x: [f64; 2],
        v: [f64; 2],
        age: f64,
        n: usize,
    }
    let mut acc = vec![Acc::default(); n_clusters];
    for ((p, pt), l) in members.iter().zip(&points).zip(&labels) {
        let Some(c) = *l else { continue };
        let a = &mut acc[c];
        a.w += p.weight;
        a.n += 1;
        a.age += p.age as f64;
        for d in 0..2 {
            a.wx[d] += p.weight * pt[d];
            a.x[d] += pt[d];
        }
        let mature = p.weight * (p.age as f64 / params.age_norm).min(1.0);
        a.wm += mature;
        a.wv[0] += mature * p.vx;
        a.wv[1] += mature * p.vy;
        a.v[0] += p.vx;
        a.v[1] += p.vy;
    }
    let mut objs: Vec<DetectedObject> = acc
        .into_iter()
        .filter(|a| a.n >= params.min_pts)
        .map(|a| {
            let n = a.n as f64;
            let center = if a.w > 0.0 { [a.wx[0] / a.w, a.wx[1] / a.w] } else { [a.x[0] / n, a.x[1] / n] };
            let velocity = if a.wm > 0.0 { [a.wv[0] / a.wm, a.wv[1] / a.wm] } else { [a.v[0] / n, a.v[1] / n] };
            DetectedObject {
                t,
                center,
                velocity,
                confidence: 0.0,
                particle_count: a.n,
                mean_age: a.age / n,
                mean_weight: a.w / n,
            }
        })
        .collect();
    assign_confidence(&mut objs, params);
    objs
}

/// `w̄ · min(mean_age / age_norm, 1)` with `w̄` the mean weight relative to the
/// frame's strongest cluster.
pub fn confidence(obj: &DetectedObject, max_mean_weight: f64, params: &EvalParams) -> f64 {
    let w = if max_mean_weight > 0.0 { obj.mean_weight / max_mean_weight } else { 1.0 };
    (w * (obj.mean_age / params.age_norm).min(1.0)).clamp(0.0, 1.0)
}

pub fn assign_confidence(objs: &mut [DetectedObject], params: &EvalParams) {
    let max_w = objs.iter().map(|o| o.mean_weight).fold(0.0, f64::max);
    for o in objs.iter_mut() {
        o.confidence = confidence(o, max_w, params);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// (detection index, ground-truth index, center distance)
    pub matches: Vec<(usize, usize, f64)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

/// Detection indices by descending confidence; equal confidences keep input order.
fn by_confidence(dets: &[DetectedObject]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Greedy one-to-one matching: in descending confidence, each detection takes
/// the nearest unclaimed ground truth within `threshold`.
pub fn match_detections(dets: &[DetectedObject], gts: &[GtObject], threshold: f64) -> Matching {
    let mut claimed = vec![false; gts.len()];
    let mut out = Matching::default();
    for d in by_confidence(dets) {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(g, _)| !claimed[*g])
            .map(|(g, gt)| (g, dist(dets[d].center, gt.center)))
            .filter(|&(_, e)| e <= threshold)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match best {
            Some((g, e)) => {
                claimed[g] = true;
                out.matches.push((d, g, e));
            }
            None => out.false_positives.push(d),
        }
    }
    out.false_negatives = (0..gts.len()).filter(|&g| !claimed[g]).collect();
    out
}

/// Detections and ground truth of one timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameData {
    pub t: f64,
    pub dets: Vec<DetectedObject>,
    pub gts: Vec<GtObject>,
}

/// Area under the max-interpolated precision envelope over recall in
/// `[0.1, 1]`, precision below 0.1 counted as 0, scaled by `1/0.9`.
/// `curve` holds (recall, precision) after each detection of the sweep.
pub fn area_under_envelope(curve: &[(f64, f64)]) -> f64 {
    const MIN_RECALL: f64 = 0.1;
    const MIN_PRECISION: f64 = 0.1;
    let n = curve.len();
    let mut envelope = vec![0.0f64; n];
    let mut running_max = 0.0f64;
    for k in (0..n).rev() {
        running_max = running_max.max(curve[k].1);
        envelope[k] = running_max;
    }
    let clip = |r: f64| r.clamp(MIN_RECALL, 1.0);
    // One product per flat stretch of the envelope.
    let mut area = 0.0;
    let mut k = 0;
    while k < n {
        let mut j = k;
        while j + 1 < n && envelope[j + 1] == envelope[k] {
            j += 1;
        }
        if envelope[k] >= MIN_PRECISION {
            let lo = if k == 0 { 0.0 } else { curve[k - 1].0 };
            area += envelope[k] * (clip(curve[j].0) - clip(lo));
        }
        k = j + 1;
    }
    area / (1.0 - MIN_RECALL)
}

/// Average precision of one class at one distance threshold. `None` when the
/// class has no ground truth.
pub fn average_precision_at(frames: &[FrameData], class: ClassLabel, threshold: f64) -> Option<f64> {
    let n_pos: usize = frames.iter().map(|f| f.gts.iter().filter(|g| g.class == class).count()).sum();
    if n_pos == 0 {
        return None;
    }
    // (confidence, frame, detection, is_tp); detections matched to another class are dropped.
    let mut sweep: Vec<(f64, usize, usize, bool)> = Vec::new();
    for (fi, f) in frames.iter().enumerate() {
        let m = match_detections(&f.dets, &f.gts, threshold);
        for &(d, g, _) in &m.matches {
            if f.gts[g].class == class {
                sweep.push((f.dets[d].confidence, fi, d, true));
            }
        }
        for &d in &m.false_positives {
            sweep.push((f.dets[d].confidence, fi, d, false));
        }
    }
    sweep.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(sweep.len());
    for (k, s) in sweep.iter().enumerate() {
        if s.3 {
            tp += 1;
        }
        curve.push((tp as f64 / n_pos as f64, tp as f64 / (k + 1) as f64));
    }
    Some(area_under_envelope(&curve))
}

/// Mean AP over the configured thresholds.
pub fn average_precision(frames: &[FrameData], class: ClassLabel, params: &EvalParams) -> Option<f64> {
    let aps: Option<Vec<f64>> = params
        .match_thresholds
        .iter()
        .map(|&t| average_precision_at(frames, class, t))
        .collect();
    aps.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-class AP and their mean over the classes that have ground truth.
pub fn mean_average_precision(frames: &[FrameData], params: &EvalParams) -> (Vec<(ClassLabel, Option<f64>)>, Option<f64>) {
    let per: Vec<_> = ClassLabel::ALL
        .iter()
        .map(|&c| (c, average_precision(frames, c, params)))
        .collect();
    let defined: Vec<f64> = per.iter().filter_map(|(_, ap)| *ap).collect();
    let map = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    (per, map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMetrics {
    /// Mean center error over matches.
    pub dx: Option<f64>,
    /// Mean velocity error magnitude over matches.
    pub dv: Option<f64>,
    pub recall: f64,
    /// 0 when there are no detections.
    pub precision: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn track_metrics(frames: &[FrameData], params: &EvalParams) -> TrackMetrics {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let (mut sx, mut sv) = (0.0, 0.0);
    for f in frames {
        let m = match_detections(&f.dets, &f.gts, params.single_threshold);
        for &(d, g, e) in &m.matches {
            sx += e;
            sv += dist(f.dets[d].velocity, f.gts[g].velocity);
        }
        tp += m.matches.len();
        fp += m.false_positives.len();
        fn_ += m.false_negatives.len();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    TrackMetrics {
        dx: (tp > 0).then(|| sx / tp as f64),
        dv: (tp > 0).then(|| sv / tp as f64),
        recall: ratio(tp, tp + fn_),
        precision: ratio(tp, tp + fp),
        tp,
        fp,
        fn_,
    }
}
