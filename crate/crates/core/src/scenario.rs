//! Synthetic radar scenarios: rectangular objects moving at constant
//! velocity, static wall reflectors and clutter, observed by a sensor suite.
//!
//! The ego starts at the origin facing +x. In the crossing presets an object
//! crosses the ego's path from right to left at `crossing_distance`, with a
//! wall behind it. Objects hide the wall points behind them; clutter and
//! object returns are not occluded. Noise figures are placeholders, not
//! measured sensor specs.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::eval::ClassLabel;
use crate::io::{GtFrame, GtRecord};
use crate::model::{Pose, RadarDetection, Scan, SensorConfig};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[default]
    CrossingVehicle,
    CrossingPedestrian,
    StaticWorld,
    /// Objects and walls taken verbatim from the parameters.
    Custom,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::CrossingVehicle => "crossing-vehicle",
            ScenarioKind::CrossingPedestrian => "crossing-pedestrian",
            ScenarioKind::StaticWorld => "static-world",
            ScenarioKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "crossing-vehicle" => Ok(ScenarioKind::CrossingVehicle),
            "crossing-pedestrian" => Ok(ScenarioKind::CrossingPedestrian),
            "static-world" => Ok(ScenarioKind::StaticWorld),
            "custom" => Ok(ScenarioKind::Custom),
            other => Err(format!(
                "unknown scenario `{other}` (expected crossing-vehicle, crossing-pedestrian, static-world or custom)"
            )),
        }
    }
}

/// Gaussian RCS distribution in dBsm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcsModel {
    pub mean: f64,
    pub sigma: f64,
}

impl RcsModel {
    pub fn for_class(class: ClassLabel) -> Self {
        let (mean, sigma) = match class {
            ClassLabel::Car => (10.0, 3.0),
            ClassLabel::Large => (20.0, 4.0),
            ClassLabel::TwoWheeler => (3.0, 3.0),
            ClassLabel::Pedestrian => (-5.0, 3.0),
            ClassLabel::PedestrianGroup => (0.0, 3.0),
        };
        Self { mean, sigma }
    }
}

/// Rectangle moving at constant velocity, its long side along the motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u64,
    pub class: ClassLabel,
    /// Center at t = 0.
    pub start: [f64; 2],
    pub velocity: [f64; 2],
    pub length: f64,
    pub width: f64,
}

impl ObjectSpec {
    pub fn center_at(&self, t: f64) -> [f64; 2] {
        [self.start[0] + self.velocity[0] * t, self.start[1] + self.velocity[1] * t]
    }

    /// Corners counter-clockwise at time `t`.
    pub fn corners_at(&self, t: f64) -> [[f64; 2]; 4] {
        let c = self.center_at(t);
        let speed = self.velocity[0].hypot(self.velocity[1]);
        let (ux, uy) = if speed > 0.0 {
            (self.velocity[0] / speed, self.velocity[1] / speed)
        } else {
            (1.0, 0.0)
        };
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let at = |a: f64, b: f64| [c[0] + a * ux - b * uy, c[1] + a * uy + b * ux];
        [at(hl, -hw), at(hl, hw), at(-hl, hw), at(-hl, -hw)]
    }
}

/// Static line reflector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub kind: ScenarioKind,
    /// Object speed in m/s; the preset's default when absent.
    pub object_speed: Option<f64>,
    /// Ego speed along +x in m/s.
    pub ego_speed: f64,
    pub frame_rate: f64,
    /// Seconds; the preset's default when absent.
    pub duration: Option<f64>,
    /// Inclusive range of detections drawn per visible object and sensor.
    pub detections_per_object: [usize; 2],
    pub range_noise: f64,
    pub azimuth_noise: f64,
    pub vr_noise: f64,
    /// Mean clutter detections per frame and sensor.
    pub clutter_rate: f64,
    /// Object RCS; the class default when absent.
    pub rcs_object: Option<RcsModel>,
    /// Clutter RCS mean sits this many dB below the object mean.
    pub rcs_clutter_offset: f64,
    pub rcs_static: RcsModel,
    /// Forward distance of the crossing path.
    pub crossing_distance: f64,
    /// Wall detections drawn per frame and sensor.
    pub static_detections: usize,
    /// Objects of a custom scenario.
    pub objects: Vec<ObjectSpec>,
    /// Walls of a custom scenario.
    pub walls: Vec<Wall>,
    /// Time offset between consecutive sensors within a frame.
    pub sensor_stagger: f64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::CrossingVehicle,
            object_speed: None,
            ego_speed: 0.0,
            frame_rate: 10.0,
            duration: None,
            detections_per_object: [3, 8],
            range_noise: 0.15,
            azimuth_noise: 0.5f64.to_radians(),
            vr_noise: 0.1,
            clutter_rate: 2.0,
            rcs_object: None,
            rcs_clutter_offset: 15.0,
            rcs_static: RcsModel { mean: 10.0, sigma: 3.0 },
            crossing_distance: 15.0,
            static_detections: 60,
            objects: Vec::new(),
            walls: Vec::new(),
            sensor_stagger: 1e-3,
            seed: 0,
        }
    }
}

impl ScenarioParams {
    pub fn preset(kind: ScenarioKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn object_speed(&self) -> f64 {
        self.object_speed.unwrap_or(match self.kind {
            ScenarioKind::CrossingPedestrian => 1.4,
            _ => 8.33,
        })
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or(match self.kind {
            ScenarioKind::CrossingVehicle => 4.0,
            ScenarioKind::CrossingPedestrian => 10.0,
            _ => 5.0,
        })
    }

    pub fn frame_count(&self) -> usize {
        (self.duration() * self.frame_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("object_speed", self.object_speed()),
            ("ego_speed", self.ego_speed),
            ("range_noise", self.range_noise),
            ("azimuth_noise", self.azimuth_noise),
            ("vr_noise", self.vr_noise),
            ("clutter_rate", self.clutter_rate),
            ("rcs_clutter_offset", self.rcs_clutter_offset),
            ("sensor_stagger", self.sensor_stagger),
            ("duration", self.duration()),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(param("frame_rate", format!("must be > 0, got {}", self.frame_rate)));
        }
        if !(self.crossing_distance > 0.0) {
            return Err(param("crossing_distance", "must be > 0"));
        }
        let [lo, hi] = self.detections_per_object;
        if lo > hi {
            return Err(param("detections_per_object", format!("empty range [{lo}, {hi}]")));
        }
        for o in &self.objects {
            if !(o.length > 0.0 && o.width > 0.0) {
                return Err(param("objects", format!("object {} needs positive length and width", o.id)));
            }
        }
        Ok(())
    }

    /// Objects of the scenario, positioned so that crossings pass the ego's
    /// boresight halfway through the run.
    pub fn scene_objects(&self) -> Vec<ObjectSpec> {
        let v = self.object_speed();
        let half = self.duration() / 2.0;
        let crossing = |class, length, width| ObjectSpec {
            id: 1,
            class,
            start: [self.crossing_distance, -v * half],
            velocity: [0.0, v],
            length,
            width,
        };
        match self.kind {
            ScenarioKind::CrossingVehicle => vec![crossing(ClassLabel::Car, 4.5, 1.8)],
            ScenarioKind::CrossingPedestrian => vec![crossing(ClassLabel::Pedestrian, 0.5, 0.5)],
            ScenarioKind::StaticWorld => Vec::new(),
            ScenarioKind::Custom => self.objects.clone(),
        }
    }

    pub fn scene_walls(&self) -> Vec<Wall> {
        let d = self.crossing_distance;
        match self.kind {
            ScenarioKind::CrossingVehicle | ScenarioKind::CrossingPedestrian => {
                vec![Wall { a: [d + 8.0, -25.0], b: [d + 8.0, 25.0] }]
            }
            ScenarioKind::StaticWorld => {
                let end = 30.0 + self.ego_speed * self.duration();
                vec![
                    Wall { a: [-30.0, 6.0], b: [end, 6.0] },
                    Wall { a: [-30.0, -6.0], b: [end, -6.0] },
                    Wall { a: [end, -6.0], b: [end, 6.0] },
                ]
            }
            ScenarioKind::Custom => self.walls.clone(),
        }
    }
}

/// Per-frame time at which ground truth is stamped: the last sensor's scan.
pub fn frame_time(params: &ScenarioParams, frame: usize, n_sensors: usize) -> f64 {
    frame as f64 / params.frame_rate + n_sensors.saturating_sub(1) as f64 * params.sensor_stagger
}

struct Noise {
    range: Normal<f64>,
    azimuth: Normal<f64>,
    vr: Normal<f64>,
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated as finite and non-negative")
}

fn in_fov(sensor: &Pose, s: &SensorConfig, p: [f64; 2]) -> Option<(f64, f64)> {
    let (dx, dy) = (p[0] - sensor.x, p[1] - sensor.y);
    let r = dx.hypot(dy);
    let az = crate::ism::wrap_angle(dy.atan2(dx) - sensor.yaw);
    (r > 0.0 && r <= s.max_range && az.abs() <= s.azimuth_span).then_some((r, az))
}

/// Detection of the world point `p` moving at `vel`, or `None` when the noisy
/// point falls outside the field of view.
#[allow(clippy::too_many_arguments)]
fn observe(
    sensor: &Pose,
    s: &SensorConfig,
    ego_vel: [f64; 2],
    p: [f64; 2],
    vel: [f64; 2],
    rcs: f64,
    noise: &Noise,
    rng: &mut Rng,
) -> Option<RadarDetection> {
    let (r, az) = in_fov(sensor, s, p)?;
    let bearing = az + sensor.yaw;
    let u = [bearing.cos(), bearing.sin()];
    let raw = (vel[0] - ego_vel[0]) * u[0] + (vel[1] - ego_vel[1]) * u[1];
    let compensated = raw + ego_vel[0] * u[0] + ego_vel[1] * u[1];
    let rn = (r + noise.range.sample(rng)).max(0.05);
    let an = bearing + noise.azimuth.sample(rng);
    let q = [sensor.x + rn * an.cos(), sensor.y + rn * an.sin()];
    in_fov(sensor, s, q)?;
    Some(RadarDetection {
        x: q[0],
        y: q[1],
        vr: compensated + noise.vr.sample(rng),
        rcs,
    })
}

/// Uniform sample over the edges of `corners` that face `from`.
fn sample_contour(corners: &[[f64; 2]; 4], from: [f64; 2], rng: &mut Rng) -> Option<[f64; 2]> {
    let mut edges = Vec::with_capacity(2);
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        // Outward normal of a counter-clockwise polygon edge.
        let n = [b[1] - a[1], a[0] - b[0]];
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        if n[0] * (from[0] - mid[0]) + n[1] * (from[1] - mid[1]) > 0.0 {
            edges.push((a, b, (b[0] - a[0]).hypot(b[1] - a[1])));
        }
    }
    let total: f64 = edges.iter().map(|e| e.2).sum();
    if total <= 0.0 {
        return None;
    }
    let mut s = rng.random_range(0.0..total);
    for (a, b, len) in &edges {
        if s <= *len {
            let f = s / len;
            return Some([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
        }
        s -= len;
    }
    edges.last().map(|e| e.1)
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Whether the line of sight from `from` to `p` crosses the outline of any object.
fn occluded(from: [f64; 2], p: [f64; 2], outlines: &[[[f64; 2]; 4]]) -> bool {
    outlines
        .iter()
        .any(|c| (0..4).any(|k| segments_cross(from, p, c[k], c[(k + 1) % 4])))
}

fn sample_walls(walls: &[Wall], rng: &mut Rng) -> Option<[f64; 2]> {
    let len = |w: &Wall| (w.b[0] - w.a[0]).hypot(w.b[1] - w.a[1]);
    let total: f64 = walls.iter().map(len).sum();
    if total <= 0.0 {
        return None;
    }
    let mut s = rng.random_range(0.0..total);
    for w in walls {
        let l = len(w);
        if s <= l {
            let f = s / l;
            return Some([w.a[0] + f * (w.b[0] - w.a[0]), w.a[1] + f * (w.b[1] - w.a[1])]);
        }
        s -= l;
    }
    None
}

/// Scan stream (frame-major, sensors in suite order, staggered in time) and
/// one ground-truth record per frame listing the objects whose center lies in
/// some sensor's field of view. Deterministic in `params.seed`.
pub fn generate_scenario(params: &ScenarioParams, sensors: &[SensorConfig]) -> Result<(Vec<Scan>, Vec<GtFrame>)> {
    params.validate()?;
    if sensors.is_empty() {
        return Err(param("sensors", "at least one sensor is required"));
    }
    for s in sensors {
        s.validate()?;
    }
    let mut rng = rng::stream(params.seed, rng::streams::SCENARIO);
    let noise = Noise {
        range: normal(params.range_noise),
        azimuth: normal(params.azimuth_noise),
        vr: normal(params.vr_noise),
    };
    let clutter_count = (params.clutter_rate > 0.0)
        .then(|| Poisson::new(params.clutter_rate).expect("positive rate"));
    let objects = params.scene_objects();
    let walls = params.scene_walls();
    let ego_vel = [params.ego_speed, 0.0];
    let object_rcs: Vec<Normal<f64>> = objects
        .iter()
        .map(|o| {
            let m = params.rcs_object.unwrap_or(RcsModel::for_class(o.class));
            Normal::new(m.mean, m.sigma.max(0.0)).expect("finite rcs model")
        })
        .collect();
    let object_mean = objects
        .first()
        .map(|o| params.rcs_object.unwrap_or(RcsModel::for_class(o.class)).mean)
        .unwrap_or(RcsModel::for_class(ClassLabel::Car).mean);
    let clutter_rcs = normal(3.0);
    let static_rcs = Normal::new(params.rcs_static.mean, params.rcs_static.sigma.max(0.0))
        .map_err(|e| param("rcs_static", e.to_string()))?;
    let [lo, hi] = params.detections_per_object;

    let mut scans = Vec::new();
    let mut gts = Vec::new();
    for frame in 0..params.frame_count() {
        for (si, s) in sensors.iter().enumerate() {
            let t = frame as f64 / params.frame_rate + si as f64 * params.sensor_stagger;
            let ego = Pose::new(params.ego_speed * t, 0.0, 0.0);
            let sp = s.world_pose(&ego);
            let mut detections = Vec::new();
            for (o, rcs) in objects.iter().zip(&object_rcs) {
                if in_fov(&sp, s, o.center_at(t)).is_none() {
                    continue;
                }
                let corners = o.corners_at(t);
                let n = rng.random_range(lo..=hi);
                for _ in 0..n {
                    let Some(p) = sample_contour(&corners, sp.xy(), &mut rng) else { break };
                    let r = rcs.sample(&mut rng);
                    if let Some(d) = observe(&sp, s, ego_vel, p, o.velocity, r, &noise, &mut rng) {
                        detections.push(d);
                    }
                }
            }
            let outlines: Vec<_> = objects.iter().map(|o| o.corners_at(t)).collect();
            for _ in 0..params.static_detections {
                let Some(p) = sample_walls(&walls, &mut rng) else { break };
                if occluded(sp.xy(), p, &outlines) {
                    continue;
                }
                let r = static_rcs.sample(&mut rng);
                if let Some(d) = observe(&sp, s, ego_vel, p, [0.0, 0.0], r, &noise, &mut rng) {
                    detections.push(d);
                }
            }
            if let Some(pois) = &clutter_count {
                let n = pois.sample(&mut rng) as usize;
                for _ in 0..n {
                    let r = s.max_range * rng.random::<f64>().sqrt();
                    let az = sp.yaw + rng.random_range(-s.azimuth_span..=s.azimuth_span);
                    detections.push(RadarDetection {
                        x: sp.x + r * az.cos(),
                        y: sp.y + r * az.sin(),
                        vr: noise.vr.sample(&mut rng),
                        rcs: object_mean - params.rcs_clutter_offset + clutter_rcs.sample(&mut rng),
                    });
                }
            }
            scans.push(Scan { t, sensor_id: s.sensor_id.clone(), ego_pose: ego, detections });
        }
        let t = frame_time(params, frame, sensors.len());
        let ego = Pose::new(params.ego_speed * t, 0.0, 0.0);
        let covered = |c: [f64; 2]| sensors.iter().any(|s| in_fov(&s.world_pose(&ego), s, c).is_some());
        gts.push(GtFrame {
            t,
            objects: objects
                .iter()
                .filter(|o| covered(o.center_at(t)))
                .map(|o| {
                    let c = o.center_at(t);
                    GtRecord { id: o.id, class: o.class, cx: c[0], cy: c[1], vx: o.velocity[0], vy: o.velocity[1] }
                })
                .collect(),
        });
    }
    Ok((scans, gts))
}
