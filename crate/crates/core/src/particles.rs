//! Particle population for the dynamic hypothesis: birth with range-rate
//! consistent velocities, weight update, systematic resampling, prediction and
//! per-cell velocity statistics.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::ism::nearest_index;
use crate::measurement::{motion_probability, StateParams};
use crate::model::{GridSpec, Particle, RadarDetection};
use crate::rng::Rng;

/// How the distance and range-rate terms of the weight update combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightUpdate {
    /// `[f_d f_r + (1 - f_d)(1 - ε)] w`
    #[default]
    Convex,
    /// `f_d f_r (1 - f_d)(1 - ε) w`
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleParams {
    /// Particles born per newly dynamic cell.
    pub nu_birth: usize,
    /// Global particle cap.
    pub n_max: usize,
    /// Survival decay per cycle.
    pub epsilon: f64,
    /// Range-rate kernel width (m/s).
    pub sigma_r: f64,
    pub v_max: f64,
    /// Bound of the tangential velocity drawn at birth.
    pub t_tangential_max: f64,
    /// Resampling target per unit of dynamic mass.
    pub particles_per_mass: f64,
    /// Std-dev of the velocity jitter applied to resampled copies (m/s).
    pub resample_velocity_noise: f64,
    pub weight_update: WeightUpdate,
}

impl Default for ParticleParams {
    fn default() -> Self {
        Self {
            nu_birth: 10,
            n_max: 20_000,
            epsilon: 0.01,
            sigma_r: 0.5,
            v_max: 16.7,
            t_tangential_max: 16.7,
            particles_per_mass: 30.0,
            resample_velocity_noise: 0.3,
            weight_update: WeightUpdate::Convex,
        }
    }
}

impl ParticleParams {
    pub fn validate(&self) -> Result<()> {
        if self.nu_birth == 0 {
            return Err(param("nu_birth", "must be positive"));
        }
        if self.n_max == 0 {
            return Err(param("n_max", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(param("epsilon", format!("must lie in (0, 1), got {}", self.epsilon)));
        }
        for (name, v) in [
            ("sigma_r", self.sigma_r),
            ("v_max", self.v_max),
            ("t_tangential_max", self.t_tangential_max),
            ("particles_per_mass", self.particles_per_mass),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.resample_velocity_noise >= 0.0) {
            return Err(param("resample_velocity_noise", "must be >= 0"));
        }
        Ok(())
    }
}

/// Unit line of sight from `from` to `to`; +x when the points coincide.
pub fn line_of_sight(from: [f64; 2], to: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
    let n = dx.hypot(dy);
    if n > 0.0 {
        [dx / n, dy / n]
    } else {
        [1.0, 0.0]
    }
}

/// Births `nu_birth` particles in cell `(i, j)` whose radial velocity along
/// the sensor line of sight matches the detection's range rate.
///
/// When `|vr| > v_max` the radial component is clamped to `v_max` and no
/// tangential spread is drawn.
pub fn spawn_particles(
    cell: (usize, usize),
    det: &RadarDetection,
    sensor_xy: [f64; 2],
    spec: &GridSpec,
    params: &ParticleParams,
    rng: &mut Rng,
) -> Vec<Particle> {
    let u = line_of_sight(sensor_xy, [det.x, det.y]);
    let perp = [-u[1], u[0]];
    let radial = det.vr.clamp(-params.v_max, params.v_max);
    let t_lim = params
        .t_tangential_max
        .min((params.v_max * params.v_max - radial * radial).max(0.0).sqrt());
    let c = spec.cell_size;
    let w = 1.0 / params.nu_birth as f64;
    (0..params.nu_birth)
        .map(|_| {
            let x = (cell.0 as f64 + rng.random::<f64>()) * c;
            let y = (cell.1 as f64 + rng.random::<f64>()) * c;
            let t = if t_lim > 0.0 { rng.random_range(-t_lim..=t_lim) } else { 0.0 };
            Particle {
                x,
                y,
                vx: radial * u[0] + t * perp[0],
                vy: radial * u[1] + t * perp[1],
                weight: w,
                age: 0,
            }
        })
        .collect()
}

/// Weight update against one scan. Particles are in the grid frame of `spec`,
/// detections and the sensor position in the world frame.
pub fn update_weights(
    particles: &mut [Particle],
    detections: &[RadarDetection],
    sensor_xy: [f64; 2],
    spec: &GridSpec,
    params: &ParticleParams,
    state: &StateParams,
) {
    let survive = 1.0 - params.epsilon;
    if detections.is_empty() {
        for p in particles.iter_mut() {
            p.weight *= survive;
            p.age += 1;
        }
        return;
    }
    let pts: Vec<[f64; 2]> = detections.iter().map(|d| [d.x, d.y]).collect();
    let two_var = 2.0 * params.sigma_r * params.sigma_r;
    particles.par_iter_mut().for_each(|p| {
        let world = [p.x + spec.origin[0], p.y + spec.origin[1]];
        let n = nearest_index(&pts, world);
        let det = &detections[n];
        let d = (det.x - world[0]).hypot(det.y - world[1]);
        let u = line_of_sight(sensor_xy, [det.x, det.y]);
        let rp = p.vx * u[0] + p.vy * u[1];
        let fr = (-(rp - det.vr).powi(2) / two_var).exp();
        let fd = state.fd(d).min(1.0);
        let factor = match params.weight_update {
            WeightUpdate::Convex => fd * fr + (1.0 - fd) * survive,
            WeightUpdate::Product => fd * fr * (1.0 - fd) * survive,
        };
        p.weight *= factor;
        p.age += 1;
    });
}

/// Resampling target for a population carrying `total_weight` dynamic mass.
pub fn resample_target(total_weight: f64, params: &ParticleParams) -> usize {
    let t = (total_weight * params.particles_per_mass).ceil();
    if t.is_finite() && t > 0.0 {
        (t as usize).min(params.n_max)
    } else {
        0
    }
}

/// Offspring count per particle for systematic resampling with pointer
/// offset `offset ∈ [0, 1)`.
pub fn systematic_counts(weights: &[f64], target: usize, offset: f64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut counts = vec![0; weights.len()];
    if !(total > 0.0) || target == 0 {
        return counts;
    }
    let step = total / target as f64;
    let mut pointer = offset * step;
    let mut cum = 0.0;
    let mut k = 0;
    for (n, &w) in weights.iter().enumerate() {
        cum += w;
        while k < target && pointer < cum {
            counts[n] += 1;
            k += 1;
            pointer = (offset + k as f64) * step;
        }
    }
    // Round-off can leave the last pointers just past the final sum.
    if k < target {
        if let Some(last) = weights.iter().rposition(|&w| w > 0.0) {
            counts[last] += target - k;
        }
    }
    counts
}

/// Systematic resampling with an explicit pointer offset. Output weights are
/// uniform and sum to the input total; ages are inherited.
pub fn resample_with_offset(particles: &[Particle], target: usize, offset: f64) -> Vec<Particle> {
    let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || target == 0 {
        return Vec::new();
    }
    let counts = systematic_counts(&weights, target, offset);
    let w = total / target as f64;
    let mut out = Vec::with_capacity(target);
    for (p, &c) in particles.iter().zip(&counts) {
        for _ in 0..c {
            out.push(Particle { weight: w, ..*p });
        }
    }
    out
}

pub fn resample(particles: &[Particle], target: usize, rng: &mut Rng) -> Vec<Particle> {
    let offset = rng.random::<f64>();
    resample_with_offset(particles, target, offset)
}

/// Adds Gaussian velocity jitter to every particle that shares its state with
/// its predecessor (all but the first copy of each resampled parent), then
/// clamps speeds to `v_max`.
pub fn jitter_duplicates(particles: &mut [Particle], sigma: f64, v_max: f64, rng: &mut Rng) {
    if sigma <= 0.0 {
        return;
    }
    let normal = rand_distr::Normal::new(0.0, sigma).expect("sigma > 0");
    for n in 1..particles.len() {
        let prev = particles[n - 1];
        let p = &mut particles[n];
        if p.x == prev.x && p.y == prev.y {
            p.vx += rng.sample(normal);
            p.vy += rng.sample(normal);
            let s = p.speed();
            if s > v_max {
                p.vx *= v_max / s;
                p.vy *= v_max / s;
            }
        }
    }
}

/// Linear motion over `dt`; particles leaving the window are culled.
pub fn predict_particles(particles: &mut Vec<Particle>, dt: f64, spec: &GridSpec) {
    particles.retain_mut(|p| {
        p.x += p.vx * dt;
        p.y += p.vy * dt;
        spec.contains_local(p.x, p.y)
    });
}

/// Flat cell index of a particle, if inside the window.
pub fn particle_cell(p: &Particle, spec: &GridSpec) -> Option<usize> {
    spec.local_to_cell(p.x, p.y).map(|(i, j)| spec.flat(i, j))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMotionStats {
    pub mean_velocity: Vec<[f64; 2]>,
    pub total_weight: Vec<f64>,
    pub particle_count: Vec<u32>,
    pub p_moving: Vec<f64>,
}

/// Weight-weighted mean velocity per cell and the motion probability of its
/// magnitude. Cells without particles have `p_moving = 0`.
pub fn cell_velocity_stats(particles: &[Particle], spec: &GridSpec, v_th: f64, k_v: f64) -> CellMotionStats {
    let n = spec.len();
    let mut sum_v = vec![[0.0f64; 2]; n];
    let mut plain_v = vec![[0.0f64; 2]; n];
    let mut total = vec![0.0; n];
    let mut count = vec![0u32; n];
    for p in particles {
        if let Some(k) = particle_cell(p, spec) {
            sum_v[k][0] += p.weight * p.vx;
            sum_v[k][1] += p.weight * p.vy;
            plain_v[k][0] += p.vx;
            plain_v[k][1] += p.vy;
            total[k] += p.weight;
            count[k] += 1;
        }
    }
    let mut mean = vec![[0.0; 2]; n];
    let mut p_moving = vec![0.0; n];
    for k in 0..n {
        if count[k] == 0 {
            continue;
        }
        mean[k] = if total[k] > 0.0 {
            [sum_v[k][0] / total[k], sum_v[k][1] / total[k]]
        } else {
            [plain_v[k][0] / count[k] as f64, plain_v[k][1] / count[k] as f64]
        };
        p_moving[k] = motion_probability(mean[k][0].hypot(mean[k][1]), v_th, k_v);
    }
    CellMotionStats {
        mean_velocity: mean,
        total_weight: total,
        particle_count: count,
        p_moving,
    }
}
