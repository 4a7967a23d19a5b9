//! Bayesian fusion, state transition, dynamic-mass bookkeeping and the
//! per-scan pipeline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Mode, PipelineConfig};
use crate::correction::{correct_measurement_grid, detect_false_static, update_history_counters};
use crate::error::{Error, Result};
use crate::ism::{classify_cells_radar, classify_cells_raycast, CellClass};
use crate::measurement::build_measurement_grid;
use crate::model::{shift_particles, CellState, GridMap, Particle, RadarDetection, Scan, State, DYN};
use crate::particles::{
    cell_velocity_stats, jitter_duplicates, particle_cell, predict_particles, resample, resample_target,
    spawn_particles, update_weights,
};
use crate::rng::{self, Rng};

/// Four-state multiplicative Bayes update. Total conflict yields the uniform state.
pub fn bayes_fuse(prior: &CellState, meas: &CellState) -> CellState {
    let prod = [
        prior.0[0] * meas.0[0],
        prior.0[1] * meas.0[1],
        prior.0[2] * meas.0[2],
        prior.0[3] * meas.0[3],
    ];
    let z: f64 = prod.iter().sum();
    if z > 0.0 {
        CellState(prod.map(|p| p / z))
    } else {
        CellState::UNIFORM
    }
}

/// Raises every entry to at least `floor` and renormalizes.
pub fn floor_state(s: &CellState, floor: f64) -> CellState {
    if floor <= 0.0 {
        return *s;
    }
    CellState(s.0.map(|p| p.max(floor))).normalized()
}

/// Reads the unknown mass as ignorance: it is shared equally by all four
/// states, so a fully unknown cell becomes uniform.
pub fn spread_unknown(s: &CellState) -> CellState {
    let share = s.0[0] / 4.0;
    CellState([share, s.0[1] + share, s.0[2] + share, s.0[3] + share])
}

/// Column-stochastic prediction matrix for a cell whose tracked motion
/// probability is `p_moving`. Columns are indexed by the source state.
pub fn transition_matrix(p_moving: f64) -> [[f64; 4]; 4] {
    let p_stop = 1.0 - p_moving;
    [
        [1.0, 0.1, 0.1, 0.05],
        [0.0, 0.9, 0.0, 0.0],
        [0.0, 0.0, 0.9 * (1.0 - p_moving), 0.95 * p_stop],
        [0.0, 0.0, 0.9 * p_moving, 0.95 * (1.0 - p_stop)],
    ]
}

pub fn transition_states(cell: &CellState, p_moving: f64) -> CellState {
    let m = transition_matrix(p_moving);
    CellState(crate::correction::apply_matrix(&m, &cell.0)).normalized()
}

/// Sets the dynamic mass to the particle mass `m` held by the cell and
/// rescales the other states to fill the remainder. Mass of a cell with no
/// non-dynamic evidence goes to unknown.
pub fn set_dynamic_mass(cell: &CellState, m: f64) -> CellState {
    let m = m.clamp(0.0, 1.0);
    let rest = cell.0[0] + cell.0[1] + cell.0[2];
    if rest > 0.0 {
        let k = (1.0 - m) / rest;
        CellState([cell.0[0] * k, cell.0[1] * k, cell.0[2] * k, m])
    } else {
        CellState([1.0 - m, 0.0, 0.0, m])
    }
}

/// Rescales particle weights so they sum to `p_dyn`, keeping their ratios.
/// Equal shares when the current weights are all zero.
pub fn distribute_dynamic_mass(cell: &CellState, weights: &mut [f64]) {
    if weights.is_empty() {
        return;
    }
    let total: f64 = weights.iter().sum();
    let p_dyn = cell.p_dyn();
    if total > 0.0 {
        for w in weights.iter_mut() {
            *w *= p_dyn / total;
        }
    } else {
        let share = p_dyn / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = share);
    }
}

/// One record per processed scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub t: f64,
    pub sensor_id: String,
    pub cycle: u64,
    pub particle_count: usize,
    pub spawned: usize,
    pub flipped_cells: usize,
    /// Per-state probability summed over all cells.
    pub state_mass: [f64; 4],
    pub wall_time_ms: f64,
}

/// Persistent mapping state for one scan stream.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub grid: GridMap,
    pub particles: Vec<Particle>,
    rng: Rng,
    last_t: Option<f64>,
}

impl Pipeline {
    /// Pipeline whose window starts centered on `initial_ego`.
    pub fn new(config: PipelineConfig, initial_ego: [f64; 2]) -> Result<Self> {
        config.validate()?;
        let spec = crate::model::GridSpec::centered_on(
            initial_ego,
            config.grid.cell_size,
            config.grid.width_cells,
            config.grid.height_cells,
        )?;
        let rng = rng::stream(config.seed, rng::streams::PIPELINE);
        Ok(Self {
            grid: GridMap::new(spec)?,
            particles: Vec::new(),
            rng,
            last_t: None,
            config,
        })
    }

    pub fn last_time(&self) -> Option<f64> {
        self.last_t
    }

    /// Integrates one scan. See the crate docs for the stage order.
    pub fn step(&mut self, scan: &Scan) -> Result<FrameReport> {
        let started = Instant::now();
        if let Some(prev) = self.last_t {
            if !(scan.t > prev) {
                return Err(Error::NonMonotoneTime { previous: prev, current: scan.t });
            }
        }
        let sensor = self
            .config
            .sensor(&scan.sensor_id)
            .cloned()
            .ok_or_else(|| Error::UnknownSensor(scan.sensor_id.clone()))?;
        let dt = self.last_t.map_or(0.0, |prev| scan.t - prev);
        self.last_t = Some(scan.t);

        // 1. Follow the ego.
        let shift = self.grid.recenter(scan.ego_pose.xy());
        shift_particles(&mut self.particles, shift, &self.grid.spec);

        // 2. Prediction.
        let state = self.config.state;
        if dt > 0.0 {
            predict_particles(&mut self.particles, dt, &self.grid.spec);
            let stats = cell_velocity_stats(&self.particles, &self.grid.spec, state.v_th, state.k_v);
            for (c, &pm) in self.grid.cells.iter_mut().zip(&stats.p_moving) {
                *c = transition_states(c, pm);
            }
            if self.config.dynamic_mass_from_particles {
                let keep = 1.0 - transition_matrix(0.0)[0][DYN];
                for (c, &w) in self.grid.cells.iter_mut().zip(&stats.total_weight) {
                    *c = set_dynamic_mass(c, keep * w);
                }
            }
        }

        // 3-4. Measurement grid.
        let spec = self.grid.spec;
        let cells = match self.config.mode {
            Mode::RadarCentric => classify_cells_radar(scan, &spec, &sensor, &self.config.ism),
            Mode::HsbofRs => classify_cells_raycast(scan, &spec, &sensor),
        };
        let mut meas = build_measurement_grid(scan, &cells, &self.grid, &state)?;

        // 5. Correction and fusion.
        if self.config.mode == Mode::RadarCentric {
            let stats = cell_velocity_stats(&self.particles, &spec, state.v_th, state.k_v);
            let motion: Vec<Option<f64>> = stats
                .p_moving
                .iter()
                .zip(&stats.particle_count)
                .map(|(&p, &n)| (n > 0).then_some(p))
                .collect();
            correct_measurement_grid(&mut meas, &motion, &self.config.correction);
        }
        let floor = self.config.fusion_floor;
        for k in 0..self.grid.cells.len() {
            let class = meas.class[k];
            if class == CellClass::Untouched || (class == CellClass::Unknown && !self.config.fuse_unknown_cells) {
                continue;
            }
            let prior = if self.config.unknown_as_ignorance {
                spread_unknown(&self.grid.cells[k])
            } else {
                self.grid.cells[k]
            };
            let prior = floor_state(&prior, floor);
            let m = floor_state(&meas.states[k], floor);
            self.grid.cells[k] = bayes_fuse(&prior, &m);
        }
        let flipped = if self.config.mode == Mode::RadarCentric {
            update_history_counters(&mut self.grid, &self.config.correction);
            detect_false_static(&mut self.grid, &self.config.correction)
        } else {
            Vec::new()
        };

        // 6. Births in dynamic cells without particles, and in flipped cells.
        let sensor_xy = sensor.world_pose(&scan.ego_pose).xy();
        let spawned = self.spawn(scan, &cells, &flipped, sensor_xy);

        // 7. Weight update and resampling.
        let params = self.config.particles;
        update_weights(&mut self.particles, &scan.detections, sensor_xy, &spec, &params, &state);
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        let target = resample_target(total, &params);
        self.particles = resample(&self.particles, target, &mut self.rng);
        jitter_duplicates(&mut self.particles, params.resample_velocity_noise, params.v_max, &mut self.rng);

        // 8. Dynamic mass back onto particles, final normalization.
        self.distribute();
        for c in self.grid.cells.iter_mut() {
            *c = c.normalized();
        }
        self.grid.cycle += 1;

        Ok(FrameReport {
            t: scan.t,
            sensor_id: scan.sensor_id.clone(),
            cycle: self.grid.cycle,
            particle_count: self.particles.len(),
            spawned,
            flipped_cells: flipped.len(),
            state_mass: self.grid.state_mass(),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn spawn(
        &mut self,
        scan: &Scan,
        cells: &crate::ism::MeasurementCells,
        flipped: &[usize],
        sensor_xy: [f64; 2],
    ) -> usize {
        let spec = self.grid.spec;
        let mut occupied = vec![false; spec.len()];
        for p in &self.particles {
            if let Some(k) = particle_cell(p, &spec) {
                occupied[k] = true;
            }
        }
        let params = self.config.particles;
        let mut born = Vec::new();
        for k in 0..spec.len() {
            if occupied[k] || self.grid.cells[k].argmax() != State::Dynamic {
                continue;
            }
            if cells.class_at(k) != CellClass::Occupied {
                continue;
            }
            let Some(n) = cells.nearest_det_at(k) else { continue };
            let det = scan.detections[n];
            born.extend(spawn_particles(spec.unflat(k), &det, sensor_xy, &spec, &params, &mut self.rng));
        }
        for &k in flipped {
            let (i, j) = spec.unflat(k);
            let c = spec.cell_center(i, j);
            let det = RadarDetection { x: c[0], y: c[1], vr: 0.0, rcs: 0.0 };
            born.extend(spawn_particles((i, j), &det, sensor_xy, &spec, &params, &mut self.rng));
        }
        let room = params.n_max.saturating_sub(self.particles.len());
        born.truncate(room);
        let n = born.len();
        self.particles.extend(born);
        n
    }

    fn distribute(&mut self) {
        let spec = self.grid.spec;
        let n = spec.len();
        let mut total = vec![0.0; n];
        let mut count = vec![0usize; n];
        let keys: Vec<Option<usize>> = self.particles.iter().map(|p| particle_cell(p, &spec)).collect();
        for (p, k) in self.particles.iter().zip(&keys) {
            if let Some(k) = *k {
                total[k] += p.weight;
                count[k] += 1;
            }
        }
        for (p, k) in self.particles.iter_mut().zip(&keys) {
            let Some(k) = *k else { continue };
            let p_dyn = self.grid.cells[k].0[DYN];
            p.weight = if total[k] > 0.0 {
                p.weight * p_dyn / total[k]
            } else {
                p_dyn / count[k] as f64
            };
        }
    }
}
