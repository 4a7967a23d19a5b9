//! Radar-specific corrections: measurement correction against the tracked
//! velocity field, and false-static detection from free-space history.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::ism::CellClass;
use crate::measurement::MeasurementGrid;
use crate::model::{CellState, GridMap, State, DYN, FREE, STATIC};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionParams {
    /// Share of static measurement mass moved to dynamic in moving cells.
    pub s1: f64,
    /// Share of dynamic measurement mass moved to static in still cells.
    pub d1: f64,
    pub t_static: u32,
    pub t_free: u32,
    /// Minimum free probability for a cycle to count toward the free streak.
    pub p_free_conf: f64,
    /// Also correct cells that hold no particles, treating them as still.
    pub correct_untracked: bool,
    /// Correct only cells classified occupied; free and unknown cells keep
    /// their measurement vectors.
    pub correct_occupied_only: bool,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        Self {
            s1: 0.5,
            d1: 0.5,
            t_static: 4,
            t_free: 4,
            p_free_conf: 0.9,
            correct_untracked: false,
            correct_occupied_only: true,
        }
    }
}

impl CorrectionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("s1", self.s1), ("d1", self.d1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(param(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if self.t_static < 1 {
            return Err(param("t_static", "must be >= 1"));
        }
        if self.t_free < 1 {
            return Err(param("t_free", "must be >= 1"));
        }
        if !(self.p_free_conf > 0.5 && self.p_free_conf <= 1.0) {
            return Err(param("p_free_conf", format!("must lie in (0.5, 1], got {}", self.p_free_conf)));
        }
        Ok(())
    }
}

/// Column-oriented correction matrix: `out = M · state`.
pub fn correction_matrix(p_moving: f64, s1: f64, d1: f64) -> [[f64; 4]; 4] {
    let p_still = 1.0 - p_moving;
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0 - s1 * p_moving, d1 * p_still],
        [0.0, 0.0, s1 * p_moving, 1.0 - d1 * p_still],
    ]
}

pub fn apply_matrix(m: &[[f64; 4]; 4], v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (r, row) in m.iter().enumerate() {
        out[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

/// Corrects one measurement vector given the tracked motion probability of its cell.
pub fn correct_cell(meas: &CellState, p_moving: f64, params: &CorrectionParams) -> CellState {
    CellState(apply_matrix(&correction_matrix(p_moving, params.s1, params.d1), &meas.0)).normalized()
}

/// Shifts static/dynamic measurement mass toward the velocity field already
/// tracked in the grid. `cell_motion` holds one P(v≠0) per cell, `None` where
/// nothing is tracked; such cells are left as measured unless
/// `correct_untracked` is set, in which case they count as still.
pub fn correct_measurement_grid(meas: &mut MeasurementGrid, cell_motion: &[Option<f64>], params: &CorrectionParams) {
    debug_assert_eq!(cell_motion.len(), meas.states.len());
    for k in 0..meas.states.len() {
        if !meas.is_touched(k) || (params.correct_occupied_only && meas.class[k] != CellClass::Occupied) {
            continue;
        }
        let p = match cell_motion[k] {
            Some(p) => p,
            None if params.correct_untracked => 0.0,
            None => continue,
        };
        meas.states[k] = correct_cell(&meas.states[k], p, params);
    }
}

/// Advances the per-cell free and static streak counters by one cycle.
pub fn update_history_counters(grid: &mut GridMap, params: &CorrectionParams) {
    for k in 0..grid.cells.len() {
        let c = &grid.cells[k];
        match c.argmax() {
            State::Free if c.0[FREE] >= params.p_free_conf => {
                grid.free_streak[k] += 1;
                grid.static_streak[k] = 0;
            }
            // Free history stays frozen through a static run.
            State::Static => grid.static_streak[k] += 1,
            _ => {
                grid.free_streak[k] = 0;
                grid.static_streak[k] = 0;
            }
        }
    }
}

/// Static floor kept in a flipped cell.
pub const FLIP_STATIC_FLOOR: f64 = 0.01;

/// Turns static cells that appeared inside long-lived confident free space
/// into dynamic ones. Returns the flipped flat indices in ascending order.
pub fn detect_false_static(grid: &mut GridMap, params: &CorrectionParams) -> Vec<usize> {
    let mut flipped = Vec::new();
    for k in 0..grid.cells.len() {
        if grid.static_streak[k] > params.t_static && grid.free_streak[k] > params.t_free {
            let c = &mut grid.cells[k];
            c.0[DYN] += c.0[STATIC];
            c.0[STATIC] = FLIP_STATIC_FLOOR;
            *c = c.normalized();
            grid.static_streak[k] = 0;
            grid.free_streak[k] = 0;
            flipped.push(k);
        }
    }
    flipped
}
