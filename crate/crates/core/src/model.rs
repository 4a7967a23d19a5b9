//! Grid, cell-state, particle and scan types.
//!
//! The grid is world-aligned and translates with the ego vehicle in whole-cell
//! steps. Cell `(i, j)` covers `[origin.x + i*c, origin.x + (i+1)*c)` by
//! `[origin.y + j*c, origin.y + (j+1)*c)`; `i` runs along x, `j` along y and the
//! backing storage is row-major in `j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the unknown state inside a [`CellState`].
pub const UNK: usize = 0;
pub const FREE: usize = 1;
pub const STATIC: usize = 2;
pub const DYN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum State {
    Unknown,
    Free,
    Static,
    Dynamic,
}

impl State {
    pub const ALL: [State; 4] = [State::Unknown, State::Free, State::Static, State::Dynamic];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            State::Unknown => "unknown",
            State::Free => "free",
            State::Static => "static",
            State::Dynamic => "dynamic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cell_size: f64,
    pub width_cells: usize,
    pub height_cells: usize,
    /// World coordinates of the outer corner of cell (0, 0).
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(cell_size: f64, width_cells: usize, height_cells: usize, origin: [f64; 2]) -> Result<Self> {
        let spec = Self {
            cell_size,
            width_cells,
            height_cells,
            origin,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec whose window is centered on `center`.
    pub fn centered_on(center: [f64; 2], cell_size: f64, width_cells: usize, height_cells: usize) -> Result<Self> {
        let origin = [
            center[0] - 0.5 * width_cells as f64 * cell_size,
            center[1] - 0.5 * height_cells as f64 * cell_size,
        ];
        Self::new(cell_size, width_cells, height_cells, origin)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::InvalidGrid(format!("cell_size must be positive, got {}", self.cell_size)));
        }
        if self.width_cells == 0 || self.height_cells == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be at least 1x1, got {}x{}",
                self.width_cells, self.height_cells
            )));
        }
        if !(self.origin[0].is_finite() && self.origin[1].is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width_cells * self.height_cells
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self) -> [f64; 2] {
        [
            self.width_cells as f64 * self.cell_size,
            self.height_cells as f64 * self.cell_size,
        ]
    }

    pub fn center(&self) -> [f64; 2] {
        let e = self.extent();
        [self.origin[0] + 0.5 * e[0], self.origin[1] + 0.5 * e[1]]
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        j * self.width_cells + i
    }

    #[inline]
    pub fn unflat(&self, k: usize) -> (usize, usize) {
        (k % self.width_cells, k / self.width_cells)
    }

    /// Containing cell of a world point; edges belong to the higher-index cell.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        self.local_to_cell(x - self.origin[0], y - self.origin[1])
    }

    /// Containing cell of a point given in the grid frame (relative to `origin`).
    pub fn local_to_cell(&self, lx: f64, ly: f64) -> Option<(usize, usize)> {
        let fi = (lx / self.cell_size).floor();
        let fj = (ly / self.cell_size).floor();
        if !(fi >= 0.0 && fj >= 0.0) {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        (i < self.width_cells && j < self.height_cells).then_some((i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell_size,
            self.origin[1] + (j as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn contains_local(&self, lx: f64, ly: f64) -> bool {
        let e = self.extent();
        lx >= 0.0 && ly >= 0.0 && lx < e[0] && ly < e[1]
    }
}

/// Probability over (unknown, free, static, dynamic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellState(pub [f64; 4]);

impl CellState {
    pub const UNKNOWN: CellState = CellState([1.0, 0.0, 0.0, 0.0]);
    pub const UNIFORM: CellState = CellState([0.25; 4]);

    pub fn new(p_unk: f64, p_free: f64, p_static: f64, p_dyn: f64) -> Self {
        Self([p_unk, p_free, p_static, p_dyn])
    }

    pub fn p_unk(&self) -> f64 {
        self.0[UNK]
    }
    pub fn p_free(&self) -> f64 {
        self.0[FREE]
    }
    pub fn p_static(&self) -> f64 {
        self.0[STATIC]
    }
    pub fn p_dyn(&self) -> f64 {
        self.0[DYN]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Rescales to unit sum. A zero (or non-finite) vector becomes uniform.
    pub fn normalized(self) -> Self {
        let s = self.sum();
        if s > 0.0 && s.is_finite() {
            Self(self.0.map(|p| p / s))
        } else {
            Self::UNIFORM
        }
    }

    /// Most probable state; ties go to the lower state index.
    pub fn argmax(&self) -> State {
        let mut best = 0;
        for k in 1..4 {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        State::ALL[best]
    }
}

impl Default for CellState {
    fn default() -> Self {
        Self::UNKNOWN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    /// `self ∘ local`: pose of `local` (given in this pose's frame) in the parent frame.
    pub fn compose(&self, local: &Pose) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        Pose {
            x: self.x + c * local.x - s * local.y,
            y: self.y + s * local.x + c * local.y,
            yaw: self.yaw + local.yaw,
        }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Grid-frame position (meters from the grid origin).
    pub x: f64,
    pub y: f64,
    /// World-frame velocity.
    pub vx: f64,
    pub vy: f64,
    pub weight: f64,
    pub age: u32,
}

impl Particle {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarDetection {
    pub x: f64,
    pub y: f64,
    /// Ego-motion-compensated range rate, positive when receding.
    pub vr: f64,
    pub rcs: f64,
}

impl RadarDetection {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vr.is_finite() && self.rcs.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub t: f64,
    pub sensor_id: String,
    pub ego_pose: Pose,
    pub detections: Vec<RadarDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub sensor_id: String,
    /// Mounting pose relative to the ego frame.
    pub mount_pose: Pose,
    pub max_range: f64,
    /// Half-angle of the azimuth field of view.
    pub azimuth_span: f64,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) {
            return Err(crate::error::param("max_range", format!("must be > 0, got {}", self.max_range)));
        }
        if !(self.azimuth_span > 0.0 && self.azimuth_span <= std::f64::consts::PI) {
            return Err(crate::error::param(
                "azimuth_span",
                format!("must lie in (0, pi], got {}", self.azimuth_span),
            ));
        }
        Ok(())
    }

    pub fn world_pose(&self, ego: &Pose) -> Pose {
        ego.compose(&self.mount_pose)
    }

    /// Forward long-range radar plus four corner radars on a passenger car.
    pub fn default_suite() -> Vec<SensorConfig> {
        use std::f64::consts::FRAC_PI_4;
        let deg = std::f64::consts::PI / 180.0;
        let corner = |id: &str, x: f64, y: f64, yaw: f64| SensorConfig {
            sensor_id: id.to_string(),
            mount_pose: Pose::new(x, y, yaw),
            max_range: 60.0,
            azimuth_span: 60.0 * deg,
        };
        vec![
            SensorConfig {
                sensor_id: "front".into(),
                mount_pose: Pose::new(3.8, 0.0, 0.0),
                max_range: 120.0,
                azimuth_span: 50.0 * deg,
            },
            corner("front_left", 3.6, 0.8, FRAC_PI_4),
            corner("front_right", 3.6, -0.8, -FRAC_PI_4),
            corner("rear_left", -0.9, 0.8, 3.0 * FRAC_PI_4),
            corner("rear_right", -0.9, -0.8, -3.0 * FRAC_PI_4),
        ]
    }
}

/// The persistent world model.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub spec: GridSpec,
    pub cells: Vec<CellState>,
    pub free_streak: Vec<u32>,
    pub static_streak: Vec<u32>,
    pub cycle: u64,
    /// Last ego position passed to [`GridMap::recenter`].
    pub ego_xy: [f64; 2],
    /// Part of the accumulated ego displacement not yet applied as a cell shift.
    pub ego_residual: [f64; 2],
}

impl GridMap {
    /// Pure-unknown grid; the ego is assumed to sit at the window center.
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.len();
        Ok(Self {
            spec,
            cells: vec![CellState::UNKNOWN; n],
            free_streak: vec![0; n],
            static_streak: vec![0; n],
            cycle: 0,
            ego_xy: spec.center(),
            ego_residual: [0.0; 2],
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.spec.width_cells, self.spec.height_cells)
    }

    pub fn cell(&self, i: usize, j: usize) -> &CellState {
        &self.cells[self.spec.flat(i, j)]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut CellState {
        let k = self.spec.flat(i, j);
        &mut self.cells[k]
    }

    /// Moves the window with the ego. Returns the applied shift in whole cells.
    ///
    /// The displacement since the previous call, plus the stored residual, is
    /// rounded to the nearest number of cells per axis; the remainder stays in
    /// `ego_residual`. Cells entering the window are pure unknown.
    pub fn recenter(&mut self, new_ego_xy: [f64; 2]) -> (i64, i64) {
        let c = self.spec.cell_size;
        let mut shift = [0i64; 2];
        for a in 0..2 {
            let total = new_ego_xy[a] - self.ego_xy[a] + self.ego_residual[a];
            let s = (total / c).round();
            shift[a] = s as i64;
            self.ego_residual[a] = total - s * c;
        }
        self.ego_xy = new_ego_xy;
        self.shift_cells(shift[0], shift[1]);
        (shift[0], shift[1])
    }

    fn shift_cells(&mut self, si: i64, sj: i64) {
        if si == 0 && sj == 0 {
            return;
        }
        let (w, h) = (self.spec.width_cells as i64, self.spec.height_cells as i64);
        let n = self.spec.len();
        let mut cells = vec![CellState::UNKNOWN; n];
        let mut fs = vec![0u32; n];
        let mut ss = vec![0u32; n];
        if si.abs() < w && sj.abs() < h {
            for j in 0..h {
                let oj = j + sj;
                if oj < 0 || oj >= h {
                    continue;
                }
                for i in 0..w {
                    let oi = i + si;
                    if oi < 0 || oi >= w {
                        continue;
                    }
                    let dst = (j * w + i) as usize;
                    let src = (oj * w + oi) as usize;
                    cells[dst] = self.cells[src];
                    fs[dst] = self.free_streak[src];
                    ss[dst] = self.static_streak[src];
                }
            }
        }
        self.cells = cells;
        self.free_streak = fs;
        self.static_streak = ss;
        self.spec.origin[0] += si as f64 * self.spec.cell_size;
        self.spec.origin[1] += sj as f64 * self.spec.cell_size;
    }

    /// Sum of each state's probability over all cells.
    pub fn state_mass(&self) -> [f64; 4] {
        let mut m = [0.0; 4];
        for c in &self.cells {
            for k in 0..4 {
                m[k] += c.0[k];
            }
        }
        m
    }
}

/// Translates grid-frame particle positions after a recenter shift so their
/// world positions are unchanged, then culls particles that left the window.
pub fn shift_particles(particles: &mut Vec<Particle>, shift: (i64, i64), spec: &GridSpec) {
    if shift == (0, 0) {
        return;
    }
    let dx = shift.0 as f64 * spec.cell_size;
    let dy = shift.1 as f64 * spec.cell_size;
    particles.retain_mut(|p| {
        p.x -= dx;
        p.y -= dy;
        spec.contains_local(p.x, p.y)
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(w: usize, h: usize) -> GridSpec {
        GridSpec::new(0.2, w, h, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn new_grid_is_pure_unknown() {
        let g = GridMap::new(spec(10, 10)).unwrap();
        assert_eq!(g.cells.len(), 100);
        assert!(g.cells.iter().all(|c| *c == CellState::UNKNOWN && c.sum() == 1.0));
        assert!(g.free_streak.iter().chain(&g.static_streak).all(|&s| s == 0));
        assert_eq!(g.cycle, 0);

        let g = GridMap::new(spec(1, 1)).unwrap();
        assert_eq!(g.cells, vec![CellState::UNKNOWN]);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(GridSpec::new(0.0, 10, 10, [0.0; 2]).is_err());
        assert!(GridSpec::new(-0.2, 10, 10, [0.0; 2]).is_err());
        assert!(GridSpec::new(0.2, 0, 10, [0.0; 2]).is_err());
        assert!(GridSpec::new(0.2, 10, 0, [0.0; 2]).is_err());
    }

    #[test]
    fn world_to_cell_edges() {
        let s = spec(10, 10);
        assert_eq!(s.world_to_cell(0.0, 0.0), Some((0, 0)));
        assert_eq!(s.world_to_cell(-0.01, 0.5), None);
        assert_eq!(s.world_to_cell(2.0, 0.5), None);
        assert_eq!(s.world_to_cell(1.0, 0.5), Some((5, 2)));
        assert_eq!(s.world_to_cell(0.5, 1.0), Some((2, 5)));
    }

    #[test]
    fn cell_center_round_trips() {
        let s = GridSpec::new(0.2, 7, 5, [-3.3, 12.1]).unwrap();
        for j in 0..5 {
            for i in 0..7 {
                let c = s.cell_center(i, j);
                assert_eq!(s.world_to_cell(c[0], c[1]), Some((i, j)));
            }
        }
    }

    fn marked(w: usize, h: usize) -> GridMap {
        let mut g = GridMap::new(spec(w, h)).unwrap();
        for k in 0..g.cells.len() {
            g.cells[k] = CellState::new(0.0, 0.0, 1.0 - k as f64 / 1000.0, k as f64 / 1000.0);
            g.free_streak[k] = k as u32;
        }
        g
    }

    #[test]
    fn recenter_identity() {
        let mut g = marked(5, 5);
        let before = g.clone();
        assert_eq!(g.recenter(g.ego_xy), (0, 0));
        assert_eq!(g, before);
    }

    #[test]
    fn recenter_one_cell_shifts_column() {
        let mut g = marked(5, 4);
        let before = g.clone();
        let ego = g.ego_xy;
        assert_eq!(g.recenter([ego[0] + 0.2, ego[1]]), (1, 0));
        for j in 0..4 {
            for i in 0..4 {
                assert_eq!(g.cell(i, j), before.cell(i + 1, j));
            }
            assert_eq!(*g.cell(4, j), CellState::UNKNOWN);
            assert_eq!(g.free_streak[g.spec.flat(4, j)], 0);
        }
        assert!((g.spec.origin[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn recenter_accumulates_residual() {
        let mut g = GridMap::new(spec(20, 20)).unwrap();
        let e0 = g.ego_xy;
        let s1 = g.recenter([e0[0] + 0.3, e0[1]]);
        let s2 = g.recenter([e0[0] + 0.6, e0[1]]);
        assert_eq!(s1.0 + s2.0, 3);
        assert!(g.ego_residual[0].abs() < 1e-12);
        for s in [s1, s2] {
            assert_eq!(s.1, 0);
        }

        // Quarter-meter cells avoid rounding ties: 1.2 -> 1 (+0.05), 1.4 -> 1 (+0.1), 1.6 -> 2 (-0.1).
        let mut g = GridMap::new(GridSpec::new(0.25, 20, 20, [0.0; 2]).unwrap()).unwrap();
        let e0 = g.ego_xy;
        let mut x = e0[0];
        let mut shifts = vec![];
        let mut residuals = vec![];
        for _ in 0..3 {
            x += 0.3;
            shifts.push(g.recenter([x, e0[1]]).0);
            residuals.push(g.ego_residual[0]);
        }
        assert_eq!(shifts, vec![1, 1, 2]);
        for (r, want) in residuals.iter().zip([0.05, 0.1, -0.1]) {
            assert!((r - want).abs() < 1e-12, "{r} vs {want}");
        }
    }

    #[test]
    fn full_shift_clears_grid() {
        let mut g = marked(5, 5);
        let e = g.ego_xy;
        g.recenter([e[0] + 100.0, e[1] - 100.0]);
        assert!(g.cells.iter().all(|c| *c == CellState::UNKNOWN));
        assert!(g.free_streak.iter().all(|&s| s == 0));
    }

    #[test]
    fn particles_keep_world_position() {
        let s = spec(10, 10);
        let mut ps = vec![
            Particle { x: 1.05, y: 1.05, vx: 0.0, vy: 0.0, weight: 1.0, age: 0 },
            Particle { x: 0.1, y: 1.0, vx: 0.0, vy: 0.0, weight: 1.0, age: 0 },
        ];
        let world_before = [ps[0].x + s.origin[0], ps[0].y + s.origin[1]];
        let mut moved = s;
        moved.origin[0] += 0.4;
        shift_particles(&mut ps, (2, 0), &moved);
        assert_eq!(ps.len(), 1);
        let world_after = [ps[0].x + moved.origin[0], ps[0].y + moved.origin[1]];
        assert!((world_after[0] - world_before[0]).abs() < 1e-12);
        assert!((world_after[1] - world_before[1]).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_lower_index_on_ties() {
        assert_eq!(CellState::new(0.0, 0.0, 0.5, 0.5).argmax(), State::Static);
        assert_eq!(CellState::new(0.1, 0.2, 0.3, 0.4).argmax(), State::Dynamic);
    }

    #[test]
    fn sensor_pose_composition() {
        let s = SensorConfig {
            sensor_id: "s".into(),
            mount_pose: Pose::new(1.0, 0.0, 0.5),
            max_range: 10.0,
            azimuth_span: 1.0,
        };
        let w = s.world_pose(&Pose::new(2.0, 3.0, std::f64::consts::FRAC_PI_2));
        assert!((w.x - 2.0).abs() < 1e-12 && (w.y - 4.0).abs() < 1e-12);
        assert!((w.yaw - (0.5 + std::f64::consts::FRAC_PI_2)).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn recenter_composes(a in -8i32..8, b in -8i32..8, c in -8i32..8, d in -8i32..8) {
                // Displacements in eighths of a cell (tie-free for quarter-cell rounding).
                let base = marked(12, 9);
                let q = 0.25 / 8.0;
                let (ax, ay) = (a as f64 * q * 3.0 + q * 0.5, b as f64 * q * 5.0 + q * 0.5);
                let (bx, by) = (c as f64 * q * 7.0, d as f64 * q * 3.0);
                let mk = || {
                    let mut g = base.clone();
                    g.spec.cell_size = 0.25;
                    g.ego_xy = [0.0, 0.0];
                    g
                };
                let mut two = mk();
                two.recenter([ax, ay]);
                two.recenter([ax + bx, ay + by]);
                let mut one = mk();
                one.recenter([ax + bx, ay + by]);
                for k in 0..one.cells.len() {
                    // Compare where both routes kept original content.
                    if one.cells[k] != CellState::UNKNOWN && two.cells[k] != CellState::UNKNOWN {
                        prop_assert_eq!(one.cells[k], two.cells[k]);
                        prop_assert_eq!(one.free_streak[k], two.free_streak[k]);
                    }
                }
                prop_assert!((two.spec.origin[0] - one.spec.origin[0]).abs() < 1e-9);
            }
        }
    }
}
