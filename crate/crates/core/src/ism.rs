//! Inverse sensor models: which cells a scan marks unknown, free or occupied.
//!
//! Two models are provided. [`classify_cells_radar`] combines a disk-shaped
//! occupancy footprint per detection with sector-wise implicit free space.
//! [`classify_cells_raycast`] is the classic Bresenham baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::model::{GridSpec, Pose, Scan, SensorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsmParams {
    /// Angular width of one implicit free-space sector (radians).
    pub sector_width: f64,
    /// Radius around a detection whose cells are marked occupied (meters).
    pub occ_radius: f64,
    /// Reserved for Gaussian angular spreading of occupancy; unused by the sector model.
    pub angular_sigma: f64,
}

impl Default for IsmParams {
    fn default() -> Self {
        Self {
            sector_width: 2f64.to_radians(),
            occ_radius: 0.4,
            angular_sigma: 1f64.to_radians(),
        }
    }
}

impl IsmParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sector_width", self.sector_width),
            ("occ_radius", self.occ_radius),
            ("angular_sigma", self.angular_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellClass {
    Untouched = 0,
    Unknown = 1,
    Free = 2,
    Occupied = 3,
}

const NO_DET: u32 = u32::MAX;

/// Dense per-cell classification. Each cell carries exactly one class, so the
/// unknown/free/occupied sets are disjoint by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementCells {
    width: usize,
    height: usize,
    class: Vec<CellClass>,
    nearest: Vec<u32>,
}

impl MeasurementCells {
    pub fn empty(spec: &GridSpec) -> Self {
        Self {
            width: spec.width_cells,
            height: spec.height_cells,
            class: vec![CellClass::Untouched; spec.len()],
            nearest: vec![NO_DET; spec.len()],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn class_at(&self, k: usize) -> CellClass {
        self.class[k]
    }

    pub fn class(&self, i: usize, j: usize) -> CellClass {
        self.class[j * self.width + i]
    }

    /// Governing detection (index into the scan) of a flat cell index.
    pub fn nearest_det_at(&self, k: usize) -> Option<usize> {
        (self.nearest[k] != NO_DET).then_some(self.nearest[k] as usize)
    }

    pub fn nearest_det(&self, i: usize, j: usize) -> Option<usize> {
        self.nearest_det_at(j * self.width + i)
    }

    fn cells_of(&self, c: CellClass) -> Vec<(usize, usize)> {
        self.class
            .iter()
            .enumerate()
            .filter(|(_, &k)| k == c)
            .map(|(k, _)| (k % self.width, k / self.width))
            .collect()
    }

    pub fn c_unk(&self) -> Vec<(usize, usize)> {
        self.cells_of(CellClass::Unknown)
    }

    pub fn c_free(&self) -> Vec<(usize, usize)> {
        self.cells_of(CellClass::Free)
    }

    pub fn c_occ(&self) -> Vec<(usize, usize)> {
        self.cells_of(CellClass::Occupied)
    }

    /// Raises a cell's class; occupied beats free beats unknown.
    fn mark(&mut self, k: usize, c: CellClass) {
        if (c as u8) > (self.class[k] as u8) {
            self.class[k] = c;
        }
    }

    /// Assigns every touched cell the detection nearest to its center.
    fn assign_nearest(&mut self, spec: &GridSpec, scan: &Scan) {
        if scan.detections.is_empty() {
            return;
        }
        let dets: Vec<[f64; 2]> = scan.detections.iter().map(|d| [d.x, d.y]).collect();
        let w = self.width;
        let class = &self.class;
        self.nearest
            .par_chunks_mut(w)
            .enumerate()
            .for_each(|(j, row)| {
                for (i, slot) in row.iter_mut().enumerate() {
                    if class[j * w + i] == CellClass::Untouched {
                        continue;
                    }
                    let c = spec.cell_center(i, j);
                    *slot = nearest_index(&dets, c) as u32;
                }
            });
    }
}

pub(crate) fn nearest_index(points: &[[f64; 2]], q: [f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (n, p) in points.iter().enumerate() {
        let dx = p[0] - q[0];
        let dy = p[1] - q[1];
        let d = dx * dx + dy * dy;
        if d < best_d {
            best_d = d;
            best = n;
        }
    }
    best
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = a % two_pi;
    if a > std::f64::consts::PI {
        a -= two_pi;
    } else if a <= -std::f64::consts::PI {
        a += two_pi;
    }
    a
}

/// Range and bearing (relative to the boresight) of a world point seen from `pose`.
fn polar(pose: &Pose, x: f64, y: f64) -> (f64, f64) {
    let dx = x - pose.x;
    let dy = y - pose.y;
    (dx.hypot(dy), wrap_angle(dy.atan2(dx) - pose.yaw))
}

/// Index range of cells whose centers may lie within `radius` of `p`.
fn cell_window(spec: &GridSpec, p: [f64; 2], radius: f64) -> Option<(usize, usize, usize, usize)> {
    let c = spec.cell_size;
    let lo_i = ((p[0] - radius - spec.origin[0]) / c - 0.5).ceil().max(0.0);
    let hi_i = ((p[0] + radius - spec.origin[0]) / c - 0.5).floor();
    let lo_j = ((p[1] - radius - spec.origin[1]) / c - 0.5).ceil().max(0.0);
    let hi_j = ((p[1] + radius - spec.origin[1]) / c - 0.5).floor();
    if hi_i < 0.0 || hi_j < 0.0 || lo_i > hi_i || lo_j > hi_j {
        return None;
    }
    let hi_i = (hi_i as usize).min(spec.width_cells - 1);
    let hi_j = (hi_j as usize).min(spec.height_cells - 1);
    let (lo_i, lo_j) = (lo_i as usize, lo_j as usize);
    (lo_i < spec.width_cells && lo_j < spec.height_cells).then_some((lo_i, hi_i, lo_j, hi_j))
}

/// Marks every in-FOV cell unknown.
fn mark_fov(out: &mut MeasurementCells, spec: &GridSpec, pose: &Pose, sensor: &SensorConfig) {
    let Some((i0, i1, j0, j1)) = cell_window(spec, pose.xy(), sensor.max_range) else {
        return;
    };
    for j in j0..=j1 {
        for i in i0..=i1 {
            let c = spec.cell_center(i, j);
            let (r, b) = polar(pose, c[0], c[1]);
            if r <= sensor.max_range && b.abs() <= sensor.azimuth_span {
                out.mark(spec.flat(i, j), CellClass::Unknown);
            }
        }
    }
}

/// Combined radar field-of-view model.
///
/// Occupied cells are all cells whose center is within `occ_radius` of any
/// detection, inside the FOV or not. Each sector of the FOV that holds a
/// detection frees the cells radially closer than that sector's nearest
/// detection minus `occ_radius`. Sectors without detections stay unknown.
pub fn classify_cells_radar(scan: &Scan, spec: &GridSpec, sensor: &SensorConfig, params: &IsmParams) -> MeasurementCells {
    let pose = sensor.world_pose(&scan.ego_pose);
    let mut out = MeasurementCells::empty(spec);
    mark_fov(&mut out, spec, &pose, sensor);

    let span = sensor.azimuth_span;
    let n_sectors = ((2.0 * span) / params.sector_width).ceil().max(1.0) as usize;
    let sector_of = |bearing: f64| (((bearing + span) / params.sector_width).floor() as usize).min(n_sectors - 1);

    let mut nearest_range = vec![f64::INFINITY; n_sectors];
    for d in &scan.detections {
        let (r, b) = polar(&pose, d.x, d.y);
        if b.abs() <= span && r <= sensor.max_range {
            let s = sector_of(b);
            nearest_range[s] = nearest_range[s].min(r);
        }
    }

    if let Some((i0, i1, j0, j1)) = cell_window(spec, pose.xy(), sensor.max_range) {
        for j in j0..=j1 {
            for i in i0..=i1 {
                let k = spec.flat(i, j);
                if out.class[k] != CellClass::Unknown {
                    continue;
                }
                let c = spec.cell_center(i, j);
                let (r, b) = polar(&pose, c[0], c[1]);
                let limit = nearest_range[sector_of(b)];
                if limit.is_finite() && r < limit - params.occ_radius {
                    out.mark(k, CellClass::Free);
                }
            }
        }
    }

    let r2 = params.occ_radius * params.occ_radius;
    for d in &scan.detections {
        let Some((i0, i1, j0, j1)) = cell_window(spec, [d.x, d.y], params.occ_radius) else {
            continue;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                let c = spec.cell_center(i, j);
                let (dx, dy) = (c[0] - d.x, c[1] - d.y);
                if dx * dx + dy * dy <= r2 {
                    out.mark(spec.flat(i, j), CellClass::Occupied);
                }
            }
        }
    }

    out.assign_nearest(spec, scan);
    out
}

/// Integer cells on the Bresenham line from `a` to `b`, both inclusive.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

fn unbounded_cell(spec: &GridSpec, x: f64, y: f64) -> (i64, i64) {
    (
        ((x - spec.origin[0]) / spec.cell_size).floor() as i64,
        ((y - spec.origin[1]) / spec.cell_size).floor() as i64,
    )
}

fn in_grid(spec: &GridSpec, c: (i64, i64)) -> Option<usize> {
    (c.0 >= 0 && c.1 >= 0 && (c.0 as usize) < spec.width_cells && (c.1 as usize) < spec.height_cells)
        .then(|| spec.flat(c.0 as usize, c.1 as usize))
}

/// Ray-casting baseline: the cells on each sensor-to-detection line are free
/// (the detection cell excluded), the detection cell is occupied and the rest
/// of the field of view is unknown.
pub fn classify_cells_raycast(scan: &Scan, spec: &GridSpec, sensor: &SensorConfig) -> MeasurementCells {
    let pose = sensor.world_pose(&scan.ego_pose);
    let mut out = MeasurementCells::empty(spec);
    mark_fov(&mut out, spec, &pose, sensor);

    let origin = unbounded_cell(spec, pose.x, pose.y);
    for d in &scan.detections {
        let end = unbounded_cell(spec, d.x, d.y);
        let line = bresenham(origin, end);
        for &c in &line[..line.len() - 1] {
            if let Some(k) = in_grid(spec, c) {
                out.mark(k, CellClass::Free);
            }
        }
        if let Some(k) = in_grid(spec, end) {
            out.mark(k, CellClass::Occupied);
        }
    }

    out.assign_nearest(spec, scan);
    out
}
