//! Per-cell measurement state vectors from classified cells and detection attributes.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::ism::{CellClass, MeasurementCells};
use crate::model::{CellState, GridMap, RadarDetection, Scan, DYN, FREE, STATIC, UNK};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateParams {
    /// Spread of the distance attenuation (meters).
    pub sigma_d: f64,
    /// Range-rate magnitude at which a detection is equally likely moving or not.
    pub v_th: f64,
    /// Slope of the motion logistic (m/s).
    pub k_v: f64,
    /// Use a peak-normalized distance kernel (`f_d(0) = 1`) instead of the density.
    pub fd_normalized: bool,
}

impl Default for StateParams {
    fn default() -> Self {
        Self {
            sigma_d: 1.0,
            v_th: 0.5,
            k_v: 0.1,
            fd_normalized: false,
        }
    }
}

impl StateParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_d", self.sigma_d), ("v_th", self.v_th), ("k_v", self.k_v)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Distance attenuation for this parameter set.
    pub fn fd(&self, d: f64) -> f64 {
        if self.fd_normalized {
            (-0.5 * (d / self.sigma_d).powi(2)).exp()
        } else {
            distance_density(d, self.sigma_d)
        }
    }
}

/// Zero-mean Gaussian density of the detection-to-cell distance.
pub fn distance_density(d: f64, sigma_d: f64) -> f64 {
    let z = d / sigma_d;
    INV_SQRT_2PI / sigma_d * (-0.5 * z * z).exp()
}

/// `1 - f_d(d)`, with `f_d` the unnormalized Gaussian density.
pub fn free_space_probability(d: f64, sigma_d: f64) -> Result<f64> {
    if !(sigma_d > 0.0) {
        return Err(param("sigma_d", format!("must be positive, got {sigma_d}")));
    }
    Ok(1.0 - distance_density(d, sigma_d))
}

/// Probability that a detection with range rate `vr` is moving.
pub fn motion_probability(vr: f64, v_th: f64, k_v: f64) -> f64 {
    1.0 / (1.0 + (-(vr.abs() - v_th) / k_v).exp())
}

/// Static and dynamic probability of an occupied cell at distance `d` from a
/// detection with range rate `vr`, blended with the cell's priors.
pub fn occupied_state_probs(d: f64, vr: f64, prior_static: f64, prior_dyn: f64, params: &StateParams) -> (f64, f64) {
    let fd = params.fd(d);
    let moving = motion_probability(vr, params.v_th, params.k_v);
    let p_dyn = fd * moving + (1.0 - fd) * prior_dyn;
    let p_static = fd * (1.0 - moving) + (1.0 - fd) * prior_static;
    (p_static, p_dyn)
}

/// Min-max normalized RCS per detection. Degenerate scans (one detection or
/// identical values) are fully trusted.
pub fn normalize_rcs(detections: &[RadarDetection]) -> Vec<f64> {
    let (lo, hi) = detections
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d.rcs), hi.max(d.rcs)));
    let span = hi - lo;
    detections
        .iter()
        .map(|d| if span > 0.0 { (d.rcs - lo) / span } else { 1.0 })
        .collect()
}

/// Blends a raw state vector toward 0.5 by `(1 - rcs')`. The result does not sum to one.
pub fn rcs_blend_raw(raw: [f64; 4], rcs_norm: f64) -> [f64; 4] {
    raw.map(|p| rcs_norm * p + (1.0 - rcs_norm) * 0.5)
}

/// [`rcs_blend_raw`] followed by renormalization.
pub fn rcs_blend(raw: [f64; 4], rcs_norm: f64) -> CellState {
    CellState(rcs_blend_raw(raw, rcs_norm)).normalized()
}

/// Measurement state for every cell touched by one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGrid {
    pub width: usize,
    pub height: usize,
    /// Untouched cells hold the uninformative uniform vector.
    pub states: Vec<CellState>,
    pub class: Vec<CellClass>,
    /// Governing detection per cell.
    pub det: Vec<Option<usize>>,
    /// Range rate of the governing detection (occupied cells; 0 elsewhere).
    pub vr: Vec<f64>,
    /// Normalized RCS of the governing detection (occupied cells; 0 elsewhere).
    pub rcs: Vec<f64>,
}

impl MeasurementGrid {
    pub fn uninformative(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            states: vec![CellState::UNIFORM; n],
            class: vec![CellClass::Untouched; n],
            det: vec![None; n],
            vr: vec![0.0; n],
            rcs: vec![0.0; n],
        }
    }

    pub fn is_touched(&self, k: usize) -> bool {
        self.class[k] != CellClass::Untouched
    }

    pub fn state(&self, i: usize, j: usize) -> CellState {
        self.states[j * self.width + i]
    }
}

pub fn build_measurement_grid(
    scan: &Scan,
    cells: &MeasurementCells,
    prior: &GridMap,
    params: &StateParams,
) -> Result<MeasurementGrid> {
    let (w, h) = cells.dims();
    if (w, h) != prior.dims() {
        return Err(Error::DimensionMismatch {
            expected: prior.dims(),
            got: (w, h),
        });
    }
    let rcs_norm = normalize_rcs(&scan.detections);
    let spec = &prior.spec;
    let mut out = MeasurementGrid::uninformative(w, h);

    for k in 0..w * h {
        let class = cells.class_at(k);
        if class == CellClass::Untouched {
            continue;
        }
        out.class[k] = class;
        let Some(n) = cells.nearest_det_at(k) else {
            // Unknown cell of an empty scan.
            out.states[k] = CellState::UNKNOWN;
            continue;
        };
        let det = &scan.detections[n];
        let (i, j) = spec.unflat(k);
        let c = spec.cell_center(i, j);
        let d = (det.x - c[0]).hypot(det.y - c[1]);
        let fd = params.fd(d);

        let mut raw = [0.0; 4];
        match class {
            CellClass::Free => raw[FREE] = 1.0 - fd,
            CellClass::Unknown => raw[UNK] = 1.0 - fd,
            CellClass::Occupied => {
                let p = &prior.cells[k];
                let (ps, pd) = occupied_state_probs(d, det.vr, p.0[STATIC], p.0[DYN], params);
                raw[STATIC] = ps;
                raw[DYN] = pd;
                out.vr[k] = det.vr;
                out.rcs[k] = rcs_norm[n];
            }
            CellClass::Untouched => unreachable!(),
        }
        out.det[k] = Some(n);
        out.states[k] = rcs_blend(raw, rcs_norm[n]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ism::{classify_cells_radar, IsmParams};
    use crate::model::{GridSpec, Pose, SensorConfig};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn free_space_values() {
        assert!(close(free_space_probability(0.0, 1.0).unwrap(), 0.601_058, 1e-6));
        assert!(close(free_space_probability(1.0, 1.0).unwrap(), 0.758_029, 1e-6));
        assert!(close(free_space_probability(100.0, 1.0).unwrap(), 1.0, 1e-12));
        assert!(free_space_probability(1.0, 0.0).is_err());
        assert!(free_space_probability(1.0, -1.0).is_err());
    }

    #[test]
    fn motion_values() {
        assert_eq!(motion_probability(0.5, 0.5, 0.1), 0.5);
        assert_eq!(motion_probability(-0.5, 0.5, 0.1), 0.5);
        assert!(close(motion_probability(0.0, 0.5, 0.1), 1.0 / (1.0 + 5f64.exp()), 1e-15));
        assert!(close(motion_probability(0.0, 0.5, 0.1), 0.006_693, 1e-6));
        assert!(close(motion_probability(10.0, 0.5, 0.1), 1.0, 1e-9));
    }

    #[test]
    fn occupied_values() {
        let p = StateParams::default();
        // Large range rate: P(v != 0) is 1 to within 1e-9.
        let (_, pd) = occupied_state_probs(0.0, 20.0, 0.0, 0.0, &p);
        assert!(close(pd, 0.398_942, 1e-6));
        let (ps, pd) = occupied_state_probs(1e6, 3.0, 0.2, 0.7, &p);
        assert!(close(ps, 0.2, 1e-15) && close(pd, 0.7, 1e-15));
        let (_, pd) = occupied_state_probs(1.0, 2.0, 0.0, 0.3, &p);
        assert!(close(pd, 0.469_380, 1e-6), "{pd}");
    }

    #[test]
    fn rcs_normalization() {
        let det = |rcs| RadarDetection { x: 0.0, y: 0.0, vr: 0.0, rcs };
        let r = normalize_rcs(&[det(-10.0), det(0.0), det(5.0)]);
        assert_eq!(r[0], 0.0);
        assert!(close(r[1], 2.0 / 3.0, 1e-15));
        assert_eq!(r[2], 1.0);
        assert_eq!(normalize_rcs(&[det(3.0)]), vec![1.0]);
        assert_eq!(normalize_rcs(&[det(3.0), det(3.0)]), vec![1.0, 1.0]);
        assert!(normalize_rcs(&[]).is_empty());
    }

    #[test]
    fn rcs_blend_extremes() {
        assert_eq!(rcs_blend([0.0, 0.9, 0.0, 0.0], 0.0), CellState::UNIFORM);
        let s = rcs_blend([0.0, 0.0, 0.1, 0.3], 1.0);
        assert!(close(s.p_static(), 0.25, 1e-15) && close(s.p_dyn(), 0.75, 1e-15));
    }

    fn setup(dets: Vec<RadarDetection>) -> (Scan, GridMap, MeasurementCells) {
        let spec = GridSpec::new(0.2, 60, 40, [0.0, -4.0]).unwrap();
        let grid = GridMap::new(spec).unwrap();
        let sensor = SensorConfig {
            sensor_id: "front".into(),
            mount_pose: Pose::default(),
            max_range: 30.0,
            azimuth_span: 1.0,
        };
        let scan = Scan {
            t: 0.0,
            sensor_id: "front".into(),
            ego_pose: Pose::default(),
            detections: dets,
        };
        let cells = classify_cells_radar(&scan, &spec, &sensor, &IsmParams::default());
        (scan, grid, cells)
    }

    #[test]
    fn occupied_cell_at_detection() {
        // Detection exactly at the center of cell (25, 20).
        let (scan, grid, cells) = setup(vec![RadarDetection { x: 5.1, y: 0.1, vr: 3.0, rcs: 1.0 }]);
        let m = build_measurement_grid(&scan, &cells, &grid, &StateParams::default()).unwrap();
        let s = m.state(25, 20);
        let fd0 = INV_SQRT_2PI;
        let moving = 1.0 / (1.0 + (-25f64).exp());
        let (raw_s, raw_d) = (fd0 * (1.0 - moving), fd0 * moving);
        assert!(close(s.p_static(), raw_s / (raw_s + raw_d), 1e-12));
        assert!(close(s.p_dyn(), raw_d / (raw_s + raw_d), 1e-12));
        assert!(s.p_dyn() > 0.999_999_999);
        assert_eq!(s.p_unk(), 0.0);
        assert_eq!(m.vr[grid.spec.flat(25, 20)], 3.0);
    }

    #[test]
    fn low_rcs_detection_is_uninformative() {
        let (scan, grid, cells) = setup(vec![
            RadarDetection { x: 5.1, y: 0.1, vr: 3.0, rcs: -20.0 },
            RadarDetection { x: 9.1, y: 2.1, vr: 0.0, rcs: 10.0 },
        ]);
        let m = build_measurement_grid(&scan, &cells, &grid, &StateParams::default()).unwrap();
        assert_eq!(m.state(25, 20), CellState::UNIFORM);
        assert!(m.state(45, 30).p_static() > 0.9);
    }

    #[test]
    fn empty_scan_unknown_cells_are_pure_unknown() {
        let (scan, grid, cells) = setup(vec![]);
        let m = build_measurement_grid(&scan, &cells, &grid, &StateParams::default()).unwrap();
        let mut touched = 0;
        for k in 0..m.states.len() {
            if m.is_touched(k) {
                touched += 1;
                assert_eq!(m.states[k], CellState::UNKNOWN);
            } else {
                assert_eq!(m.states[k], CellState::UNIFORM);
            }
        }
        assert!(touched > 0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (scan, _, cells) = setup(vec![]);
        let other = GridMap::new(GridSpec::new(0.2, 10, 10, [0.0; 2]).unwrap()).unwrap();
        assert!(build_measurement_grid(&scan, &cells, &other, &StateParams::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn free_probability_increasing(a in 0.0f64..6.0, b in 0.0f64..6.0) {
                prop_assume!(a < b && b - a > 1e-6);
                prop_assert!(free_space_probability(a, 1.0).unwrap() < free_space_probability(b, 1.0).unwrap());
            }

            #[test]
            fn occupied_is_convex_combination(d in 0.0f64..5.0, vr in -5.0f64..5.0, ps in 0.0f64..1.0, pd in 0.0f64..1.0) {
                let p = StateParams::default();
                let moving = motion_probability(vr, p.v_th, p.k_v);
                let (s, dy) = occupied_state_probs(d, vr, ps, pd, &p);
                let between = |x: f64, a: f64, b: f64| x >= a.min(b) - 1e-12 && x <= a.max(b) + 1e-12;
                // f_d(d) <= 0.4, so each output is a convex mix of the measurement term and the prior.
                prop_assert!(between(s, 1.0 - moving, ps));
                prop_assert!(between(dy, moving, pd));
            }

            #[test]
            fn rcs_norm_in_unit_interval(v in proptest::collection::vec(-30.0f64..30.0, 2..20)) {
                let dets: Vec<_> = v.iter().map(|&rcs| RadarDetection { x: 0.0, y: 0.0, vr: 0.0, rcs }).collect();
                let r = normalize_rcs(&dets);
                prop_assert!(r.iter().all(|x| (0.0..=1.0).contains(x)));
                let distinct = v.iter().any(|x| *x != v[0]);
                if distinct {
                    prop_assert!(r.contains(&0.0) && r.contains(&1.0));
                }
            }

            #[test]
            fn blend_monotone_in_rcs(raw in proptest::array::uniform4(0.0f64..1.0), a in 0.0f64..1.0, b in 0.0f64..1.0) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let (bl, bh) = (rcs_blend_raw(raw, lo), rcs_blend_raw(raw, hi));
                for k in 0..4 {
                    // Higher rcs' moves the entry further from 0.5 toward the raw value.
                    prop_assert!((bh[k] - 0.5).abs() >= (bl[k] - 0.5).abs() - 1e-15);
                    prop_assert!((bh[k] - raw[k]).abs() <= (bl[k] - raw[k]).abs() + 1e-15);
                }
            }

            #[test]
            fn measurement_vectors_sum_to_one(
                dets in proptest::collection::vec((0.5f64..11.0, -3.5f64..3.5, -8.0f64..8.0, -20.0f64..20.0), 0..15)
            ) {
                let dets = dets.into_iter().map(|(x, y, vr, rcs)| RadarDetection { x, y, vr, rcs }).collect();
                let (scan, grid, cells) = setup(dets);
                let m = build_measurement_grid(&scan, &cells, &grid, &StateParams::default()).unwrap();
                for s in &m.states {
                    prop_assert!((s.sum() - 1.0).abs() <= 1e-9);
                }
            }
        }
    }
}
