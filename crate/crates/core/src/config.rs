//! Run configuration. Every field has a default, so an empty document is a
//! valid configuration; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::correction::CorrectionParams;
use crate::error::{param, Result};
use crate::eval::EvalParams;
use crate::ism::IsmParams;
use crate::measurement::StateParams;
use crate::model::{GridSpec, Pose, SensorConfig};
use crate::particles::ParticleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Radar field-of-view ISM with measurement correction and false-static detection.
    #[default]
    RadarCentric,
    /// Ray-casting ISM and range-rate state computation only.
    HsbofRs,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::RadarCentric => "radar-centric",
            Mode::HsbofRs => "hsbof-rs",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "radar-centric" => Ok(Mode::RadarCentric),
            "hsbof-rs" => Ok(Mode::HsbofRs),
            other => Err(format!("unknown mode `{other}` (expected radar-centric or hsbof-rs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub cell_size: f64,
    pub width_cells: usize,
    pub height_cells: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.2,
            width_cells: 300,
            height_cells: 300,
        }
    }
}

impl GridConfig {
    /// Window centered on the given ego position.
    pub fn spec_at(&self, ego: &Pose) -> Result<GridSpec> {
        GridSpec::centered_on(ego.xy(), self.cell_size, self.width_cells, self.height_cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Lower bound applied to each state of prior and measurement before fusion.
    pub fusion_floor: f64,
    /// Fuse measurement vectors of cells the ISM marked unknown.
    pub fuse_unknown_cells: bool,
    /// Share the prior's unknown mass over all states before fusion.
    pub unknown_as_ignorance: bool,
    /// After prediction, a cell's dynamic mass is the particle weight it holds.
    pub dynamic_mass_from_particles: bool,
    pub grid: GridConfig,
    pub ism: IsmParams,
    pub state: StateParams,
    pub correction: CorrectionParams,
    pub particles: ParticleParams,
    pub eval: EvalParams,
    pub sensors: Vec<SensorConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::RadarCentric,
            seed: 0,
            fusion_floor: 0.01,
            fuse_unknown_cells: false,
            unknown_as_ignorance: true,
            dynamic_mass_from_particles: true,
            grid: GridConfig::default(),
            ism: IsmParams::default(),
            state: StateParams::default(),
            correction: CorrectionParams::default(),
            particles: ParticleParams::default(),
            eval: EvalParams::default(),
            sensors: SensorConfig::default_suite(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.grid.cell_size, self.grid.width_cells, self.grid.height_cells, [0.0; 2])?;
        if !(0.0..0.25).contains(&self.fusion_floor) {
            return Err(param("fusion_floor", format!("must lie in [0, 0.25), got {}", self.fusion_floor)));
        }
        self.ism.validate()?;
        self.state.validate()?;
        self.correction.validate()?;
        self.particles.validate()?;
        self.eval.validate()?;
        if self.sensors.is_empty() {
            return Err(param("sensors", "at least one sensor is required"));
        }
        for s in &self.sensors {
            s.validate()?;
        }
        Ok(())
    }

    pub fn sensor(&self, id: &str) -> Option<&SensorConfig> {
        self.sensors.iter().find(|s| s.sensor_id == id)
    }
}
