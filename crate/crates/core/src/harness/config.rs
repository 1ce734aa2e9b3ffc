//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ao::{AoOptions, AoPriors, ThresholdSchedule};
use crate::channel::DopplerSpec;
use crate::constellation::ConstellationSpec;
use crate::error::{Error, Result};
use crate::gamp::{EmOptions, GampOptions, ScatterPrior, SymbolPrior};
use crate::scene::{build_geometry, RoiConfig, RoiGeometry, ScatterDraw, SceneSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub carrier_hz: f64,
    pub vehicle_scattering: f64,
    /// Symbol duration in seconds, used by the Doppler impairment.
    pub symbol_duration: f64,
    /// Rotate moving vehicles' channels when synthesizing measurements.
    pub doppler: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { carrier_hz: 30e9, vehicle_scattering: 1.0, symbol_duration: 1.0 / 30_000.0, doppler: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub constellation: ConstellationSpec,
    pub scattering: ScatterDraw,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { constellation: ConstellationSpec::Qpsk, scattering: ScatterDraw::Unit }
    }
}

/// Sweep axes. Every combination is one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub snr_db: Vec<f64>,
    pub target_density: Vec<f64>,
    pub n_vehicles: Vec<usize>,
    /// Mean vehicle speed in m/s; speeds are drawn uniformly on `[0, 2v]`.
    pub speed: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { snr_db: vec![0.0, 10.0, 20.0, 30.0], target_density: vec![0.1], n_vehicles: vec![4], speed: vec![0.0] }
    }
}

/// Prior shapes; sparsities come from the grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub symbol_std_dev: f64,
    pub scatter_mean: f64,
    pub scatter_std_dev: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { symbol_std_dev: 0.1, scatter_mean: 1.0, scatter_std_dev: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoConfig {
    pub max_outer_iters: usize,
    pub epsilon_margin: f64,
    pub patience: usize,
    pub hold_on_rise: bool,
    pub em: bool,
    pub adapt_sparsity: bool,
    pub noise_floor: f64,
}

impl Default for AoConfig {
    fn default() -> Self {
        let d = AoOptions::default();
        AoConfig {
            max_outer_iters: d.max_outer_iters,
            epsilon_margin: d.epsilon_margin,
            patience: d.patience,
            hold_on_rise: d.hold_on_rise,
            em: d.em,
            adapt_sparsity: d.adapt_sparsity,
            noise_floor: d.noise_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub geometry: RoiConfig,
    pub channel: ChannelConfig,
    pub scene: SceneConfig,
    pub grid: GridConfig,
    pub priors: PriorConfig,
    pub ao: AoConfig,
    pub threshold: ThresholdSchedule,
    pub gamp: GampOptions,
    pub em: EmOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub snr_db: f64,
    pub target_density: f64,
    pub n_vehicles: usize,
    pub speed: f64,
}

impl ExperimentConfig {
    /// 12 m ROI, 6×6 positioning and 8×8 sensing pixels, 30 BSs, 100 trials.
    pub fn desk() -> Self {
        ExperimentConfig {
            seed: 1,
            trials: 100,
            output_dir: PathBuf::from("out"),
            threads: None,
            geometry: RoiConfig::desk_default(),
            channel: ChannelConfig::default(),
            scene: SceneConfig::default(),
            grid: GridConfig::default(),
            priors: PriorConfig::default(),
            ao: AoConfig::default(),
            threshold: ThresholdSchedule::default(),
            gamp: GampOptions::default(),
            em: EmOptions::default(),
        }
    }

    /// 15 m ROI, 10×10 positioning and 15×15 sensing pixels, 50 BSs.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            geometry: RoiConfig::full_scale(),
            grid: GridConfig { n_vehicles: vec![10], ..GridConfig::default() },
            ..Self::desk()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map_or_else(|| "<file>".to_string(), |s| span_location(text, s.start));
            Error::config(field, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<serialize>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::Config { field: format!("{}:{field}", path.display()), message },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        let g = &self.grid;
        for (name, empty) in [
            ("grid.snr_db", g.snr_db.is_empty()),
            ("grid.target_density", g.target_density.is_empty()),
            ("grid.n_vehicles", g.n_vehicles.is_empty()),
            ("grid.speed", g.speed.is_empty()),
        ] {
            if empty {
                return Err(Error::config(name, "grid axis must not be empty"));
            }
        }
        if g.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::config("grid.snr_db", "SNR must be finite or +inf"));
        }
        if g.target_density.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::config("grid.target_density", "densities must lie in [0, 1]"));
        }
        if g.speed.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::config("grid.speed", "speeds must be finite and non-negative"));
        }
        let geometry = self.geometry()?;
        if let Some(&n) = g.n_vehicles.iter().find(|&&n| n > geometry.n_positioning()) {
            return Err(Error::config(
                "grid.n_vehicles",
                format!("{n} vehicles exceed the {} positioning pixels", geometry.n_positioning()),
            ));
        }
        let c = &self.channel;
        if !(c.carrier_hz > 0.0 && c.carrier_hz.is_finite()) {
            return Err(Error::config("channel.carrier_hz", "must be positive"));
        }
        if !(c.vehicle_scattering >= 0.0 && c.vehicle_scattering.is_finite()) {
            return Err(Error::config("channel.vehicle_scattering", "must be finite and non-negative"));
        }
        if !(c.symbol_duration > 0.0) {
            return Err(Error::config("channel.symbol_duration", "must be positive"));
        }
        let p = &self.priors;
        if !(p.symbol_std_dev > 0.0) {
            return Err(Error::config("priors.symbol_std_dev", "must be positive"));
        }
        if !(p.scatter_std_dev > 0.0) {
            return Err(Error::config("priors.scatter_std_dev", "must be positive"));
        }
        if !(0.0..=1.0).contains(&p.scatter_mean) {
            return Err(Error::config("priors.scatter_mean", "must lie in [0, 1]"));
        }
        if self.ao.max_outer_iters == 0 {
            return Err(Error::config("ao.max_outer_iters", "must be at least 1"));
        }
        if !(self.ao.epsilon_margin >= 0.0) {
            return Err(Error::config("ao.epsilon_margin", "must be non-negative"));
        }
        if !(self.ao.noise_floor > 0.0) {
            return Err(Error::config("ao.noise_floor", "must be positive"));
        }
        if !(self.gamp.damping > 0.0 && self.gamp.damping <= 1.0) {
            return Err(Error::config("gamp.damping", "must lie in (0, 1]"));
        }
        if self.gamp.max_iters == 0 {
            return Err(Error::config("gamp.max_iters", "must be at least 1"));
        }
        if !(self.em.min_std_dev > 0.0 && self.em.min_std_dev <= self.em.max_std_dev) {
            return Err(Error::config("em", "need 0 < min_std_dev <= max_std_dev"));
        }
        self.threshold.validate().map_err(|_| Error::config("threshold", "need 0 < start <= end < 1"))?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<RoiGeometry> {
        build_geometry(&self.geometry).map_err(|e| match e {
            Error::Config { field, message } => Error::config(format!("geometry.{field}"), message),
            Error::Invariant { message, .. } => Error::config("geometry", message),
            other => other,
        })
    }

    /// Cells in row-major order over (snr, density, vehicles, speed).
    pub fn cells(&self) -> Vec<Cell> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &snr_db in &g.snr_db {
            for &target_density in &g.target_density {
                for &n_vehicles in &g.n_vehicles {
                    for &speed in &g.speed {
                        out.push(Cell { index: out.len(), snr_db, target_density, n_vehicles, speed });
                    }
                }
            }
        }
        out
    }

    pub fn ao_options(&self) -> AoOptions {
        AoOptions {
            max_outer_iters: self.ao.max_outer_iters,
            epsilon_margin: self.ao.epsilon_margin,
            patience: self.ao.patience,
            hold_on_rise: self.ao.hold_on_rise,
            em: self.ao.em,
            adapt_sparsity: self.ao.adapt_sparsity,
            noise_floor: self.ao.noise_floor,
            constellation: self.scene.constellation,
            gamp: self.gamp,
            em_options: self.em,
        }
    }

    pub fn scene_spec(&self, cell: &Cell) -> SceneSpec {
        SceneSpec {
            n_vehicles: cell.n_vehicles,
            target_density: cell.target_density,
            constellation: self.scene.constellation,
            scattering: self.scene.scattering,
            max_speed: 2.0 * cell.speed,
        }
    }

    pub fn doppler(&self) -> DopplerSpec {
        DopplerSpec { symbol_duration: self.channel.symbol_duration, enabled: self.channel.doppler }
    }

    /// Priors for a cell, with sparsities set from its vehicle count and density.
    pub fn priors(&self, cell: &Cell, geometry: &RoiGeometry) -> Result<AoPriors> {
        let np = geometry.n_positioning() as f64;
        let ns = geometry.n_sensing() as f64;
        let symbol_sparsity = (cell.n_vehicles.max(1) as f64 / np).min(1.0);
        let scatter_sparsity = cell.target_density.max(1.0 / ns).min(1.0);
        Ok(AoPriors {
            symbol: SymbolPrior::for_constellation(self.scene.constellation, symbol_sparsity, self.priors.symbol_std_dev)?,
            scatter: ScatterPrior::new(scatter_sparsity, self.priors.scatter_mean, self.priors.scatter_std_dev)?,
        })
    }
}

fn span_location(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    format!("line {line}, column {col}")
}
