//! Run configuration: a TOML file, overridden field by field from the command line.

use crate::error::{HmError, Result};
use crate::field::{GridLayout, StencilOrder, DEFAULT_HALF_WIDTH};
use crate::flow::FlowConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: f64,
    pub stencil: StencilOrder,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 129,
            half_width: DEFAULT_HALF_WIDTH,
            stencil: StencilOrder::default(),
        }
    }
}

/// Perturbation family for the Lojasiewicz scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub amplitudes: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Rows with `dist4pi` below `max(floor, floor_factor * final dist4pi)` sit on the
    /// discretization floor and are left out of the fit.
    pub floor: f64,
    pub floor_factor: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            amplitudes: vec![0.1],
            seeds: vec![1],
            floor: 0.0,
            floor_factor: 2.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub flow: FlowConfig,
    pub scan: ScanConfig,
    pub seed: u64,
    /// Run identifier used in snapshot names. Empty means derived from the config.
    pub run_id: String,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| HmError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text).map_err(|e| match e {
            HmError::InvalidConfig(m) => HmError::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        GridLayout::with_order(self.grid.n, self.grid.half_width, self.grid.stencil)?;
        self.flow.validate()?;
        if self.scan.amplitudes.is_empty() || self.scan.seeds.is_empty() {
            return Err(HmError::InvalidConfig("scan needs at least one amplitude and one seed".into()));
        }
        if self
            .scan
            .amplitudes
            .iter()
            .any(|a| !(a.is_finite() && *a > 0.0))
        {
            return Err(HmError::InvalidConfig("scan amplitudes must be > 0".into()));
        }
        if !(self.scan.floor >= 0.0 && self.scan.floor_factor >= 0.0) {
            return Err(HmError::InvalidConfig("scan.floor and scan.floor_factor must be >= 0".into()));
        }
        if !self
            .run_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        {
            return Err(HmError::InvalidConfig(format!(
                "run_id {:?} may only hold ASCII letters, digits, '_' and '.'",
                self.run_id
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
