//! Run configuration: a plain-text `key = value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and repeated
//! keys are rejected. List values are comma separated (`stages = 32,64,128`).

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gdq::{IntensityModel, DEFAULT_TAU};
use crate::lam::{FilterTarget, DEFAULT_KERNEL_SIZE, DEFAULT_MU_OUT};
use crate::ram::BackboneConfig;
use crate::tcm::{RegionGrid, DEFAULT_BASE_CHANNELS};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "DARKSIGHT_SEED";

pub const DEFAULT_SEED: u64 = 7;

pub const KEYS: &[&str] = &[
    "seed",
    "mu_out",
    "u_p",
    "tau",
    "grid",
    "num_frames",
    "interval",
    "tcm_channels",
    "stages",
    "main_depths",
    "mlp_ratio",
    "num_classes",
    "target_class",
    "filter_target",
    "normalize_kernels",
    "intensity",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub mu_out: f64,
    pub u_p: usize,
    pub tau: f64,
    pub grid: usize,
    pub num_frames: usize,
    pub interval: usize,
    pub tcm_channels: usize,
    pub stages: Vec<usize>,
    pub main_depths: Vec<usize>,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    /// Label the cross-entropy term is evaluated against.
    pub target_class: usize,
    pub filter_target: FilterTarget,
    pub normalize_kernels: bool,
    pub intensity: IntensityModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        let backbone = BackboneConfig::default();
        RunConfig {
            seed: DEFAULT_SEED,
            mu_out: DEFAULT_MU_OUT,
            u_p: DEFAULT_KERNEL_SIZE,
            tau: DEFAULT_TAU,
            grid: RegionGrid::DEFAULT.rows,
            num_frames: 8,
            interval: 3,
            tcm_channels: DEFAULT_BASE_CHANNELS,
            stages: backbone.stage_channels,
            main_depths: backbone.main_depths,
            mlp_ratio: backbone.mlp_ratio,
            num_classes: backbone.num_classes,
            target_class: 0,
            filter_target: FilterTarget::Input,
            normalize_kernels: true,
            intensity: IntensityModel::RgbMean,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: `{key}` given twice", n + 1)));
            }
            seen.push(key);
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Assigns one key from its textual value. Does not validate the whole
    /// configuration; call [`RunConfig::validate`] afterwards.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "mu_out" => self.mu_out = parse_num(key, value)?,
            "u_p" => self.u_p = parse_num(key, value)?,
            "tau" => self.tau = parse_num(key, value)?,
            "grid" => self.grid = parse_num(key, value)?,
            "num_frames" => self.num_frames = parse_num(key, value)?,
            "interval" => self.interval = parse_num(key, value)?,
            "tcm_channels" => self.tcm_channels = parse_num(key, value)?,
            "stages" => self.stages = parse_list(key, value)?,
            "main_depths" => self.main_depths = parse_list(key, value)?,
            "mlp_ratio" => self.mlp_ratio = parse_num(key, value)?,
            "num_classes" => self.num_classes = parse_num(key, value)?,
            "target_class" => self.target_class = parse_num(key, value)?,
            "normalize_kernels" => self.normalize_kernels = parse_num(key, value)?,
            "filter_target" => {
                self.filter_target = match value {
                    "input" => FilterTarget::Input,
                    "gamma" => FilterTarget::Gamma,
                    _ => {
                        return Err(Error::Config(format!(
                            "`filter_target` must be input or gamma, got `{value}`"
                        )))
                    }
                }
            }
            "intensity" => {
                self.intensity = match value {
                    "rgb_mean" => IntensityModel::RgbMean,
                    "luma601" => IntensityModel::Luma601,
                    _ => {
                        return Err(Error::Config(format!(
                            "`intensity` must be rgb_mean or luma601, got `{value}`"
                        )))
                    }
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Replaces the seed with the value of [`SEED_ENV`] when given.
    pub fn with_seed_override(mut self, env_value: Option<&str>) -> Result<Self> {
        if let Some(v) = env_value {
            self.seed = parse_num(SEED_ENV, v.trim())?;
        }
        Ok(self)
    }

    pub fn backbone(&self) -> BackboneConfig {
        BackboneConfig {
            in_channels: self.tcm_channels,
            stage_channels: self.stages.clone(),
            main_depths: self.main_depths.clone(),
            mlp_ratio: self.mlp_ratio,
            num_classes: self.num_classes,
        }
    }

    pub fn region_grid(&self) -> RegionGrid {
        RegionGrid::square(self.grid)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.mu_out > 0.0 && self.mu_out < 1.0) {
            return bad(format!("mu_out must lie in (0, 1), got {}", self.mu_out));
        }
        if self.u_p == 0 || self.u_p.is_multiple_of(2) {
            return bad(format!("u_p must be odd, got {}", self.u_p));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return bad(format!("tau must be finite and > 0, got {}", self.tau));
        }
        if self.grid == 0 {
            return bad("grid must be >= 1".into());
        }
        // Three frames give two pair features, the least the temporal loss needs.
        if self.num_frames < 3 {
            return bad(format!("num_frames must be >= 3, got {}", self.num_frames));
        }
        if self.interval == 0 || self.tcm_channels == 0 {
            return bad("interval and tcm_channels must be >= 1".into());
        }
        if self.target_class >= self.num_classes {
            return bad(format!(
                "target_class {} out of range for {} classes",
                self.target_class, self.num_classes
            ));
        }
        self.backbone().validate().map_err(|e| Error::Config(e.to_string()))
    }
}
