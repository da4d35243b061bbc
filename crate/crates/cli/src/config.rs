//! Flat TOML run configuration. Command-line flags override every key.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use crate::failure::Failure;

pub const CONFIG_ENV: &str = "SAFEROUTE_CONFIG";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub stations: Option<PathBuf>,
    pub incidents: Option<PathBuf>,
    pub radius_km: Option<f64>,
    pub bucket: Option<String>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub hidden_size: Option<usize>,
    pub window: Option<usize>,
    pub learning_rate: Option<f64>,
    pub init_scale: Option<f64>,
    pub gru_bias: Option<bool>,
    pub seed: Option<u64>,
    pub engine: Option<String>,
    pub episodes: Option<usize>,
    pub safety_model: Option<String>,
    pub safety_mode: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::data(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        // relative data paths are resolved against the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.stations, &mut cfg.incidents].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(Failure::data(format!("config {}: file {} does not exist", path.display(), p.display())));
            }
        }
        Ok(cfg)
    }
}
