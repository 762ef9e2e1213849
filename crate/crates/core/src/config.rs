//! Server configuration file (JSON). Every field is optional.

use crate::cluster_graph::DEFAULT_ABBREVIATION_LEN;
use crate::force_layout::{Canvas, LayoutParams};
use crate::palette::Palette;
use crate::stroke_geometry::RenderMetrics;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub layout: LayoutParams,
    pub palette: Palette,
    pub canvas: Canvas,
    pub layout_seed: u64,
    /// Steps run right after a clustering session is opened or recovered.
    pub settle_steps: usize,
    /// Steps advanced on each layout poll.
    pub steps_per_poll: usize,
    pub abbreviation_len: usize,
    pub render: RenderMetrics,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            layout: LayoutParams::default(),
            palette: Palette::default(),
            canvas: Canvas::default(),
            layout_seed: 0,
            settle_steps: 300,
            steps_per_poll: 5,
            abbreviation_len: DEFAULT_ABBREVIATION_LEN,
            render: RenderMetrics::default(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Config =
            serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.layout
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.canvas.width > 0.0 && self.canvas.height > 0.0) {
            return Err(ConfigError::Invalid(
                "canvas dimensions must be positive".into(),
            ));
        }
        if self.palette.base_len() == 0 {
            return Err(ConfigError::Invalid(
                "palette must list at least one color".into(),
            ));
        }
        if !(self.render.row_height > 0.0 && self.render.depth_step > 0.0) {
            return Err(ConfigError::Invalid(
                "render metrics must be positive".into(),
            ));
        }
        Ok(())
    }
}
