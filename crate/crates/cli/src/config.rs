use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use scenepose_core::labeler::LabelConfig;
use scenepose_core::physics::RestingSurface;
use scenepose_core::pipeline::PipelineConfig;
use scenepose_core::scene::{CameraRig, NoiseConfig, PlacementConfig};

/// Everything a run can be tuned with. Every section and key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scene: SceneSection,
    pub cameras: CameraRig,
    pub noise: NoiseSection,
    pub pipeline: PipelineConfig,
    pub labeler: LabelConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub scenes: usize,
    pub objects: usize,
    pub seed: u64,
    /// Half extents of the table top, meters.
    pub table: [f64; 2],
    pub placement: PlacementConfig,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            scenes: 1,
            objects: 3,
            seed: 0,
            table: [0.3, 0.3],
            placement: PlacementConfig {
                drop_extent: 0.05,
                ..Default::default()
            },
        }
    }
}

impl SceneSection {
    pub fn surface(&self) -> RestingSurface {
        RestingSurface::horizontal(0.0, self.table[0], self.table[1])
    }
}

/// Detector and sensor corruption applied to generated scenes; the noise
/// seed follows the scene seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub enabled: bool,
    pub jitter_px: f64,
    pub dropout: f64,
    pub depth_sigma: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            enabled: true,
            jitter_px: n.jitter_px,
            dropout: n.dropout,
            depth_sigma: n.depth_sigma,
        }
    }
}

impl NoiseSection {
    pub fn for_seed(&self, seed: u64) -> NoiseConfig {
        NoiseConfig {
            jitter_px: self.jitter_px,
            dropout: self.dropout,
            depth_sigma: self.depth_sigma,
            seed,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())).into())
    }
}
