//! Run configuration: one JSON document covering data generation, the
//! model and training. Missing keys take defaults; command-line flags
//! override file values.
use std::path::Path;

use anyhow::{bail, Context};
use ngi_core::network::ModelConfig;
use ngi_core::scenegen::{RenderConfig, SceneRules, ViewFilterConfig};
use ngi_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub vfov_deg: f64,
    pub render: RenderConfig,
    pub scenes: SceneRules,
    pub filter: ViewFilterConfig,
    /// Viewpoints tried per frame before giving up.
    pub max_view_attempts: usize,
    /// Viewpoints tried in one scene before a new scene is drawn.
    pub views_per_scene: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            width: 128,
            height: 128,
            frames: 200,
            seed: 1,
            vfov_deg: 60.0,
            render: RenderConfig::default(),
            scenes: SceneRules::default(),
            filter: ViewFilterConfig::default(),
            max_view_attempts: 1000,
            views_per_scene: 20,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let d = &self.data;
        if d.width == 0 || d.height == 0 {
            bail!("resolution must be positive");
        }
        if d.views_per_scene == 0 || d.max_view_attempts == 0 {
            bail!("view attempt limits must be positive");
        }
        if d.render.spp == 0 {
            bail!("spp must be positive");
        }
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_documents_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"data": {"frames": 3}, "train": {"epochs": 2}}"#).unwrap();
        assert_eq!(c.data.frames, 3);
        assert_eq!(c.data.width, 128);
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.model, ModelConfig::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_value(c.echo()).unwrap();
        assert_eq!(back, c);
    }
}
