//! Whole-system settings read from one `key = value` file.

use std::path::Path;

use crate::config::{ConfigError, KvConfig};
use crate::costmodel::CostConfig;
use crate::gating::GateConfig;
use crate::model::{ModelConfig, Task};
use crate::pipeline::ComputeModel;
use crate::service::ServiceConfig;

pub const BUNDLED_CONFIG: &str = include_str!("../configs/cascade.conf");

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub stt: ModelConfig,
    pub tts: ModelConfig,
    pub gate: GateConfig,
    pub compute: ComputeModel,
    pub listen: String,
    /// `None` derives the cap from the model configs.
    pub max_payload: Option<usize>,
    pub cost: CostConfig,
}

impl Settings {
    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        let model = |task: Task| {
            let mut section = kv.section(&format!("{}.", task.as_str()));
            section.set("task", task.as_str());
            ModelConfig::from_kv(&section)
        };
        let defaults = GateConfig::default();
        let gate = GateConfig::new(
            kv.get_or("stt_threshold", defaults.stt_threshold)?,
            kv.get_or("tts_threshold", defaults.tts_threshold)?,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let base = ComputeModel::default();
        let compute = ComputeModel {
            edge_macs_per_s: kv.get_or("edge_macs_per_s", base.edge_macs_per_s)?,
            cloud_macs_per_s: kv.get_or("cloud_macs_per_s", base.cloud_macs_per_s)?,
        };
        if !(compute.edge_macs_per_s > 0.0 && compute.cloud_macs_per_s > 0.0) {
            return Err(ConfigError::Invalid("compute rates must be positive".into()));
        }
        let max_payload = match kv.get_or::<usize>("max_payload", 0)? {
            0 => None,
            n => Some(n),
        };
        Ok(Self {
            stt: model(Task::Stt)?,
            tts: model(Task::Tts)?,
            gate,
            compute,
            listen: kv.get_str("listen").unwrap_or("127.0.0.1:7878").to_string(),
            max_payload,
            cost: CostConfig::from_kv(kv)?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_kv(&KvConfig::load(path)?)
    }

    pub fn bundled() -> Self {
        Self::from_kv(&KvConfig::parse(BUNDLED_CONFIG).expect("bundled config parses"))
            .expect("bundled config is valid")
    }

    pub fn model(&self, task: Task) -> &ModelConfig {
        match task {
            Task::Stt => &self.stt,
            Task::Tts => &self.tts,
        }
    }

    /// Overrides both model seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.stt.seed = seed;
        self.tts.seed = seed;
        self
    }

    pub fn service_config(&self) -> ServiceConfig {
        let mut cfg = ServiceConfig::bundled(self.listen.clone());
        cfg.models = vec![self.stt.clone(), self.tts.clone()];
        cfg.max_payload = self.max_payload.unwrap_or_else(|| {
            2 * cfg
                .models
                .iter()
                .map(crate::service::largest_features_frame)
                .max()
                .unwrap_or(0)
        });
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_matches_code_defaults() {
        let s = Settings::bundled();
        assert_eq!(s.stt, ModelConfig::bundled_stt());
        assert_eq!(s.tts, ModelConfig::bundled_tts());
        assert_eq!(s.gate, GateConfig::default());
        assert_eq!(s.compute, ComputeModel::default());
        assert_eq!(s.cost, CostConfig::default());
        assert_eq!(s.max_payload, None);
    }

    #[test]
    fn sections_and_seed() {
        let kv = KvConfig::parse("tts.n_dec_layers = 3\nstt_threshold = -1.5\nmax_payload = 900000\n").unwrap();
        let s = Settings::from_kv(&kv).unwrap().with_seed(99);
        assert_eq!(s.tts.n_dec_layers, 3);
        assert_eq!(s.stt.seed, 99);
        assert_eq!(s.gate.stt_threshold, -1.5);
        assert_eq!(s.service_config().max_payload, 900000);
        assert!(Settings::from_kv(&KvConfig::parse("stt_threshold = 1\n").unwrap()).is_err());
    }
}
