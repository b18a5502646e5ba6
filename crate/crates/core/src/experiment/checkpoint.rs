//! Model checkpoints: one JSON document holding the experiment config, every
//! parameter as a named flat array, batch-norm running statistics, the seed,
//! and the feature normalization fitted at training time.
//!
//! Arrays go through serde_json's shortest round-trip float encoding, so a
//! save/load cycle restores every value bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FeatureStats;
use crate::model::{BmnetConfig, ModelParams};
use crate::tensor::{Rng, Tensor};

use super::config::ExperimentConfig;
use super::ExperimentError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BnStatsRecord {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub params: BTreeMap<String, Vec<f64>>,
    pub bn_stats: BTreeMap<String, BnStatsRecord>,
    pub seed: u64,
    /// Per-feature standardization fitted on the training split, so the
    /// checkpoint can score raw feature CSVs on its own.
    pub feature_stats: Option<FeatureStats>,
}

impl Checkpoint {
    pub fn from_model(
        config: &ExperimentConfig,
        params: &ModelParams,
        seed: u64,
        feature_stats: Option<FeatureStats>,
    ) -> Self {
        let mut arrays = BTreeMap::new();
        for (name, node, _) in params.trainable() {
            arrays.insert(name, node.value().data().to_vec());
        }
        let mut bn_stats = BTreeMap::new();
        for (name, block) in [("conv1", &params.conv1), ("conv2", &params.conv2)] {
            bn_stats.insert(
                name.to_string(),
                BnStatsRecord {
                    mean: block.stats.mean.borrow().clone(),
                    var: block.stats.var.borrow().clone(),
                },
            );
        }
        Self {
            config: config.clone(),
            params: arrays,
            bn_stats,
            seed,
            feature_stats,
        }
    }

    /// Rebuild the parameter set this checkpoint describes. Shapes come from
    /// the stored config; array lengths are validated against them.
    pub fn restore(&self) -> Result<ModelParams, ExperimentError> {
        let cfg: &BmnetConfig = &self.config.model;
        let params = ModelParams::init(cfg, &mut Rng::from_seed(self.seed))?;
        for (name, node, _) in params.trainable() {
            let stored = self.params.get(&name).ok_or_else(|| {
                ExperimentError::Config(format!("checkpoint missing parameter `{name}`"))
            })?;
            let shape = node.shape();
            if stored.len() != node.value().numel() {
                return Err(ExperimentError::Config(format!(
                    "checkpoint parameter `{name}` has {} values, shape {shape:?} needs {}",
                    stored.len(),
                    node.value().numel()
                )));
            }
            let tensor = Tensor::new(shape, stored.clone())
                .map_err(|e| ExperimentError::Config(format!("parameter `{name}`: {e}")))?;
            node.update_value(|t| *t = tensor);
            node.zero_grad();
        }
        for (name, block) in [("conv1", &params.conv1), ("conv2", &params.conv2)] {
            let rec = self.bn_stats.get(name).ok_or_else(|| {
                ExperimentError::Config(format!("checkpoint missing bn stats for `{name}`"))
            })?;
            let c = block.stats.mean.borrow().len();
            if rec.mean.len() != c || rec.var.len() != c {
                return Err(ExperimentError::Config(format!(
                    "checkpoint bn stats for `{name}` have wrong channel count"
                )));
            }
            *block.stats.mean.borrow_mut() = rec.mean.clone();
            *block.stats.var.borrow_mut() = rec.var.clone();
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<(), ExperimentError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Fresh leaf nodes for every stored array, used by tests to compare
    /// checkpoints without touching a live model.
    pub fn param_bits(&self) -> BTreeMap<String, Vec<u64>> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|x| x.to_bits()).collect()))
            .collect()
    }
}
