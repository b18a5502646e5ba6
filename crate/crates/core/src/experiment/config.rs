//! Experiment configuration: everything needed to replay a run exactly.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SynthSpec, TaskBinding};
use crate::model::BmnetConfig;

fn default_threshold() -> f64 {
    0.5
}

/// Training-loop hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainParams {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.001,
            batch_size: 32,
            epochs: 100,
            seed: 42,
        }
    }
}

/// Validation strategy: stratified k-fold cross-validation or a single
/// stratified train/val/test holdout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum ValidationMode {
    Kfold { k: usize },
    Holdout { fractions: [f64; 3] },
}

/// Where the samples come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf },
    Synth { spec: SynthSpec },
}

/// A complete, serializable experiment description. A stored config replays
/// to identical results under the same binary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskBinding,
    pub model: BmnetConfig,
    pub train: TrainParams,
    pub validation: ValidationMode,
    pub data: DataSource,
    pub out_dir: PathBuf,
    #[serde(default = "default_threshold")]
    pub eval_threshold: f64,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON serialization; embedded in every output
    /// artifact so results can be traced back to the exact config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The ablation-table label of this model variant.
    pub fn method_name(&self) -> String {
        use crate::model::LossMode;
        let base = match self.model.loss_mode {
            LossMode::None => "Baseline",
            LossMode::Triplet => "Tri-loss",
            LossMode::Contrastive => "Con-loss",
        };
        if self.model.use_bilinear {
            if base == "Baseline" {
                "Baseline+BP".into()
            } else {
                format!("{base}+BP")
            }
        } else {
            base.into()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DiagnosticLabel;
    use crate::model::LossMode;

    fn config() -> ExperimentConfig {
        ExperimentConfig {
            task: TaskBinding::new(DiagnosticLabel::EMCI, DiagnosticLabel::LMCI).unwrap(),
            model: BmnetConfig::default(),
            train: TrainParams::default(),
            validation: ValidationMode::Kfold { k: 5 },
            data: DataSource::Synth {
                spec: SynthSpec {
                    regions: 90,
                    n_per_class: (30, 20),
                    shift: 1.0,
                    shift_regions: 10,
                    rho: 0.5,
                    block_size: 10,
                    hard_fraction: 0.0,
                    seed: 1,
                    labels: ("EMCI".into(), "LMCI".into()),
                },
            },
            out_dir: PathBuf::from("runs/test"),
            eval_threshold: 0.5,
        }
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = config();
        assert_eq!(a.digest(), a.digest());
        let mut b = config();
        b.train.seed = 43;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn config_json_round_trip() {
        let a = config();
        let json = serde_json::to_string_pretty(&a).unwrap();
        let b: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn method_names_follow_the_ablation_roster() {
        let mut c = config();
        let mut name = |bp: bool, mode: LossMode| {
            c.model.use_bilinear = bp;
            c.model.loss_mode = mode;
            c.method_name()
        };
        assert_eq!(name(false, LossMode::None), "Baseline");
        assert_eq!(name(true, LossMode::None), "Baseline+BP");
        assert_eq!(name(false, LossMode::Triplet), "Tri-loss");
        assert_eq!(name(true, LossMode::Triplet), "Tri-loss+BP");
        assert_eq!(name(false, LossMode::Contrastive), "Con-loss");
        assert_eq!(name(true, LossMode::Contrastive), "Con-loss+BP");
    }
}
