//! Experiment configuration: a single TOML document with a strict schema —
//! unknown keys are errors, because a typo in an epsilon list silently
//! destroys an experiment.

use super::HarnessError;
use crate::models::ModelKind;
use crate::noise::{ChannelKind, InsertAfter, Shots};
use crate::robust::AttackConfig;
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Clean,
    Adversarial,
    QuantumNoise,
    LipschitzTrajectory,
    Generalization,
    LossLandscape,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Clean => "clean",
            Scenario::Adversarial => "adversarial",
            Scenario::QuantumNoise => "quantum_noise",
            Scenario::LipschitzTrajectory => "lipschitz_trajectory",
            Scenario::Generalization => "generalization",
            Scenario::LossLandscape => "loss_landscape",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    pub fn sample_shape(&self) -> (usize, usize, usize) {
        match self {
            DatasetKind::Mnist => (28, 28, 1),
            DatasetKind::Cifar10 => (32, 32, 3),
        }
    }
}

fn default_p_grid() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0]
}

fn default_shots_grid() -> Vec<Shots> {
    vec![Shots::Exact, Shots::Count(1024)]
}

/// Noise-sweep axes for the quantum-noise scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub channels: Vec<ChannelKind>,
    #[serde(default = "default_p_grid")]
    pub p_grid: Vec<f64>,
    #[serde(default = "default_shots_grid")]
    pub shots_grid: Vec<Shots>,
    #[serde(default)]
    pub insert_after: InsertAfter,
    /// Cap on evaluation samples (defaults to the whole test split).
    #[serde(default)]
    pub eval_n: Option<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            channels: vec![ChannelKind::Depolarizing],
            p_grid: default_p_grid(),
            shots_grid: default_shots_grid(),
            insert_after: InsertAfter::default(),
            eval_n: None,
        }
    }
}

fn default_train_n() -> usize {
    500
}

fn default_landscape_grid() -> usize {
    21
}

fn default_landscape_radius() -> f64 {
    1.0
}

fn default_gen_seeds() -> usize {
    3
}

/// Everything one experiment needs. `out_dir` and `data_root` are workspace
/// locations, not semantics: they are excluded from the config hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub model: ModelKind,
    pub dataset: DatasetKind,
    /// Binary class pair (original dataset labels).
    pub pair: (u8, u8),
    #[serde(default = "default_train_n")]
    pub train_n: usize,
    /// Training-set sizes for the generalization scenario.
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default = "default_gen_seeds")]
    pub gen_seeds_per_size: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub attacks: Vec<AttackConfig>,
    #[serde(default)]
    pub noise: SweepSpec,
    #[serde(default = "default_landscape_grid")]
    pub landscape_grid: usize,
    #[serde(default = "default_landscape_radius")]
    pub landscape_radius: f64,
    /// Master seed; expands deterministically into per-stage seeds.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data_root: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))
}

/// Hash of the semantic configuration: canonical JSON (sorted keys) of every
/// result-affecting field. Location fields do not participate, so moving an
/// output directory never invalidates existing records.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut semantic = cfg.clone();
    semantic.out_dir = None;
    semantic.data_root = None;
    let value = serde_json::to_value(&semantic).expect("config serializes");
    let canonical = canonical_json(&value);
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the fields that determine the trained parameters (model, data
/// selection, training hyperparameters and master seed). Scenarios that
/// share these reuse one checkpoint instead of retraining identical weights.
pub fn train_hash(cfg: &ExperimentConfig) -> String {
    let value = serde_json::json!({
        "model": cfg.model,
        "dataset": cfg.dataset,
        "pair": cfg.pair,
        "train_n": cfg.train_n,
        "train": cfg.train,
        "seed": cfg.seed,
    });
    let canonical = canonical_json(&value);
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn canonical_json(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", k, canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", inner.join(","))
        }
        serde_json::Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", inner.join(","))
        }
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::AttackMethod;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            scenario: Scenario::Clean,
            model: ModelKind::Qcnn,
            dataset: DatasetKind::Mnist,
            pair: (1, 7),
            train_n: 500,
            sizes: vec![],
            gen_seeds_per_size: 3,
            train: TrainConfig::default(),
            attacks: vec![],
            noise: SweepSpec::default(),
            landscape_grid: 21,
            landscape_radius: 1.0,
            seed: 7,
            out_dir: None,
            data_root: None,
        }
    }

    #[test]
    fn hash_ignores_locations_but_not_semantics() {
        let a = base();
        let mut b = base();
        b.out_dir = Some(PathBuf::from("/somewhere/else"));
        assert_eq!(config_hash(&a), config_hash(&b));
        let mut c = base();
        c.seed = 8;
        assert_ne!(config_hash(&a), config_hash(&c));
        let mut d = base();
        d.attacks
            .push(AttackConfig::new(AttackMethod::Apgd, 0.1));
        assert_ne!(config_hash(&a), config_hash(&d));
    }

    #[test]
    fn toml_roundtrip_and_unknown_key_rejection() {
        let text = r#"
scenario = "adversarial"
model = "qcnn"
dataset = "mnist"
pair = [1, 7]
seed = 42

[train]
epochs = 10
learning_rate = 0.05

[[attacks]]
method = "apgd"
epsilon = 0.1
"#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.scenario, Scenario::Adversarial);
        assert_eq!(cfg.attacks.len(), 1);
        assert_eq!(cfg.train.epochs, 10);

        let bad = format!("{text}\nunknown_key = 3\n");
        assert!(toml::from_str::<ExperimentConfig>(&bad).is_err());

        let bad_attack = r#"
scenario = "adversarial"
model = "qcnn"
dataset = "mnist"
pair = [1, 7]

[[attacks]]
method = "apgd"
epsilon = 0.1
epsilonn = 0.2
"#;
        assert!(toml::from_str::<ExperimentConfig>(bad_attack).is_err());
    }
}
