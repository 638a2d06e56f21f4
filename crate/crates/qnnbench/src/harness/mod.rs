//! Experiment orchestration: configuration files, scenario pipelines, the
//! append-only result store and report emission.

mod config;
mod report;
mod scenario;
mod store;

pub use config::{config_hash, load_config, train_hash, DatasetKind, ExperimentConfig, Scenario, SweepSpec};
pub use report::{emit_figure_csvs, parse_records_csv, records_to_csv, render_tables};
pub use scenario::{loss_landscape, run_scenario};
pub use store::RecordStore;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error(transparent)]
    Robust(#[from] crate::robust::RobustError),
    #[error(transparent)]
    Checkpoint(#[from] crate::models::checkpoint::CheckpointError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("store corruption: {0}")]
    Store(String),
    #[error(
        "determinism violation: record {key} recomputed to {new}, stored value {old}"
    )]
    Determinism { key: String, old: f64, new: f64 },
    #[error("no records matched")]
    NoRecords,
    #[error("landscape grid must be at least 2, got {0}")]
    BadGrid(usize),
}

/// One experiment outcome row. Append-only; exactly one metric per record,
/// with every coordinate needed to place it in a table or figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub revision: String,
    pub scenario: Scenario,
    pub metric: String,
    pub value: f64,
    #[serde(default)]
    pub coords: BTreeMap<String, serde_json::Value>,
    pub wall_ms: u64,
    pub seed: u64,
}

impl ResultRecord {
    /// Stable dedup key: scenario + metric + canonical coordinates.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}",
            self.scenario.name(),
            self.metric,
            serde_json::to_string(&self.coords).expect("coords serialize")
        )
    }
}

/// Builder shorthand used throughout the scenario code.
pub(crate) fn coords(pairs: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}
