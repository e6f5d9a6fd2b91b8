//! JSON output documents. Each one carries the seed and method descriptor
//! needed to replay it, plus the digests of its inputs.

use std::path::Path;

use pairdesign_core::estimate::SubpopulationEstimate;
use pairdesign_core::sim::{SimConfig, SimReport};
use pairdesign_core::{EstimateReport, Solver, Stratification};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const STRATIFICATION_FORMAT: &str = "pairdesign.stratification/1";
pub const ASSIGNMENT_FORMAT: &str = "pairdesign.assignment/1";
pub const ESTIMATE_FORMAT: &str = "pairdesign.estimate/1";
pub const SIMULATION_FORMAT: &str = "pairdesign.simulation/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratificationDoc {
    pub format: String,
    pub method: String,
    pub solver: Solver,
    pub ridge_applied: f64,
    /// Within-pair objective for pairings; absent for sorted blocks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    /// Seed of the remainder drop, when units were dropped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_digest: Option<String>,
    pub sample_digest: String,
    pub unit_ids: Vec<String>,
    pub stratification: Stratification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDoc {
    pub format: String,
    pub seed: u64,
    pub method: String,
    pub sample_digest: String,
    pub stratification_digest: String,
    pub treatment: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDoc {
    pub format: String,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment_seed: Option<u64>,
    pub sample_digest: String,
    pub stratification_digest: String,
    pub report: EstimateReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subpopulations: Vec<SubpopulationEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDoc {
    pub format: String,
    pub population: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    pub config: SimConfig,
    pub report: SimReport,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
