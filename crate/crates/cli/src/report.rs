//! JSON result document. The layout is described by `schema/report.schema.json`.

use crate::config::RunConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spatiofd::{ChangePointResult, RecoveryResult, SpatialFunctionalDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBlock {
    /// `q_h` (kernel weighted) or `q_0`.
    pub statistic: String,
    pub q_max: f64,
    pub q_sum: f64,
    pub p_max: Option<f64>,
    pub p_sum: Option<f64>,
    /// Position of the last pre-change replicate, 1-based.
    pub tau_hat: usize,
    /// Label of that replicate in the input file.
    pub tau_hat_replicate: usize,
    pub bandwidth: f64,
    pub truncation: usize,
    pub mc_reps: usize,
    pub n: usize,
    pub p: usize,
    pub t: usize,
    /// `Q(tau)` for `tau = 1..n-1`.
    pub profile: Vec<f64>,
}

impl DetectionBlock {
    pub fn new(res: &ChangePointResult, data: &SpatialFunctionalDataset) -> Self {
        Self {
            statistic: if res.kernel { "q_h" } else { "q_0" }.to_string(),
            q_max: res.q_max,
            q_sum: res.q_sum,
            p_max: res.p_max,
            p_sum: res.p_sum,
            tau_hat: res.tau_hat,
            tau_hat_replicate: data.replicate_labels()[res.tau_hat - 1],
            bandwidth: res.h,
            truncation: res.truncation,
            mc_reps: res.mc_reps,
            n: data.n(),
            p: data.p(),
            t: data.t(),
            profile: res.profile.values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryBlock {
    pub method: String,
    pub alpha: f64,
    pub tau_hat: usize,
    /// `null` when no threshold satisfies the target level.
    pub threshold: Option<f64>,
    pub bandwidth: f64,
    pub truncation: usize,
    pub location_ids: Vec<String>,
    pub w: Vec<f64>,
    pub selected: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
}

impl RecoveryBlock {
    pub fn new(res: &RecoveryResult, tau_hat: usize, data: &SpatialFunctionalDataset) -> Self {
        let ids = data.domain().ids();
        Self {
            method: res.method.name().to_string(),
            alpha: res.alpha,
            tau_hat,
            threshold: res.threshold.is_finite().then_some(res.threshold),
            bandwidth: res.bandwidth,
            truncation: res.truncation,
            location_ids: ids.to_vec(),
            w: res.w.clone(),
            selected: res.selected.iter().map(|&j| ids[j].clone()).collect(),
            p_values: res.p_values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub library_version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration (paths excluded), as JSON.
    pub config_hash: String,
    /// SHA-256 of the analysed values, grid and coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_hash: Option<String>,
}

impl Provenance {
    pub fn new(command: &str, config: &RunConfig, data: Option<&SpatialFunctionalDataset>) -> Self {
        Self {
            tool: "spatiofd".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            library_version: spatiofd::VERSION.to_string(),
            command: command.to_string(),
            seed: config.seed,
            config_hash: config_hash(config),
            data_hash: data.map(dataset_hash),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryBlock>,
    pub provenance: Provenance,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(config: &RunConfig) -> String {
    let json = serde_json::to_vec(&config.effective()).expect("configuration serializes");
    hex(&Sha256::digest(&json))
}

pub fn dataset_hash(data: &SpatialFunctionalDataset) -> String {
    let mut h = Sha256::new();
    for dims in [data.n(), data.p(), data.t()] {
        h.update((dims as u64).to_le_bytes());
    }
    for v in data.values() {
        h.update(v.to_le_bytes());
    }
    for t in data.grid().points() {
        h.update(t.to_le_bytes());
    }
    let domain = data.domain();
    for j in 0..domain.len() {
        h.update(domain.ids()[j].as_bytes());
        h.update([0]);
        for c in domain.coord(j) {
            h.update(c.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_paths_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: Some("elsewhere".into()),
            ..RunConfig::default()
        };
        let c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
