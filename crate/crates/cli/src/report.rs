use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Everything a run prints. Field order is fixed so that identical runs
/// produce identical bytes once timings are switched off.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub input_digest: String,
    pub status: String,
    pub optimum: Option<f64>,
    pub detail: String,
    pub certificate: Option<Value>,
    pub witness: Option<Value>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub solve_seconds: f64,
}

pub fn digest(bytes: &[u8]) -> String {
    format!("sha256:{:x}", Sha256::digest(bytes))
}
