use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::input::MatrixFile;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(role: &'static str, file: &MatrixFile) -> Self {
        Self {
            role,
            path: file.path.display().to_string(),
            sha256: file.sha256.clone(),
        }
    }
}

/// Everything a command prints. `results` is reproducible from the inputs
/// and seed; `timings` is not.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub args: Value,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub timings: Value,
    pub results: Value,
    pub results_sha256: String,
}

impl RunReport {
    pub fn new(command: &str, args: Value, inputs: Vec<InputDigest>, seed: u64, timings: Value, results: Value) -> Self {
        let canonical = serde_json::to_vec(&results).expect("results serialize");
        Self {
            command: command.to_string(),
            args,
            inputs,
            seed,
            timings,
            results_sha256: hex::encode(Sha256::digest(&canonical)),
            results,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
