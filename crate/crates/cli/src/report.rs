use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use din_core::net::{DInNetwork, Layout};
use din_core::Error;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Array sizes as stored, for reports and `info`.
#[derive(Clone, Debug, Serialize)]
pub struct Resolutions {
    pub primaries: Vec<Vec<usize>>,
    pub cascaded: Vec<usize>,
}

impl Resolutions {
    pub fn of(net: &DInNetwork<f32>) -> Self {
        Self {
            primaries: net.primaries().iter().map(|p| p.shape().to_vec()).collect(),
            cascaded: net.cascaded().shape().to_vec(),
        }
    }
}

/// One JSON line per run.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub task: String,
    pub command: String,
    pub layout: Option<Layout>,
    pub resolutions: Resolutions,
    pub model_bytes: u64,
    pub quantized: bool,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub metrics: BTreeMap<String, Value>,
    pub wall_clock_seconds: f64,
    pub model_sha256: String,
}

/// Metric value; non-finite values (a perfect PSNR) become strings because
/// JSON has no infinity.
pub fn metric(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else if v > 0.0 {
        Value::from("inf")
    } else if v < 0.0 {
        Value::from("-inf")
    } else {
        Value::from("nan")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl MetricsReport {
    /// Prints the report to stdout and, with `out`, appends it to
    /// `out/report.jsonl`.
    pub fn emit(&self, out: Option<&Path>) -> Result<(), Error> {
        let line = serde_json::to_string(self).expect("serializable report");
        println!("{line}");
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join("report.jsonl"))?;
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}
