//! Machine-readable reports.
//!
//! Every command writes one `Report` JSON whose payload is deterministic
//! for a fixed (config, seed): object keys are sorted and floats print
//! in shortest round-trip form. Timestamps live in a separate metadata
//! file so reports byte-reproduce.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::rigidity::Verdict;
use crate::space::SpaceConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Report envelope; `payload` carries the per-command record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    /// Resolved space echoed into every report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceConfig>,
    /// Command parameters (nonlinearity, seeds, tolerances, ...).
    pub params: Value,
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<Verdict>,
    /// Populated when a numerical stage failed; the exit code is 3.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Report {
    pub fn new(command: &str, space: Option<SpaceConfig>, params: Value, payload: Value) -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            space,
            params,
            payload,
            verdicts: Vec::new(),
            error: None,
        }
    }

    pub fn with_verdicts(mut self, verdicts: Vec<Verdict>) -> Report {
        self.verdicts = verdicts;
        self
    }

    pub fn with_error(mut self, error: String) -> Report {
        self.error = Some(error);
        self
    }

    pub fn all_pass(&self) -> bool {
        self.error.is_none() && self.verdicts.iter().all(|v| v.pass)
    }

    /// Writes `report.json` (deterministic) and `meta.json` (timestamped)
    /// under the output directory.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(
            out_dir.join("report.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = serde_json::json!({ "unix_time": stamp, "command": self.command });
        fs::write(out_dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}
