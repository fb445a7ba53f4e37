//! JSON report envelope shared by every subcommand.
//!
//! The envelope is schema-versioned and the `payload` field is byte-stable
//! for identical inputs and seed; only `wall_clock_seconds` varies between
//! reruns.

use serde::Serialize;
use serde_json::Value;

pub const SCHEMA: &str = "report-v1";

#[derive(Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Serialize)]
pub struct ReportEnvelope {
    pub schema: &'static str,
    pub tool: ToolInfo,
    pub command: String,
    pub config: Value,
    pub payload: Value,
    pub warnings: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl ReportEnvelope {
    pub fn new(command: String, config: Value) -> Self {
        Self {
            schema: SCHEMA,
            tool: ToolInfo {
                name: "fgam",
                version: env!("CARGO_PKG_VERSION"),
            },
            command,
            config,
            payload: Value::Null,
            warnings: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serializes")
    }
}
