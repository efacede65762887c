//! Run-metadata sidecar written by every subcommand.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use anglegraph_core::io::{write_atomic, RunConfig};
use anglegraph_core::Result;

#[derive(Serialize)]
pub struct RunMetadata<'a> {
    pub command: &'a str,
    pub tool_version: &'a str,
    pub seed: u64,
    pub encoder: &'a str,
    pub threads: usize,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub config: &'a RunConfig,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub struct RunTimer {
    started: u64,
}

impl RunTimer {
    pub fn start() -> Self {
        RunTimer { started: now_unix() }
    }

    /// Write `run_metadata.json` next to the primary outputs.
    pub fn write(&self, dir: &Path, command: &str, cfg: &RunConfig, threads: usize) -> Result<()> {
        let meta = RunMetadata {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            encoder: cfg.encoder.name(),
            threads,
            started_unix_s: self.started,
            finished_unix_s: now_unix(),
            config: cfg,
        };
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        write_atomic(&dir.join("run_metadata.json"), text.as_bytes())
    }
}
