//! File formats, rendering and benchmarking for the process slicer CLI.

pub mod bench;
pub mod render;
pub mod xml;

use anyhow::{anyhow, Context, Result};
use bpslicer_core::policy::PolicyBundle;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Which analysis a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    SliceTrace,
    SliceBpel,
    Graph,
    Negotiate,
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Dot,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceMode {
    Asset,
    Request,
    OnTheFly,
}

/// A validated invocation: one command, its input, and the run options.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub input_path: Option<PathBuf>,
    pub bundle_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    pub mode: SliceMode,
}

impl RunConfig {
    /// The invariants clap cannot express: a bundle is required for
    /// negotiation and for on-the-fly slicing.
    pub fn validate(&self) -> Result<()> {
        let needs_bundle = matches!(self.command, CommandKind::Negotiate | CommandKind::SliceBpel)
            || (self.command == CommandKind::SliceTrace && self.mode == SliceMode::OnTheFly);
        if needs_bundle && self.bundle_path.is_none() {
            return Err(anyhow!("this command requires --bundle"));
        }
        Ok(())
    }
}

pub fn load_bundle(path: &Path) -> Result<PolicyBundle> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading bundle {}", path.display()))?;
    let bundle: PolicyBundle = serde_json::from_str(&text)
        .with_context(|| format!("parsing bundle {}", path.display()))?;
    bundle.validate().map_err(|e| anyhow!("invalid bundle {}: {e}", path.display()))?;
    Ok(bundle)
}

pub fn load_trace(path: &Path) -> Result<Vec<bpslicer_core::ServiceCallTuple>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading trace {}", path.display()))?;
    bpslicer_core::trace::parse_trace(&text).map_err(|e| anyhow!("{}:{e}", path.display()))
}

pub fn load_process(path: &Path) -> Result<bpslicer_core::bpel::ProcessModel> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading process {}", path.display()))?;
    xml::parse_process(&text).with_context(|| format!("parsing {}", path.display()))
}
