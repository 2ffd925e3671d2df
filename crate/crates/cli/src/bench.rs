//! Per-file timing of process analysis, reported with the complexity
//! counters that drive it: partner links, variables and basic activities.
//!
//! File reading is timed apart from parsing and analysis; reading dominates
//! for small documents, so keeping it out of the analysis column is what
//! makes the numbers comparable across machines.

use anyhow::{anyhow, Result};
use bpslicer_core::bpel::{coordinator, minimal_bundle_for, ProcessMetrics};
use bpslicer_core::policy::PolicyBundle;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub file: String,
    pub io_ms: f64,
    pub parse_ms: f64,
    pub analysis_ms: f64,
    pub partner_links: usize,
    pub variables: usize,
    pub basic_activities: usize,
    pub verdict: &'static str,
}

pub fn run(files: &[PathBuf], bundle: Option<&PolicyBundle>) -> Result<Vec<BenchRow>> {
    let mut rows: Vec<BenchRow> = files
        .par_iter()
        .map(|path| bench_file(path, bundle))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.file.cmp(&b.file));
    Ok(rows)
}

fn bench_file(path: &PathBuf, bundle: Option<&PolicyBundle>) -> Result<BenchRow> {
    let io_start = Instant::now();
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow!("reading {}: {e}", path.display()))?;
    let io_ms = io_start.elapsed().as_secs_f64() * 1e3;

    let parse_start = Instant::now();
    let model = crate::xml::parse_process(&text)
        .map_err(|e| anyhow!("parsing {}: {e}", path.display()))?;
    let parse_ms = parse_start.elapsed().as_secs_f64() * 1e3;

    let fallback;
    let bundle = match bundle {
        Some(b) => b,
        None => {
            fallback = minimal_bundle_for(&model);
            &fallback
        }
    };
    let analysis_start = Instant::now();
    let assembler =
        coordinator(&model, bundle).map_err(|e| anyhow!("analyzing {}: {e}", path.display()))?;
    let analysis_ms = analysis_start.elapsed().as_secs_f64() * 1e3;

    let ProcessMetrics { partner_links, variables, basic_activities } = model.metrics();
    Ok(BenchRow {
        file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        io_ms,
        parse_ms,
        analysis_ms,
        partner_links,
        variables,
        basic_activities,
        verdict: if assembler.all_satisfied() { "satisfied" } else { "denied" },
    })
}

pub fn table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>8} {:>9} {:>12} {:>12} {:>10} {:>15} {:>10}",
        "file", "io(ms)", "parse(ms)", "analysis(ms)", "partnerLink", "variables", "basic-activity", "verdict"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<24} {:>8.3} {:>9.3} {:>12.3} {:>12} {:>10} {:>15} {:>10}",
            r.file, r.io_ms, r.parse_ms, r.analysis_ms, r.partner_links, r.variables, r.basic_activities, r.verdict
        );
    }
    out
}
