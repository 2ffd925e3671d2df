//! Command-line front end: slices traces and process definitions, renders
//! service call graphs, negotiates policy aggregates and benchmarks the
//! analyzer.
//!
//! Exit codes: 0 on success, 1 when a negotiation verdict is denied
//! (slice-bpel and negotiate), 2 on input errors. Diagnostics go to stderr;
//! only documents are written to stdout or `--out`.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use bpslicer_cli::{bench, render, CommandKind, OutputFormat, RunConfig, SliceMode};
use bpslicer_core::bpel::coordinator;
use bpslicer_core::policy::{aggregate_qops, negotiate, Decision};
use bpslicer_core::scg::{PartyId, ServiceCallGraph};
use bpslicer_core::slicer::{slice_trace, SliceOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bpslicer",
    about = "Slice collaborative business processes into policy sub-contexts",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Asset,
    Request,
    #[value(name = "on-the-fly")]
    OnTheFly,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Dot,
    Text,
}

#[derive(Args)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Write the document to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Slice an interaction trace into sub-contexts.
    SliceTrace {
        input: PathBuf,
        /// Slicing strategy: asset (RoP), request (QoP) or on-the-fly (both
        /// plus negotiation).
        #[arg(long, value_enum, default_value = "asset")]
        mode: ModeArg,
        /// Policy bundle; required for on-the-fly, optional otherwise.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Pre-process a WS-BPEL-subset definition into an assembler config.
    SliceBpel {
        input: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Render the service call graph of a trace.
    Graph {
        input: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Negotiate aggregated QoPs against aggregated RoPs for one right.
    Negotiate {
        #[arg(long)]
        bundle: PathBuf,
        /// Comma-separated consumer parties whose QoPs aggregate.
        #[arg(long, value_delimiter = ',', required = true)]
        qop: Vec<String>,
        /// Comma-separated provider parties whose RoPs aggregate.
        #[arg(long, value_delimiter = ',', required = true)]
        rop: Vec<String>,
        #[arg(long)]
        right: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Time the analysis of process definitions and report their complexity.
    Bench {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("BPSLICER_LOG")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("bpslicer: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn emit(output: &OutputArgs, document: &str) -> Result<()> {
    match &output.out {
        Some(path) => std::fs::write(path, document)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(document.as_bytes())?,
    }
    Ok(())
}

fn format_or(output: &OutputArgs, default: FormatArg) -> OutputFormat {
    match output.format.unwrap_or(default) {
        FormatArg::Json => OutputFormat::Json,
        FormatArg::Dot => OutputFormat::Dot,
        FormatArg::Text => OutputFormat::Text,
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::SliceTrace { input, mode, bundle, output } => {
            let mode = match mode {
                ModeArg::Asset => SliceMode::Asset,
                ModeArg::Request => SliceMode::Request,
                ModeArg::OnTheFly => SliceMode::OnTheFly,
            };
            let config = RunConfig {
                command: CommandKind::SliceTrace,
                input_path: Some(input.clone()),
                bundle_path: bundle.clone(),
                output_format: format_or(&output, FormatArg::Json),
                mode,
            };
            config.validate()?;
            let tuples = bpslicer_cli::load_trace(&input)?;
            let bundle = bundle.as_deref().map(bpslicer_cli::load_bundle).transpose()?;
            let options = match mode {
                SliceMode::Asset => SliceOptions::asset_only(),
                SliceMode::Request => SliceOptions::request_only(),
                SliceMode::OnTheFly => SliceOptions::both(),
            };
            log::info!("slicing {} tuples from {}", tuples.len(), input.display());
            let report = slice_trace(&tuples, options, bundle.as_ref())
                .map_err(|e| anyhow!("{}: {e}", input.display()))?;
            let document = match config.output_format {
                OutputFormat::Json => render::to_json(&report)?,
                OutputFormat::Text => render::report_text(&report),
                OutputFormat::Dot => return Err(anyhow!("slice-trace has no dot output")),
            };
            emit(&output, &document)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SliceBpel { input, bundle, output } => {
            let config = RunConfig {
                command: CommandKind::SliceBpel,
                input_path: Some(input.clone()),
                bundle_path: Some(bundle.clone()),
                output_format: format_or(&output, FormatArg::Json),
                mode: SliceMode::Asset,
            };
            config.validate()?;
            let model = bpslicer_cli::load_process(&input)?;
            let bundle = bpslicer_cli::load_bundle(&bundle)?;
            let assembler = coordinator(&model, &bundle)
                .map_err(|e| anyhow!("{}: {e}", input.display()))?;
            let document = match config.output_format {
                OutputFormat::Json => render::assembler_json(&assembler)?,
                OutputFormat::Text => render::assembler_text(&assembler),
                OutputFormat::Dot => bpslicer_core::dot::to_dot(&assembler.graph),
            };
            emit(&output, &document)?;
            if assembler.all_satisfied() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Graph { input, output } => {
            let tuples = bpslicer_cli::load_trace(&input)?;
            let graph = ServiceCallGraph::from_tuples(tuples)
                .map_err(|e| anyhow!("{}: {e}", input.display()))?;
            let document = match format_or(&output, FormatArg::Dot) {
                OutputFormat::Dot => bpslicer_core::dot::to_dot(&graph),
                OutputFormat::Json => render::graph_json(&graph)?,
                OutputFormat::Text => render::graph_text(&graph),
            };
            emit(&output, &document)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Negotiate { bundle, qop, rop, right, output } => {
            let bundle = bpslicer_cli::load_bundle(&bundle)?;
            let qops = qop
                .iter()
                .map(|p| {
                    let party = PartyId::new(p.trim()).map_err(|e| anyhow!("{e}"))?;
                    bundle.resolve_qop(&party).cloned().map_err(|e| anyhow!("{e}"))
                })
                .collect::<Result<Vec<_>>>()?;
            let rops = rop
                .iter()
                .map(|p| {
                    let party = PartyId::new(p.trim()).map_err(|e| anyhow!("{e}"))?;
                    bundle.resolve_rop(&party, None).cloned().map_err(|e| anyhow!("{e}"))
                })
                .collect::<Result<Vec<_>>>()?;
            let qop_agg = aggregate_qops(&qops);
            let rop_agg = bpslicer_core::policy::aggregate_rops(
                &rops,
                bpslicer_core::policy::Boundary::DirectPartner,
            );
            let decision = negotiate(&bundle.vocabulary, &qop_agg, &rop_agg, &right)
                .map_err(|e| anyhow!("{e}"))?;
            let document = match format_or(&output, FormatArg::Json) {
                OutputFormat::Json => render::to_json(&decision)?,
                OutputFormat::Text => match &decision {
                    Decision::Satisfied => "satisfied\n".to_string(),
                    Decision::Denied { unmet } => {
                        let mut text = String::from("DENIED\n");
                        for rule in unmet {
                            let owner = rule
                                .stakeholder
                                .as_ref()
                                .map(|s| s.to_string())
                                .unwrap_or_else(|| "?".into());
                            text.push_str(&format!(
                                "  unmet rule of {owner} for right {}\n",
                                rule.right
                            ));
                        }
                        text
                    }
                },
                OutputFormat::Dot => return Err(anyhow!("negotiate has no dot output")),
            };
            emit(&output, &document)?;
            if decision.is_satisfied() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Bench { inputs, bundle, output } => {
            if inputs.is_empty() {
                return Err(anyhow!("bench needs at least one process file"));
            }
            let mut files = Vec::new();
            for input in inputs {
                if input.is_dir() {
                    for entry in std::fs::read_dir(&input)? {
                        let path = entry?.path();
                        if path.extension().is_some_and(|e| e == "bpel") {
                            files.push(path);
                        }
                    }
                } else {
                    files.push(input);
                }
            }
            let bundle = bundle.as_deref().map(bpslicer_cli::load_bundle).transpose()?;
            let rows = bench::run(&files, bundle.as_ref())?;
            let document = match format_or(&output, FormatArg::Text) {
                OutputFormat::Text => bench::table(&rows),
                OutputFormat::Json => render::to_json(&rows)?,
                OutputFormat::Dot => return Err(anyhow!("bench has no dot output")),
            };
            emit(&output, &document)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
