//! Text and JSON rendering of analysis results. Documents go to the output
//! stream byte-identically across runs; diagnostics never end up here.

use anyhow::Result;
use bpslicer_core::bpel::Assembler;
use bpslicer_core::policy::Decision;
use bpslicer_core::scg::{PartyKind, ServiceCallGraph};
use bpslicer_core::slicer::NegotiationEvent;
use bpslicer_core::SliceReport;
use serde::Serialize;
use std::fmt::Write as _;

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// The assembler configuration document: the slicing report plus one
/// negotiation verdict per sub-context and right.
#[derive(Serialize)]
pub struct AssemblerConfig<'a> {
    pub process: &'a str,
    pub contexts: &'a SliceReport,
    pub verdicts: &'a [bpslicer_core::bpel::ContextVerdict],
}

pub fn assembler_json(assembler: &Assembler) -> Result<String> {
    to_json(&AssemblerConfig {
        process: &assembler.process,
        contexts: &assembler.contexts,
        verdicts: &assembler.verdicts,
    })
}

pub fn report_text(report: &SliceReport) -> String {
    let mut out = String::new();
    let section = |out: &mut String, title: &str| {
        let _ = writeln!(out, "{title}");
    };
    if !report.rop_contexts.is_empty() {
        section(&mut out, "asset-based sub-contexts (RoP):");
        for c in &report.rop_contexts {
            let _ = writeln!(out, "  {}", context_line(c));
        }
    }
    if !report.qop_contexts.is_empty() {
        section(&mut out, "request-based sub-contexts (QoP):");
        for c in &report.qop_contexts {
            let _ = writeln!(out, "  {}", context_line(c));
        }
    }
    if !report.developments.is_empty() {
        section(&mut out, "developments:");
        for d in &report.developments {
            let _ = writeln!(out, "  step {:<8} {:<7} {}", d.step, format!("{:?}", d.kind).to_lowercase(), d.context);
        }
    }
    if !report.negotiations.is_empty() {
        section(&mut out, "negotiations:");
        for n in &report.negotiations {
            let _ = writeln!(out, "  {}", negotiation_line(n));
        }
    }
    if out.is_empty() {
        out.push_str("empty report\n");
    }
    out
}

fn context_line(c: &bpslicer_core::ContextDevelopmentTuple) -> String {
    let parents = if c.parents.is_empty() {
        "-".to_string()
    } else {
        c.parents.iter().map(|p| format!("{}.{}", p.name, p.version)).collect::<Vec<_>>().join(",")
    };
    let assets = if c.assets.is_empty() {
        "-".to_string()
    } else {
        c.assets.iter().map(|a| a.as_str().to_string()).collect::<Vec<_>>().join(",")
    };
    let policies = c
        .policies
        .iter()
        .map(|p| format!("{:?}_{}", p.kind, p.party).to_lowercase())
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "{}.{} parents=({parents}) assets=({assets}) policies=({policies}) step={}",
        c.name, c.version, c.step
    )
}

fn negotiation_line(n: &NegotiationEvent) -> String {
    let consumers = n.consumers.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(",");
    let providers = n.providers.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(",");
    let verdict = match &n.outcome {
        Decision::Satisfied => "satisfied".to_string(),
        Decision::Denied { unmet } => {
            let owners = unmet
                .iter()
                .filter_map(|u| u.stakeholder.as_ref().map(|s| s.as_str()))
                .collect::<Vec<_>>()
                .join(",");
            format!("DENIED (unmet rules of {owners})")
        }
    };
    format!(
        "step {:<8} {:<8} qop=({consumers}) rop=({providers}) right={} -> {verdict}",
        n.step,
        format!("{:?}", n.check).to_lowercase(),
        n.right
    )
}

pub fn assembler_text(assembler: &Assembler) -> String {
    let mut out = format!("process {}\n", assembler.process);
    out.push_str(&report_text(&assembler.contexts));
    out.push_str("verdicts:\n");
    for v in &assembler.verdicts {
        let consumers = v.consumers.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(",");
        let verdict = if v.outcome.is_satisfied() { "satisfied" } else { "DENIED" };
        let _ = writeln!(out, "  {} right={} consumers=({consumers}) -> {verdict}", v.context, v.right);
    }
    out
}

/// Structured view of the graph for JSON output.
#[derive(Serialize)]
struct GraphDoc {
    nodes: Vec<GraphNode>,
    edges: Vec<bpslicer_core::ServiceCallTuple>,
    dependencies: Vec<GraphDep>,
}

#[derive(Serialize)]
struct GraphNode {
    name: String,
    kind: PartyKind,
}

#[derive(Serialize)]
struct GraphDep {
    dependent: String,
    dependee: String,
    kind: bpslicer_core::DependencyKind,
}

pub fn graph_json(graph: &ServiceCallGraph) -> Result<String> {
    let doc = GraphDoc {
        nodes: graph
            .nodes()
            .map(|(p, kind)| GraphNode { name: p.to_string(), kind })
            .collect(),
        edges: graph.edges().to_vec(),
        dependencies: graph
            .direct_dependencies()
            .map(|(a, b, k)| GraphDep { dependent: a.to_string(), dependee: b.to_string(), kind: *k })
            .collect(),
    };
    to_json(&doc)
}

pub fn graph_text(graph: &ServiceCallGraph) -> String {
    let mut out = String::from("nodes:\n");
    for (p, kind) in graph.nodes() {
        let _ = writeln!(out, "  {} ({})", p, format!("{kind:?}").to_lowercase());
    }
    out.push_str("direct dependencies:\n");
    for (a, b, k) in graph.direct_dependencies() {
        let arrow = match k {
            bpslicer_core::DependencyKind::Control => "<-c-",
            bpslicer_core::DependencyKind::Data => "<-d-",
        };
        let _ = writeln!(out, "  {a} {arrow} {b}");
    }
    out
}
