//! Graphviz rendering of a service call graph.
//!
//! Edge styling follows the diagram conventions used throughout the analysis:
//! data exchanges are green (solid when the response aggregates the request,
//! dashed when it does not), control messages are solid blue, failed
//! interactions are dashed blue. Data edges carry their asset names as
//! labels. Output is deterministic: nodes in first-appearance order, edges in
//! trace order.

use alloc::string::String;
use alloc::vec::Vec;

use crate::scg::{AssetId, PartyKind, ServiceCallGraph, TupleKind};

pub fn to_dot(graph: &ServiceCallGraph) -> String {
    let mut out = String::from("digraph scg {\n");
    for (party, kind) in graph.nodes() {
        out.push_str("  \"");
        out.push_str(party.as_str());
        out.push('"');
        if kind == PartyKind::Variable {
            out.push_str(" [shape=box]");
        }
        out.push_str(";\n");
    }
    for tuple in graph.edges() {
        let (tail, head) = match tuple.kind {
            // Responses are drawn in message direction: sender to receiver.
            TupleKind::ControlResponse | TupleKind::DataResponse => (&tuple.callee, &tuple.caller),
            _ => (&tuple.caller, &tuple.callee),
        };
        let mut attrs: Vec<String> = Vec::new();
        let label = edge_label(&tuple.assets_in, &tuple.assets_out);
        if !label.is_empty() {
            attrs.push(alloc::format!("label=\"{label}\""));
        }
        match tuple.kind {
            TupleKind::ControlCall | TupleKind::ControlResponse => {
                attrs.push("color=blue".into());
            }
            TupleKind::DataCall | TupleKind::DataResponse => {
                attrs.push("color=green".into());
            }
            TupleKind::RoundTrip => {
                attrs.push("color=green".into());
                attrs.push("dir=both".into());
                if !tuple.includes_input {
                    attrs.push("style=dashed".into());
                }
            }
            TupleKind::Failed => {
                attrs.push("color=blue".into());
                attrs.push("dir=both".into());
                attrs.push("style=dashed".into());
            }
        }
        out.push_str("  \"");
        out.push_str(tail.as_str());
        out.push_str("\" -> \"");
        out.push_str(head.as_str());
        out.push('"');
        if !attrs.is_empty() {
            out.push_str(" [");
            out.push_str(&attrs.join(", "));
            out.push(']');
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");
    out
}

fn edge_label(assets_in: &[AssetId], assets_out: &[AssetId]) -> String {
    let join = |assets: &[AssetId]| {
        assets.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(",")
    };
    match (assets_in.is_empty(), assets_out.is_empty()) {
        (true, true) => String::new(),
        (false, true) => join(assets_in),
        (true, false) => join(assets_out),
        (false, false) => alloc::format!("{} -> {}", join(assets_in), join(assets_out)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scg::{party, ServiceCallTuple};
    use crate::trace::parse_trace;

    #[test]
    fn empty_graph_renders_bare_digraph() {
        let g = ServiceCallGraph::new();
        assert_eq!(to_dot(&g), "digraph scg {\n}\n");
    }

    #[test]
    fn use_case_1_has_three_nodes_and_five_edges() {
        let text = "\
1: D -c-> B
2: B -c-> C
3: B <-d- C [out: e]
4: B <-> B [in: e, m] [out: me]
5: D <-d- B [out: me]
";
        let g = ServiceCallGraph::from_tuples(parse_trace(text).unwrap()).unwrap();
        let dot = to_dot(&g);
        assert_eq!(dot.matches(" -> ").count(), 5 + 1, "5 edges plus one in a label");
        assert_eq!(dot.matches(";\n").count(), 3 + 5);
        assert!(dot.contains("label=\"e\""));
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut g = ServiceCallGraph::new();
        g.record_call(ServiceCallTuple::failed("a.2", party("C"), party("H"))).unwrap();
        assert_eq!(to_dot(&g), to_dot(&g.clone()));
        assert!(to_dot(&g).contains("style=dashed"));
    }
}
