//! WS-BPEL-subset XML front end.
//!
//! The supported subset is exactly the activity kinds the analyzer knows;
//! any other element in activity position is rejected with its location.
//! Flow links, correlation sets and fault/compensation handlers are outside
//! the subset.

use anyhow::{anyhow, bail, Context, Result};
use bpslicer_core::bpel::{ActivityKind, ActivityNode, CopyFrom, CopySpec, ProcessModel};
use bpslicer_core::scg::PartyId;
use roxmltree::{Document, Node};

pub const BPEL_NS: &str = "http://docs.oasis-open.org/wsbpel/2.0/process/executable";

/// Extension attribute marking an invoke whose response does not include the
/// request information.
const NO_INCLUDE_ATTR: &str = "noinclude";

pub fn parse_process(text: &str) -> Result<ProcessModel> {
    let doc = Document::parse(text).context("malformed XML")?;
    let root = doc.root_element();
    if root.tag_name().name() != "process" {
        bail!("expected a <process> document element, found <{}>", root.tag_name().name());
    }
    if root.tag_name().namespace() != Some(BPEL_NS) {
        bail!("unsupported process namespace {:?}; expected {BPEL_NS}", root.tag_name().namespace());
    }
    let name = root
        .attribute("name")
        .ok_or_else(|| anyhow!("<process> needs a name attribute"))?
        .to_string();

    let mut partner_links = Vec::new();
    let mut variables = Vec::new();
    let mut activity = None;
    for child in root.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "partnerLinks" => {
                for pl in child.children().filter(Node::is_element) {
                    if pl.tag_name().name() != "partnerLink" {
                        bail!("{}", unsupported(&doc, &pl));
                    }
                    let link = pl
                        .attribute("name")
                        .ok_or_else(|| anyhow!("partnerLink without name"))?;
                    partner_links.push(PartyId::new(link).map_err(|e| anyhow!("{e}"))?);
                }
            }
            "variables" => {
                for var in child.children().filter(Node::is_element) {
                    if var.tag_name().name() != "variable" {
                        bail!("{}", unsupported(&doc, &var));
                    }
                    let v = var.attribute("name").ok_or_else(|| anyhow!("variable without name"))?;
                    variables.push(PartyId::new(v).map_err(|e| anyhow!("{e}"))?);
                }
            }
            "documentation" | "import" | "extensions" => {}
            _ => {
                let parsed = parse_activity(&doc, &child)?;
                if activity.replace(parsed).is_some() {
                    bail!("a process has exactly one root activity");
                }
            }
        }
    }
    let root_activity = activity.ok_or_else(|| anyhow!("process has no root activity"))?;
    let model = ProcessModel { name, partner_links, variables, root: root_activity };
    model.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(model)
}

fn unsupported(doc: &Document<'_>, node: &Node<'_, '_>) -> String {
    let pos = doc.text_pos_at(node.range().start);
    format!("unsupported element <{}> at line {}", node.tag_name().name(), pos.row)
}

fn line_of(doc: &Document<'_>, node: &Node<'_, '_>) -> u32 {
    doc.text_pos_at(node.range().start).row
}

fn activity_children(doc: &Document<'_>, node: &Node<'_, '_>) -> Result<Vec<ActivityNode>> {
    let mut children = Vec::new();
    for child in node.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "documentation" | "targets" | "sources" | "condition" | "startCounterValue"
            | "finalCounterValue" | "completionCondition" => {}
            _ => children.push(parse_activity(doc, &child)?),
        }
    }
    Ok(children)
}

fn parse_activity(doc: &Document<'_>, node: &Node<'_, '_>) -> Result<ActivityNode> {
    let kind = match node.tag_name().name() {
        "receive" => ActivityKind::Receive,
        "reply" => ActivityKind::Reply,
        "invoke" => ActivityKind::Invoke,
        "assign" => ActivityKind::Assign,
        "exit" => ActivityKind::Exit,
        "sequence" => ActivityKind::Sequence,
        "flow" => ActivityKind::Flow,
        "forEach" => ActivityKind::ForEach,
        "if" => ActivityKind::If,
        "pick" => ActivityKind::Pick,
        "scope" => ActivityKind::Scope,
        "while" => ActivityKind::While,
        "repeatUntil" => ActivityKind::RepeatUntil,
        "throw" => ActivityKind::Throw,
        "wait" => ActivityKind::Wait,
        "empty" => ActivityKind::Empty,
        "compensate" => ActivityKind::Compensate,
        "compensateScope" => ActivityKind::CompensateScope,
        "rethrow" => ActivityKind::Rethrow,
        "validate" => ActivityKind::Validate,
        "extensionActivity" => ActivityKind::ExtensionActivity,
        _ => bail!("{}", unsupported(doc, node)),
    };
    let mut activity = ActivityNode::new(kind);
    activity.source_line = Some(line_of(doc, node));
    activity.name = node.attribute("name").map(Into::into);
    activity.partner_link = node.attribute("partnerLink").map(Into::into);
    activity.variable = node.attribute("variable").map(Into::into);
    activity.input_variable = node.attribute("inputVariable").map(Into::into);
    activity.output_variable = node.attribute("outputVariable").map(Into::into);
    activity.create_instance = node.attribute("createInstance") == Some("yes");
    activity.parallel = node.attribute("parallel") == Some("yes");
    activity.no_include = node
        .attributes()
        .any(|a| a.name() == NO_INCLUDE_ATTR && a.value() == "true");

    match kind {
        ActivityKind::Assign => {
            for copy in node.children().filter(Node::is_element) {
                match copy.tag_name().name() {
                    "documentation" | "targets" | "sources" => continue,
                    "copy" => {}
                    _ => bail!("{}", unsupported(doc, &copy)),
                }
                activity.copies.push(parse_copy(doc, &copy)?);
            }
        }
        ActivityKind::Sequence | ActivityKind::Flow | ActivityKind::Scope
        | ActivityKind::While | ActivityKind::RepeatUntil | ActivityKind::ForEach
        | ActivityKind::Pick => {
            activity.children = activity_children(doc, node)?;
        }
        ActivityKind::If => {
            // Branch bodies in order: the then-activity, each elseif's
            // activity, and the else activity.
            for child in node.children().filter(Node::is_element) {
                match child.tag_name().name() {
                    "condition" | "documentation" | "targets" | "sources" => {}
                    "elseif" | "else" => {
                        activity.children.extend(activity_children(doc, &child)?);
                    }
                    _ => activity.children.push(parse_activity(doc, &child)?),
                }
            }
        }
        _ => {
            if node.children().any(|c| c.is_element()
                && !matches!(c.tag_name().name(), "documentation" | "targets" | "sources" | "correlations"))
                && kind != ActivityKind::ExtensionActivity
            {
                bail!(
                    "unexpected children under <{}> at line {}",
                    node.tag_name().name(),
                    line_of(doc, node)
                );
            }
        }
    }
    Ok(activity)
}

fn parse_copy(doc: &Document<'_>, node: &Node<'_, '_>) -> Result<CopySpec> {
    let mut from = None;
    let mut to = None;
    for part in node.children().filter(Node::is_element) {
        match part.tag_name().name() {
            "from" => {
                let parsed = if let Some(var) = part.attribute("variable") {
                    CopyFrom::Variable {
                        name: var.to_string(),
                        part: part.attribute("part").map(Into::into),
                    }
                } else if let Some(literal) =
                    part.children().find(|c| c.is_element() && c.tag_name().name() == "literal")
                {
                    CopyFrom::Literal(literal.text().unwrap_or_default().trim().to_string())
                } else {
                    CopyFrom::Expression(part.text().unwrap_or_default().trim().to_string())
                };
                from = Some(parsed);
            }
            "to" => {
                let var = part.attribute("variable").ok_or_else(|| {
                    anyhow!("copy <to> without variable at line {}", line_of(doc, &part))
                })?;
                to = Some(CopySpec {
                    from: CopyFrom::Expression(String::new()),
                    to_variable: var.to_string(),
                    to_part: part.attribute("part").map(Into::into),
                });
            }
            "documentation" => {}
            _ => bail!("{}", unsupported(doc, &part)),
        }
    }
    let from = from.ok_or_else(|| anyhow!("copy without <from> at line {}", line_of(doc, node)))?;
    let mut spec =
        to.ok_or_else(|| anyhow!("copy without <to> at line {}", line_of(doc, node)))?;
    spec.from = from;
    Ok(spec)
}
