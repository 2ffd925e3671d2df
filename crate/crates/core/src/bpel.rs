//! WS-BPEL-subset process model and static pre-processing.
//!
//! A parsed process is an activity tree plus partner links and variables.
//! Activities fall into four categories for context slicing:
//!
//! 1. information exchanges — `receive`, `reply`, `invoke`, `assign`, `exit`;
//! 2. control structures that split contexts — `sequence`, parallel `flow`,
//!    parallel `forEach`, and `if` with different branches;
//! 3. control structures that only wrap their children — `pick`, `scope`,
//!    `while`, `repeatUntil` (and serial `flow`/`forEach`);
//! 4. everything else, irrelevant to slicing.
//!
//! The coordinator locates the instance-creating receive, turns category-1
//! activities into service call tuples in document order, and drives the
//! shared slicing engine; category-2 structures pin a split on each child
//! where the trace path would have to detect the fan-out pattern. Loop bodies
//! are analyzed exactly once: pre-processing is static, iteration counts are
//! a runtime concern.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::policy::{aggregate_qops, negotiate, Decision, PolicyBundle, PolicyKind};
use crate::scg::{
    asset, AssetId, DependencyKind, PartyId, PartyKind, ServiceCallGraph, ServiceCallTuple,
    TupleKind,
};
use crate::slicer::{BranchHint, Engine, SliceError, SliceOptions, SliceReport};

/// Supported activity kinds; anything else in a process document is a parse
/// error, not a silent skip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActivityKind {
    Receive,
    Reply,
    Invoke,
    Assign,
    Exit,
    Sequence,
    Flow,
    ForEach,
    If,
    Pick,
    Scope,
    While,
    RepeatUntil,
    Throw,
    Wait,
    Empty,
    Compensate,
    CompensateScope,
    Rethrow,
    Validate,
    ExtensionActivity,
}

/// One copy inside an assign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopySpec {
    pub from: CopyFrom,
    pub to_variable: String,
    #[serde(default)]
    pub to_part: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopyFrom {
    Variable {
        name: String,
        #[serde(default)]
        part: Option<String>,
    },
    Literal(String),
    Expression(String),
}

/// One node of the activity tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityNode {
    pub kind: ActivityKind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub partner_link: Option<String>,
    #[serde(default)]
    pub variable: Option<String>,
    #[serde(default)]
    pub input_variable: Option<String>,
    #[serde(default)]
    pub output_variable: Option<String>,
    #[serde(default)]
    pub create_instance: bool,
    #[serde(default)]
    pub parallel: bool,
    /// The response does not include request information (the ⊄ marker,
    /// written as a `noinclude="true"` attribute on invoke).
    #[serde(default)]
    pub no_include: bool,
    #[serde(default)]
    pub copies: Vec<CopySpec>,
    #[serde(default)]
    pub children: Vec<ActivityNode>,
    /// Line in the source document, for diagnostics.
    #[serde(default)]
    pub source_line: Option<u32>,
}

impl ActivityNode {
    pub fn new(kind: ActivityKind) -> Self {
        ActivityNode {
            kind,
            name: None,
            partner_link: None,
            variable: None,
            input_variable: None,
            output_variable: None,
            create_instance: false,
            parallel: false,
            no_include: false,
            copies: Vec::new(),
            children: Vec::new(),
            source_line: None,
        }
    }

    fn iter_tree(&self) -> Vec<&ActivityNode> {
        let mut nodes = vec![self];
        let mut i = 0;
        while i < nodes.len() {
            let node = nodes[i];
            for child in &node.children {
                nodes.push(child);
            }
            i += 1;
        }
        nodes
    }

    /// Structural equality modulo names and source positions, for comparing
    /// `if` branches.
    fn same_shape(&self, other: &ActivityNode) -> bool {
        self.kind == other.kind
            && self.partner_link == other.partner_link
            && self.variable == other.variable
            && self.input_variable == other.input_variable
            && self.output_variable == other.output_variable
            && self.parallel == other.parallel
            && self.no_include == other.no_include
            && self.copies == other.copies
            && self.children.len() == other.children.len()
            && self.children.iter().zip(&other.children).all(|(a, b)| a.same_shape(b))
    }
}

/// A parsed process: partner links, variables and the activity tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub name: String,
    pub partner_links: Vec<PartyId>,
    pub variables: Vec<PartyId>,
    pub root: ActivityNode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BpelError {
    #[error("{what} at line {line}")]
    Unsupported { what: String, line: u32 },
    #[error("no start activity bearing createInstance")]
    MissingStart,
    #[error("more than one start activity bearing createInstance")]
    DuplicateStart,
    #[error("activity references undeclared partnerLink `{name}`")]
    UnresolvedPartnerLink { name: String },
    #[error("activity references undeclared variable `{name}`")]
    UnresolvedVariable { name: String },
    #[error("the start activity must be the first basic activity of the process")]
    StartNotFirst,
    #[error("assign copy has no target variable")]
    CopyWithoutTarget,
    #[error(transparent)]
    Slice(#[from] SliceError),
}

impl ProcessModel {
    /// Checks reference resolution and the single-start invariant.
    pub fn validate(&self) -> Result<(), BpelError> {
        let links: BTreeSet<&str> = self.partner_links.iter().map(|p| p.as_str()).collect();
        let vars: BTreeSet<&str> = self.variables.iter().map(|p| p.as_str()).collect();
        let mut starts = 0usize;
        for node in self.root.iter_tree() {
            if let Some(pl) = &node.partner_link {
                if !links.contains(pl.as_str()) {
                    return Err(BpelError::UnresolvedPartnerLink { name: pl.clone() });
                }
            }
            for var in [&node.variable, &node.input_variable, &node.output_variable]
                .into_iter()
                .flatten()
            {
                if !vars.contains(var.as_str()) {
                    return Err(BpelError::UnresolvedVariable { name: var.clone() });
                }
            }
            for copy in &node.copies {
                if copy.to_variable.is_empty() {
                    return Err(BpelError::CopyWithoutTarget);
                }
                if !vars.contains(copy.to_variable.as_str()) {
                    return Err(BpelError::UnresolvedVariable { name: copy.to_variable.clone() });
                }
                if let CopyFrom::Variable { name, .. } = &copy.from {
                    if !vars.contains(name.as_str()) {
                        return Err(BpelError::UnresolvedVariable { name: name.clone() });
                    }
                }
            }
            if node.create_instance {
                if node.kind != ActivityKind::Receive {
                    return Err(BpelError::Unsupported {
                        what: "createInstance on a non-receive activity".into(),
                        line: node.source_line.unwrap_or(0),
                    });
                }
                starts += 1;
            }
        }
        match starts {
            0 => Err(BpelError::MissingStart),
            1 => Ok(()),
            _ => Err(BpelError::DuplicateStart),
        }
    }

    /// Counts used by the benchmark output: the basic activities are those
    /// that incur partner interaction — receive, reply, invoke, assign and
    /// their copies.
    pub fn metrics(&self) -> ProcessMetrics {
        let mut basic = 0usize;
        for node in self.root.iter_tree() {
            match node.kind {
                ActivityKind::Receive | ActivityKind::Reply | ActivityKind::Invoke => basic += 1,
                ActivityKind::Assign => basic += 1 + node.copies.len(),
                _ => {}
            }
        }
        ProcessMetrics {
            partner_links: self.partner_links.len(),
            variables: self.variables.len(),
            basic_activities: basic,
        }
    }
}

/// Complexity counters of one process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessMetrics {
    pub partner_links: usize,
    pub variables: usize,
    pub basic_activities: usize,
}

/// Slicing impact category of an activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Category {
    InformationExchange = 1,
    Splitting = 2,
    Transparent = 3,
    Irrelevant = 4,
}

/// Category dispatch. An `if` whose branches are structurally identical does
/// not split; it is treated as a transparent wrapper.
pub fn categorize(node: &ActivityNode) -> Category {
    match node.kind {
        ActivityKind::Receive
        | ActivityKind::Reply
        | ActivityKind::Invoke
        | ActivityKind::Assign
        | ActivityKind::Exit => Category::InformationExchange,
        ActivityKind::Sequence => Category::Splitting,
        ActivityKind::Flow | ActivityKind::ForEach => {
            if node.parallel {
                Category::Splitting
            } else {
                Category::Transparent
            }
        }
        ActivityKind::If => {
            let mut branches = node.children.iter();
            let all_same = match branches.next() {
                None => true,
                Some(first) => branches.all(|b| first.same_shape(b)),
            };
            if all_same {
                Category::Transparent
            } else {
                Category::Splitting
            }
        }
        ActivityKind::Pick | ActivityKind::Scope | ActivityKind::While | ActivityKind::RepeatUntil => {
            Category::Transparent
        }
        ActivityKind::Throw
        | ActivityKind::Wait
        | ActivityKind::Empty
        | ActivityKind::Compensate
        | ActivityKind::CompensateScope
        | ActivityKind::Rethrow
        | ActivityKind::Validate
        | ActivityKind::ExtensionActivity => Category::Irrelevant,
    }
}

/// Variable-level data dependencies of an assign: one per copy whose source
/// is a different variable. Copying a part taints the whole target variable.
pub fn variable_dependencies(
    node: &ActivityNode,
) -> Result<Vec<(PartyId, PartyId, DependencyKind)>, BpelError> {
    if node.kind != ActivityKind::Assign {
        return Err(BpelError::Unsupported {
            what: format!("variable dependencies of a {:?}", node.kind),
            line: node.source_line.unwrap_or(0),
        });
    }
    let mut deps = Vec::new();
    for copy in &node.copies {
        if let CopyFrom::Variable { name, .. } = &copy.from {
            if *name != copy.to_variable {
                deps.push((
                    PartyId::new(copy.to_variable.clone()).expect("validated variable name"),
                    PartyId::new(name.clone()).expect("validated variable name"),
                    DependencyKind::Data,
                ));
            }
        }
    }
    Ok(deps)
}

/// Verdict of the per-context negotiation the assembler runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVerdict {
    pub context: String,
    pub right: String,
    pub consumers: Vec<PartyId>,
    #[serde(flatten)]
    pub outcome: Decision,
}

/// Output of the coordinator: the slicing report, the derived service call
/// graph and one negotiation verdict per sub-context and right.
#[derive(Debug, Clone)]
pub struct Assembler {
    pub process: String,
    pub contexts: SliceReport,
    pub graph: ServiceCallGraph,
    pub verdicts: Vec<ContextVerdict>,
}

impl Assembler {
    pub fn all_satisfied(&self) -> bool {
        self.verdicts.iter().all(|v| v.outcome.is_satisfied())
    }
}

struct Analyzer<'b> {
    engine: Engine<'b>,
    graph: ServiceCallGraph,
    process: PartyId,
    tuple_counter: u32,
    copy_counter: u32,
    exited: bool,
}

impl<'b> Analyzer<'b> {
    fn next_step(&mut self) -> String {
        self.tuple_counter += 1;
        self.tuple_counter.to_string()
    }

    fn feed(&mut self, tuple: ServiceCallTuple, hint: BranchHint) -> Result<(), BpelError> {
        self.engine.step(&tuple, hint)?;
        self.graph.record_call(tuple).map_err(SliceError::from)?;
        Ok(())
    }

    /// Category dispatch over one activity.
    fn analyze(&mut self, node: &ActivityNode, hint: BranchHint) -> Result<(), BpelError> {
        if self.exited {
            return Ok(());
        }
        match categorize(node) {
            Category::InformationExchange => self.develop(node, hint),
            Category::Splitting => {
                for child in &node.children {
                    self.analyze(child, BranchHint::ForceSplit)?;
                }
                Ok(())
            }
            Category::Transparent => {
                for child in &node.children {
                    self.analyze(child, hint)?;
                }
                Ok(())
            }
            Category::Irrelevant => Ok(()),
        }
    }

    /// Category-1 activities translate to service call tuples and drive the
    /// slicing engine.
    fn develop(&mut self, node: &ActivityNode, hint: BranchHint) -> Result<(), BpelError> {
        match node.kind {
            ActivityKind::Receive => {
                let partner = self.partner(node)?;
                let step = self.next_step();
                let tuple = match &node.variable {
                    Some(var) => ServiceCallTuple::new(
                        step,
                        partner,
                        self.process.clone(),
                        TupleKind::DataCall,
                        vec![asset(var)],
                        vec![],
                        true,
                    )
                    .expect("data call with one input"),
                    None => ServiceCallTuple::control_call(step, partner, self.process.clone()),
                };
                self.feed(tuple, hint)
            }
            ActivityKind::Reply => {
                let partner = self.partner(node)?;
                let step = self.next_step();
                let tuple = match &node.variable {
                    Some(var) => ServiceCallTuple::new(
                        step,
                        partner,
                        self.process.clone(),
                        TupleKind::DataResponse,
                        vec![],
                        vec![asset(var)],
                        true,
                    )
                    .expect("data response with one output"),
                    None => ServiceCallTuple::new(
                        step,
                        partner,
                        self.process.clone(),
                        TupleKind::ControlResponse,
                        vec![],
                        vec![],
                        true,
                    )
                    .expect("control response without assets"),
                };
                self.feed(tuple, hint)
            }
            ActivityKind::Invoke => {
                let partner = self.partner(node)?;
                let step = self.next_step();
                let assets_in: Vec<AssetId> =
                    node.input_variable.iter().map(|v| asset(v)).collect();
                let assets_out: Vec<AssetId> =
                    node.output_variable.iter().map(|v| asset(v)).collect();
                let tuple = if !assets_out.is_empty() {
                    ServiceCallTuple::new(
                        step,
                        self.process.clone(),
                        partner,
                        TupleKind::RoundTrip,
                        assets_in,
                        assets_out,
                        !node.no_include,
                    )
                    .expect("round trip")
                } else if !assets_in.is_empty() {
                    ServiceCallTuple::new(
                        step,
                        self.process.clone(),
                        partner,
                        TupleKind::DataCall,
                        assets_in,
                        vec![],
                        true,
                    )
                    .expect("one-way data call")
                } else {
                    ServiceCallTuple::control_call(step, self.process.clone(), partner)
                };
                self.feed(tuple, hint)
            }
            ActivityKind::Assign => {
                // One self round trip per target variable, inputs in copy
                // order; variable-level dependencies feed the graph.
                let mut targets: Vec<(String, Vec<AssetId>)> = Vec::new();
                for copy in &node.copies {
                    let sources: Vec<AssetId> = match &copy.from {
                        CopyFrom::Variable { name, .. } => vec![asset(name)],
                        CopyFrom::Literal(_) | CopyFrom::Expression(_) => vec![],
                    };
                    match targets.iter_mut().find(|(t, _)| *t == copy.to_variable) {
                        Some((_, ins)) => {
                            for s in sources {
                                if !ins.contains(&s) {
                                    ins.push(s);
                                }
                            }
                        }
                        None => targets.push((copy.to_variable.clone(), sources)),
                    }
                }
                for dep in variable_dependencies(node)? {
                    self.graph
                        .record_dependency(dep.0, dep.1, dep.2)
                        .map_err(SliceError::from)?;
                    self.copy_counter += 1;
                }
                for (target, inputs) in targets {
                    let step = self.next_step();
                    let tuple = ServiceCallTuple::new(
                        step,
                        self.process.clone(),
                        self.process.clone(),
                        TupleKind::RoundTrip,
                        inputs,
                        vec![asset(&target)],
                        true,
                    )
                    .expect("self round trip");
                    self.feed(tuple, hint)?;
                }
                Ok(())
            }
            ActivityKind::Exit => {
                let step = self.next_step();
                self.engine.end_all(&step);
                self.exited = true;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn partner(&self, node: &ActivityNode) -> Result<PartyId, BpelError> {
        let name = node.partner_link.as_ref().ok_or_else(|| BpelError::Unsupported {
            what: format!("{:?} without partnerLink", node.kind),
            line: node.source_line.unwrap_or(0),
        })?;
        Ok(PartyId::new(name.clone()).expect("validated partner link"))
    }
}

/// Locates the starting activity, slices the process and negotiates each
/// sub-context against the bundle.
pub fn coordinator(process: &ProcessModel, bundle: &PolicyBundle) -> Result<Assembler, BpelError> {
    process.validate()?;
    // Every partner and the process itself must have policies in the bundle.
    let proc_party = PartyId::new(process.name.clone()).expect("non-empty process name");
    for party in process.partner_links.iter().chain(core::iter::once(&proc_party)) {
        bundle.resolve_qop(party).map_err(SliceError::from)?;
    }

    let mut analyzer = Analyzer {
        engine: Engine::new(SliceOptions::both(), None),
        graph: ServiceCallGraph::new(),
        process: proc_party.clone(),
        tuple_counter: 0,
        copy_counter: 0,
        exited: false,
    };
    analyzer.graph.register_party(proc_party.clone(), PartyKind::Partner).map_err(SliceError::from)?;
    for var in &process.variables {
        analyzer.graph.register_party(var.clone(), PartyKind::Variable).map_err(SliceError::from)?;
    }

    // The start activity must be the first basic activity in document order;
    // it creates the first context, everything after develops it.
    let mut activities: Vec<&ActivityNode> = Vec::new();
    match process.root.kind {
        ActivityKind::Sequence => activities.extend(process.root.children.iter()),
        _ => activities.push(&process.root),
    }
    let first_basic = process
        .root
        .iter_tree()
        .into_iter()
        .find(|n| categorize(n) == Category::InformationExchange)
        .ok_or(BpelError::MissingStart)?;
    if !first_basic.create_instance {
        return Err(BpelError::StartNotFirst);
    }

    let mut started = false;
    for activity in activities {
        if !started {
            if core::ptr::eq(activity, first_basic) {
                analyzer.develop(activity, BranchHint::Auto)?;
                started = true;
                continue;
            }
            if activity
                .iter_tree()
                .iter()
                .any(|n| core::ptr::eq(*n, first_basic))
            {
                return Err(BpelError::StartNotFirst);
            }
            // Pre-start structure without basic activities is advanced past.
            analyzer.analyze(activity, BranchHint::Auto)?;
            continue;
        }
        analyzer.analyze(activity, BranchHint::Auto)?;
    }
    if !started {
        return Err(BpelError::StartNotFirst);
    }

    let consumers = analyzer.engine.context_consumers();
    let contexts = analyzer.engine.finish()?;

    // Per-context verdicts: the aggregated RoPs of the context against the
    // aggregated QoPs of every party that consumed its assets.
    let mut verdicts = Vec::new();
    for (name, refs, consumer_set) in consumers {
        let qops: Vec<_> = consumer_set
            .iter()
            .map(|p| bundle.resolve_qop(p).cloned())
            .collect::<Result<_, _>>()
            .map_err(SliceError::from)?;
        let qop_agg = aggregate_qops(&qops);
        let rops: Vec<_> = refs
            .iter()
            .filter(|r| r.kind == PolicyKind::Rop)
            .map(|r| {
                bundle
                    .resolve_rop(&r.party, r.asset.as_ref())
                    .cloned()
                    .map(|mut rop| {
                        if rop.asset.is_none() {
                            rop.asset = r.asset.clone();
                        }
                        rop
                    })
            })
            .collect::<Result<_, _>>()
            .map_err(SliceError::from)?;
        let rop_agg =
            crate::policy::aggregate_rops(&rops, crate::policy::Boundary::DirectPartner);
        let mut rights: Vec<&str> = rop_agg.rights();
        rights.sort_unstable();
        for right in rights {
            let outcome = negotiate(&bundle.vocabulary, &qop_agg, &rop_agg, right)
                .map_err(SliceError::from)?;
            verdicts.push(ContextVerdict {
                context: name.clone(),
                right: right.to_string(),
                consumers: consumer_set.iter().cloned().collect(),
                outcome,
            });
        }
        let _ = &refs;
    }

    Ok(Assembler { process: process.name.clone(), contexts, graph: analyzer.graph, verdicts })
}

/// Runs only the slicing part of the coordinator, without any bundle; used to
/// compare the process path against the trace path.
pub fn analyze_process(process: &ProcessModel) -> Result<SliceReport, BpelError> {
    let minimal_bundle = minimal_bundle_for(process);
    coordinator(process, &minimal_bundle).map(|a| a.contexts)
}

/// A bundle with empty policies for every party, enough to satisfy the
/// coordinator's resolution step.
pub fn minimal_bundle_for(process: &ProcessModel) -> PolicyBundle {
    let mut bundle = PolicyBundle::default();
    let proc_party = PartyId::new(process.name.clone()).expect("non-empty process name");
    for party in process.partner_links.iter().chain(core::iter::once(&proc_party)) {
        bundle.qops.push(crate::policy::Qop {
            owner: party.clone(),
            claims: vec![],
            accepted_obligations: vec![],
        });
        bundle.rops.push(crate::policy::Rop { owner: party.clone(), asset: None, rules: vec![] });
    }
    bundle
}
