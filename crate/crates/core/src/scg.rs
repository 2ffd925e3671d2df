//! Service call graph: parties, service call tuples and the dependency calculus.
//!
//! Parties and process variables are both graph nodes; the dependency axioms
//! treat them uniformly. Every recorded tuple contributes direct dependencies
//! according to the table below, and indirect dependencies are chains over
//! the direct relation: a chain made only of data edges stays a data
//! dependency, while a single control edge anywhere in a chain turns the
//! whole chain into a control dependency.
//!
//! Direct dependency derivation per tuple kind:
//!
//! | kind              | derived dependencies                                   |
//! |-------------------|--------------------------------------------------------|
//! | `ControlCall`     | callee ←c caller                                       |
//! | `ControlResponse` | caller ←c callee                                       |
//! | `DataCall`        | callee ←d caller                                       |
//! | `DataResponse`    | caller ←d callee                                       |
//! | `RoundTrip`       | callee ←d caller (inputs present and included),        |
//! |                   | callee ←c caller (no inputs),                          |
//! |                   | caller ←d callee (outputs present, even without ⊄)     |
//! | `Failed`          | none                                                   |
//!
//! A round trip marked as non-including (the request is not part of the
//! response) still hands data to the caller, so the caller gains a data
//! dependency, but the callee's output is not treated as derived from the
//! request.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// A partner or variable taking part in the collaboration.
///
/// Identity is the name alone; whether the node is a partner or a variable is
/// recorded once on the graph and fixed afterwards.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(String);

impl PartyId {
    pub fn new(name: impl Into<String>) -> Result<Self, GraphError> {
        let name = name.into();
        if name.is_empty() {
            return Err(GraphError::EmptyName);
        }
        Ok(PartyId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Whether a node is a business partner or a process variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartyKind {
    Partner,
    Variable,
}

/// An asset exchanged between parties.
///
/// Whether an asset stays identifiable inside a collaboration artifact is a
/// per-analysis property kept by the slicer, not part of the identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssetId(String);

impl AssetId {
    pub fn new(name: impl Into<String>) -> Result<Self, GraphError> {
        let name = name.into();
        if name.is_empty() {
            return Err(GraphError::EmptyName);
        }
        Ok(AssetId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Control or data dependency, the two edge flavours of the calculus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyKind {
    Control,
    Data,
}

/// The shape of one partner interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TupleKind {
    /// Caller sends a message carrying no asset.
    ControlCall,
    /// Caller receives a message carrying no asset.
    ControlResponse,
    /// Caller sends assets with the request.
    DataCall,
    /// Caller receives assets with the response.
    DataResponse,
    /// Request and response in one step, either side may carry assets.
    RoundTrip,
    /// The interaction did not happen, usually a negative negotiation.
    Failed,
}

/// One partner interaction: an edge of the service call graph.
///
/// The `caller` is always the party on the left of the written form, i.e. the
/// requester for calls and round trips and the receiver for responses. A step
/// label may carry a request and a response moment separated by `+`
/// (`a.1+b.1`); the two halves are available through [`Self::request_step`]
/// and [`Self::response_step`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceCallTuple {
    pub step: String,
    pub caller: PartyId,
    pub callee: PartyId,
    pub kind: TupleKind,
    pub assets_in: Vec<AssetId>,
    pub assets_out: Vec<AssetId>,
    pub includes_input: bool,
}

impl ServiceCallTuple {
    /// Builds a tuple and checks the per-kind asset invariants.
    pub fn new(
        step: impl Into<String>,
        caller: PartyId,
        callee: PartyId,
        kind: TupleKind,
        assets_in: Vec<AssetId>,
        assets_out: Vec<AssetId>,
        includes_input: bool,
    ) -> Result<Self, GraphError> {
        let step = step.into();
        if step.is_empty() {
            return Err(GraphError::EmptyName);
        }
        match kind {
            TupleKind::ControlCall | TupleKind::ControlResponse | TupleKind::Failed => {
                if !assets_in.is_empty() || !assets_out.is_empty() {
                    return Err(GraphError::AssetOnControlTuple { step });
                }
            }
            TupleKind::DataCall => {
                if assets_in.is_empty() || !assets_out.is_empty() {
                    return Err(GraphError::MisplacedAssets { step });
                }
            }
            TupleKind::DataResponse => {
                if assets_out.is_empty() || !assets_in.is_empty() {
                    return Err(GraphError::MisplacedAssets { step });
                }
            }
            TupleKind::RoundTrip => {}
        }
        if !includes_input && kind != TupleKind::RoundTrip {
            return Err(GraphError::InclusionMarkOutsideRoundTrip { step });
        }
        Ok(ServiceCallTuple {
            step,
            caller,
            callee,
            kind,
            assets_in,
            assets_out,
            includes_input,
        })
    }

    pub fn control_call(step: impl Into<String>, caller: PartyId, callee: PartyId) -> Self {
        Self::new(step, caller, callee, TupleKind::ControlCall, Vec::new(), Vec::new(), true)
            .expect("control call carries no assets")
    }

    pub fn failed(step: impl Into<String>, caller: PartyId, callee: PartyId) -> Self {
        Self::new(step, caller, callee, TupleKind::Failed, Vec::new(), Vec::new(), true)
            .expect("failed tuple carries no assets")
    }

    /// Step moment at which the request happens (`a.1` of `a.1+b.1`).
    pub fn request_step(&self) -> &str {
        match self.step.split_once('+') {
            Some((req, _)) => req,
            None => &self.step,
        }
    }

    /// Step moment at which the response happens (`b.1` of `a.1+b.1`).
    pub fn response_step(&self) -> &str {
        match self.step.split_once('+') {
            Some((_, resp)) => resp,
            None => &self.step,
        }
    }

    /// Dependencies this tuple contributes, as (dependent, dependee, kind).
    pub fn direct_dependencies(&self) -> Vec<(PartyId, PartyId, DependencyKind)> {
        let mut deps = Vec::new();
        match self.kind {
            TupleKind::ControlCall => {
                deps.push((self.callee.clone(), self.caller.clone(), DependencyKind::Control));
            }
            TupleKind::ControlResponse => {
                deps.push((self.caller.clone(), self.callee.clone(), DependencyKind::Control));
            }
            TupleKind::DataCall => {
                deps.push((self.callee.clone(), self.caller.clone(), DependencyKind::Data));
            }
            TupleKind::DataResponse => {
                deps.push((self.caller.clone(), self.callee.clone(), DependencyKind::Data));
            }
            TupleKind::RoundTrip => {
                if self.assets_in.is_empty() {
                    deps.push((self.callee.clone(), self.caller.clone(), DependencyKind::Control));
                } else if self.includes_input {
                    deps.push((self.callee.clone(), self.caller.clone(), DependencyKind::Data));
                }
                if !self.assets_out.is_empty() {
                    deps.push((self.caller.clone(), self.callee.clone(), DependencyKind::Data));
                }
            }
            TupleKind::Failed => {}
        }
        deps
    }
}

/// Errors from graph construction and queries.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("party and asset names must be non-empty")]
    EmptyName,
    #[error("step `{step}` was already recorded")]
    DuplicateStep { step: String },
    #[error("step `{step}`: control and failed tuples carry no assets")]
    AssetOnControlTuple { step: String },
    #[error("step `{step}`: data calls carry inputs only, data responses outputs only")]
    MisplacedAssets { step: String },
    #[error("step `{step}`: the no-inclusion mark only applies to round trips")]
    InclusionMarkOutsideRoundTrip { step: String },
    #[error("unknown party `{name}`")]
    UnknownParty { name: String },
    #[error("party `{name}` already registered with a different kind")]
    KindMismatch { name: String },
}

/// The service call graph: nodes, the ordered edge list and the derived
/// direct dependency relation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServiceCallGraph {
    nodes: BTreeMap<PartyId, PartyKind>,
    node_order: Vec<PartyId>,
    edges: Vec<ServiceCallTuple>,
    steps: BTreeSet<String>,
    deps: BTreeSet<(PartyId, PartyId, DependencyKind)>,
}

impl ServiceCallGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a node up front; `record_call` auto-registers partners, so
    /// this is mostly for variables and isolated nodes.
    pub fn register_party(&mut self, party: PartyId, kind: PartyKind) -> Result<(), GraphError> {
        match self.nodes.get(&party) {
            Some(existing) if *existing != kind => {
                Err(GraphError::KindMismatch { name: party.to_string() })
            }
            Some(_) => Ok(()),
            None => {
                self.nodes.insert(party.clone(), kind);
                self.node_order.push(party);
                Ok(())
            }
        }
    }

    /// Appends one interaction. Endpoints are registered as partners when not
    /// seen before; the step label must be fresh; the derived dependency
    /// relation is extended according to the tuple kind.
    pub fn record_call(&mut self, tuple: ServiceCallTuple) -> Result<(), GraphError> {
        if self.steps.contains(&tuple.step) {
            return Err(GraphError::DuplicateStep { step: tuple.step.clone() });
        }
        self.register_party(tuple.caller.clone(), PartyKind::Partner)?;
        self.register_party(tuple.callee.clone(), PartyKind::Partner)?;
        self.steps.insert(tuple.step.clone());
        for dep in tuple.direct_dependencies() {
            self.deps.insert(dep);
        }
        self.edges.push(tuple);
        Ok(())
    }

    /// Records a raw dependency edge without a service call, used for
    /// variable-to-variable dependencies extracted from assignments.
    pub fn record_dependency(
        &mut self,
        dependent: PartyId,
        dependee: PartyId,
        kind: DependencyKind,
    ) -> Result<(), GraphError> {
        self.register_party(dependent.clone(), PartyKind::Variable)?;
        self.register_party(dependee.clone(), PartyKind::Variable)?;
        self.deps.insert((dependent, dependee, kind));
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&PartyId, PartyKind)> {
        self.node_order.iter().map(move |p| (p, self.nodes[p]))
    }

    pub fn contains(&self, party: &PartyId) -> bool {
        self.nodes.contains_key(party)
    }

    pub fn edges(&self) -> &[ServiceCallTuple] {
        &self.edges
    }

    pub fn direct_dependencies(&self) -> impl Iterator<Item = &(PartyId, PartyId, DependencyKind)> {
        self.deps.iter()
    }

    /// Indirect dependency of `a` on `b`: follows dependency chains of length
    /// one or more. A chain of pure data edges yields `Data`; otherwise any
    /// chain at all yields `Control` (one control edge contaminates the
    /// chain). Data wins when both kinds of chain exist, since an actual
    /// data-flow path is the stronger statement about asset derivation.
    pub fn indirect_dependency(
        &self,
        a: &PartyId,
        b: &PartyId,
    ) -> Result<Option<DependencyKind>, GraphError> {
        for party in [a, b] {
            if !self.contains(party) {
                return Err(GraphError::UnknownParty { name: party.to_string() });
            }
        }
        if self.reaches(a, b, true) {
            return Ok(Some(DependencyKind::Data));
        }
        if self.reaches(a, b, false) {
            return Ok(Some(DependencyKind::Control));
        }
        Ok(None)
    }

    /// Reachability from `from` to `to` over the direct dependency relation,
    /// restricted to data edges when `data_only`. Chains have length >= 1, so
    /// `from == to` needs an actual cycle.
    fn reaches(&self, from: &PartyId, to: &PartyId, data_only: bool) -> bool {
        let mut visited: BTreeSet<&PartyId> = BTreeSet::new();
        let mut stack: Vec<&PartyId> = Vec::new();
        self.push_successors(from, data_only, &mut stack, &mut visited);
        while let Some(node) = stack.pop() {
            if node == to {
                return true;
            }
            self.push_successors(node, data_only, &mut stack, &mut visited);
        }
        false
    }

    fn push_successors<'a>(
        &'a self,
        from: &PartyId,
        data_only: bool,
        stack: &mut Vec<&'a PartyId>,
        visited: &mut BTreeSet<&'a PartyId>,
    ) {
        for (dependent, dependee, kind) in self.deps.iter() {
            if dependent == from
                && (!data_only || *kind == DependencyKind::Data)
                && visited.insert(dependee)
            {
                stack.push(dependee);
            }
        }
    }

    /// Builds a graph from an ordered tuple list.
    pub fn from_tuples<I>(tuples: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = ServiceCallTuple>,
    {
        let mut graph = Self::new();
        for tuple in tuples {
            graph.record_call(tuple)?;
        }
        Ok(graph)
    }
}

/// Shorthand constructors used across tests and the slicer.
pub fn party(name: &str) -> PartyId {
    PartyId::new(name).expect("non-empty party name")
}

pub fn asset(name: &str) -> AssetId {
    AssetId::new(name).expect("non-empty asset name")
}
