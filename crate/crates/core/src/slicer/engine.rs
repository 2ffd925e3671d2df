//! The slicing state machine shared by the trace path and the process
//! pre-processing path.
//!
//! Both slicings fold over the tuple list in order. The asset side keeps one
//! state record per sub-context lineage and a home map from every asset to
//! the lineage currently tracking it. The request side keeps a stack of
//! on-behalf frames per servicer and a branch tree of QoP contexts that is
//! finalized at the end of the run: a servicer that fanned out to several
//! partners splits its context into per-callee children, while a single
//! downstream request collapses into a version bump of the requester's
//! context.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::policy::{
    aggregate_context_rops, aggregate_qops, negotiate, AggregatedPolicy, PolicyBundle, PolicyKind,
    PolicyRef, Qop,
};
use crate::scg::{AssetId, PartyId, ServiceCallTuple, TupleKind};

use super::{
    CheckKind, ContextDevelopmentTuple, ContextVersionRef, Development, DevelopmentKind,
    NegotiationEvent, SliceError, SliceOptions, SliceReport,
};

/// How a development driven by a process definition should branch. `Auto`
/// lets the trace patterns decide; `ForceSplit` pins the split that a
/// parallel control structure declares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchHint {
    Auto,
    ForceSplit,
}

/// Public view of one on-behalf frame: the servicer answers the requester,
/// and until it does (or is interrupted), its own requests run on the
/// requester's behalf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnBehalfFrame {
    pub servicer: PartyId,
    pub requester: PartyId,
    pub pending_callees: BTreeSet<PartyId>,
    pub active: bool,
}

// Processing phases within one tuple, used to keep the development log in a
// stable order: request-side QoP, asset request half, asset response half,
// response-side QoP, then trace-end entries.
const PHASE_QOP_REQ: u8 = 0;
const PHASE_ROP_REQ: u8 = 1;
const PHASE_ROP_RESP: u8 = 2;
const PHASE_QOP_RESP: u8 = 3;
const PHASE_TRACE_END: u8 = 4;

#[derive(Clone)]
struct RopCtx {
    name: String,
    version: u32,
    constituents: Vec<AssetId>,
    policies: Vec<(PolicyRef, u64)>,
    created_receiver: PartyId,
    created_pos: u64,
    last_pos: u64,
    live: bool,
    child_count: u32,
    consumers: BTreeSet<PartyId>,
}

impl RopCtx {
    fn policy_refs(&self) -> Vec<PolicyRef> {
        let mut refs: Vec<_> = self.policies.clone();
        refs.sort_by_key(|(_, seq)| *seq);
        refs.into_iter().map(|(r, _)| r).collect()
    }

    fn has_party(&self, party: &PartyId, kind: PolicyKind) -> bool {
        self.policies.iter().any(|(r, _)| r.kind == kind && r.party == *party)
    }

    fn version_ref(&self) -> ContextVersionRef {
        ContextVersionRef { name: self.name.clone(), version: self.version }
    }
}

#[derive(Clone)]
struct AssetState {
    home: Option<usize>,
    producer: PartyId,
    last_touch: (u64, u8),
    dead: bool,

}

#[derive(Clone)]
struct QRecord {
    lineage: usize,
    parents: Vec<usize>,
    policies: Vec<PolicyRef>,
    step: String,
    pos: u64,
    seq: u64,
    kind: DevelopmentKind,
}

#[derive(Clone)]
struct QLineage {
    name: String,
    created_receiver: PartyId,
    created_pos: u64,
    records: Vec<usize>,
    policies: Vec<(PolicyRef, u64)>,
    live: bool,
    root: bool,
    coalescable: bool,
    merged_into: Option<usize>,
    last_pos: u64,
}

#[derive(Clone)]
struct Frame {
    servicer: PartyId,
    requester: PartyId,
    branch: usize,
    pending_callees: BTreeSet<PartyId>,
    suspended: bool,
    children: Vec<usize>,
    root: bool,
    delivered: BTreeSet<AssetId>,
    open: bool,
}

#[derive(Clone)]
struct PendingReq {
    assets: Vec<AssetId>,
}

#[derive(Clone)]
enum DevEntry {
    Named { pos: u64, phase: u8, seq: u64, step: String, kind: DevelopmentKind, context: String },
    QRecord { pos: u64, phase: u8, seq: u64, step: String, rec: usize },
    QLineage { pos: u64, phase: u8, seq: u64, step: String, kind: DevelopmentKind, lineage: usize },
}

impl DevEntry {
    fn key(&self) -> (u64, u8, u64) {
        match self {
            DevEntry::Named { pos, phase, seq, .. }
            | DevEntry::QRecord { pos, phase, seq, .. }
            | DevEntry::QLineage { pos, phase, seq, .. } => (*pos, *phase, *seq),
        }
    }
}

#[derive(Clone)]
pub(crate) struct Engine<'b> {
    options: SliceOptions,
    bundle: Option<&'b PolicyBundle>,
    pos: u64,
    seq: u64,
    policy_seq: u64,
    last_step: String,
    steps_seen: BTreeSet<String>,
    trace_ended: bool,
    // Asset side.
    rop_ctxs: Vec<RopCtx>,
    assets: BTreeMap<AssetId, AssetState>,
    rop_names: BTreeSet<String>,
    rop_tuples: Vec<ContextDevelopmentTuple>,
    // Request side.
    frames: Vec<Frame>,
    stacks: BTreeMap<PartyId, Vec<usize>>,
    qop_lineages: Vec<QLineage>,
    qop_records: Vec<QRecord>,
    qop_names: BTreeSet<String>,
    // Shared request/response matching.
    pending: BTreeMap<(PartyId, PartyId), VecDeque<PendingReq>>,
    // Output.
    developments: Vec<DevEntry>,
    negotiations: Vec<NegotiationEvent>,
    negotiation_seen: BTreeSet<(CheckKind, Vec<PartyId>, Vec<PartyId>, String)>,
}

impl<'b> Engine<'b> {
    pub(crate) fn new(options: SliceOptions, bundle: Option<&'b PolicyBundle>) -> Self {
        Engine {
            options,
            bundle,
            pos: 0,
            seq: 0,
            policy_seq: 0,
            last_step: String::new(),
            steps_seen: BTreeSet::new(),
            trace_ended: false,
            rop_ctxs: Vec::new(),
            assets: BTreeMap::new(),
            rop_names: BTreeSet::new(),
            rop_tuples: Vec::new(),
            frames: Vec::new(),
            stacks: BTreeMap::new(),
            qop_lineages: Vec::new(),
            qop_records: Vec::new(),
            qop_names: BTreeSet::new(),
            pending: BTreeMap::new(),
            developments: Vec::new(),
            negotiations: Vec::new(),
            negotiation_seen: BTreeSet::new(),
        }
    }

    fn next_seq(&mut self) -> u64 {
        // Leave gaps so finalize can splice split entries before a create.
        self.seq += 2;
        self.seq
    }

    fn next_policy_seq(&mut self) -> u64 {
        self.policy_seq += 1;
        self.policy_seq
    }

    pub(crate) fn frames_view(&self) -> Vec<OnBehalfFrame> {
        self.frames
            .iter()
            .filter(|f| f.open)
            .map(|f| OnBehalfFrame {
                servicer: f.servicer.clone(),
                requester: f.requester.clone(),
                pending_callees: f.pending_callees.clone(),
                active: !f.suspended,
            })
            .collect()
    }

    pub(crate) fn forget_trace_end(&mut self) {
        self.trace_ended = true;
    }

    /// Name of the live sub-context currently tracking an asset.
    pub(crate) fn asset_home(&self, asset: &AssetId) -> Option<&str> {
        let idx = self.assets.get(asset).and_then(|s| s.home)?;
        self.rop_ctxs[idx].live.then(|| self.rop_ctxs[idx].name.as_str())
    }

    // ----- main dispatch ---------------------------------------------------

    pub(crate) fn step(
        &mut self,
        tuple: &ServiceCallTuple,
        hint: BranchHint,
    ) -> Result<(), SliceError> {
        self.pos += 1;
        if !self.steps_seen.insert(tuple.step.clone()) {
            return Err(crate::scg::GraphError::DuplicateStep { step: tuple.step.clone() }.into());
        }
        self.last_step = tuple.response_step().to_string();

        let is_self = tuple.caller == tuple.callee;
        let req_step = tuple.request_step().to_string();
        let resp_step = tuple.response_step().to_string();

        match tuple.kind {
            TupleKind::ControlCall | TupleKind::DataCall => {
                let assets_in = self.prune_dead(&tuple.assets_in);
                let denied = self.request_side(tuple, &assets_in, &req_step, hint, false)?;
                if denied {
                    self.kill_assets(&tuple.assets_in, &tuple.caller);
                    return Ok(());
                }
                if self.options.assets {
                    self.asset_request_half(tuple, &assets_in, &req_step)?;
                }
                self.pending
                    .entry((tuple.caller.clone(), tuple.callee.clone()))
                    .or_default()
                    .push_back(PendingReq { assets: assets_in });
            }
            TupleKind::Failed => {
                // A recorded failure: the request was attempted, so the QoP
                // branch exists, but nothing else happens along this edge.
                self.request_side(tuple, &[], &req_step, hint, true)?;
            }
            TupleKind::ControlResponse | TupleKind::DataResponse => {
                let req = self
                    .pending
                    .get_mut(&(tuple.caller.clone(), tuple.callee.clone()))
                    .and_then(|q| q.pop_front())
                    .ok_or_else(|| SliceError::UnmatchedResponse {
                        step: tuple.step.clone(),
                        from: tuple.callee.to_string(),
                    })?;
                if self.options.assets {
                    let assets_out = self.prune_dead(&tuple.assets_out);
                    self.asset_response_half(tuple, &req.assets, &assets_out, true, &resp_step)?;
                }
                self.response_side_frames(tuple, &resp_step);
            }
            TupleKind::RoundTrip if is_self => {
                if self.options.assets {
                    self.asset_self_merge(tuple, &resp_step)?;
                }
            }
            TupleKind::RoundTrip => {
                let assets_in = self.prune_dead(&tuple.assets_in);
                let denied = self.request_side(tuple, &assets_in, &req_step, hint, false)?;
                if denied {
                    self.kill_assets(&tuple.assets_in, &tuple.caller);
                    self.kill_assets(&tuple.assets_out, &tuple.callee);
                    return Ok(());
                }
                if self.options.assets {
                    self.asset_request_half(tuple, &assets_in, &req_step)?;
                    let assets_out = self.prune_dead(&tuple.assets_out);
                    self.asset_response_half(
                        tuple,
                        &assets_in,
                        &assets_out,
                        tuple.includes_input,
                        &resp_step,
                    )?;
                }
                self.round_trip_frames(tuple, &resp_step);
            }
        }
        Ok(())
    }

    // ----- asset side ------------------------------------------------------

    fn prune_dead(&self, assets: &[AssetId]) -> Vec<AssetId> {
        assets
            .iter()
            .filter(|a| self.assets.get(*a).map(|s| !s.dead).unwrap_or(true))
            .cloned()
            .collect()
    }

    /// Marks the assets a denied interaction would have introduced as dead;
    /// assets that already live in a context are untouched.
    fn kill_assets(&mut self, assets: &[AssetId], producer: &PartyId) {
        for a in assets {
            if !self.assets.contains_key(a) {
                self.assets.insert(
                    a.clone(),
                    AssetState {
                        home: None,
                        producer: producer.clone(),
                        last_touch: (0, 0),
                        dead: true,
                    },
                );
            }
        }
    }

    fn is_fresh(&self, asset: &AssetId) -> bool {
        !self.assets.contains_key(asset)
    }

    fn touch(&mut self, assets: &[AssetId], slot: u8) {
        let pos = self.pos;
        for a in assets {
            if let Some(state) = self.assets.get_mut(a) {
                state.last_touch = (pos, slot);
            }
        }
    }

    fn homes(&self, assets: &[AssetId]) -> Vec<usize> {
        let mut homes = Vec::new();
        for a in assets {
            if let Some(idx) = self.assets.get(a).and_then(|s| s.home) {
                if self.rop_ctxs[idx].live && !homes.contains(&idx) {
                    homes.push(idx);
                }
            }
        }
        homes
    }

    fn rop_name(&mut self, producer: &PartyId, consumer: &PartyId, step: &str) -> String {
        let base = format!("R_{}{}", producer, consumer);
        let name = if self.rop_names.contains(&base) { format!("{base}@{step}") } else { base };
        self.rop_names.insert(name.clone());
        name
    }

    fn log_named(&mut self, phase: u8, step: &str, kind: DevelopmentKind, context: &str) {
        let (pos, seq) = (self.pos, self.next_seq());
        self.developments.push(DevEntry::Named {
            pos,
            phase,
            seq,
            step: step.to_string(),
            kind,
            context: context.to_string(),
        });
    }

    fn emit_rop(
        &mut self,
        idx: usize,
        parents: Vec<ContextVersionRef>,
        assets: Vec<AssetId>,
        step: &str,
        kind: DevelopmentKind,
        phase: u8,
    ) {
        let ctx = &mut self.rop_ctxs[idx];
        ctx.last_pos = self.pos;
        let tuple = ContextDevelopmentTuple {
            name: ctx.name.clone(),
            version: ctx.version,
            parents,
            assets,
            policies: ctx.policy_refs(),
            step: step.to_string(),
        };
        let name = ctx.name.clone();
        self.rop_tuples.push(tuple);
        self.log_named(phase, step, kind, &name);
    }

    fn new_rop_ctx(
        &mut self,
        producer: &PartyId,
        receiver: &PartyId,
        step: &str,
        constituents: Vec<AssetId>,
        policies: Vec<(PolicyRef, u64)>,
    ) -> usize {
        let name = self.rop_name(producer, receiver, step);
        let idx = self.rop_ctxs.len();
        self.rop_ctxs.push(RopCtx {
            name,
            version: 1,
            constituents: constituents.clone(),
            policies,
            created_receiver: receiver.clone(),
            created_pos: self.pos,
            last_pos: self.pos,
            live: true,
            child_count: 0,
            consumers: BTreeSet::new(),
        });
        for a in &constituents {
            if let Some(state) = self.assets.get_mut(a) {
                state.home = Some(idx);
            }
        }
        idx
    }

    fn register_assets(&mut self, assets: &[AssetId], producer: &PartyId, slot: u8) {
        for a in assets {
            if !self.assets.contains_key(a) {
                self.assets.insert(
                    a.clone(),
                    AssetState {
                        home: None,
                        producer: producer.clone(),
                        last_touch: (self.pos, slot),
                        dead: false,
                    },
                );
            }
        }
    }

    fn add_policy(&mut self, idx: usize, party: &PartyId, asset: Option<&AssetId>) {
        if self.rop_ctxs[idx].has_party(party, PolicyKind::Rop) {
            return;
        }
        let seq = self.next_policy_seq();
        self.rop_ctxs[idx]
            .policies
            .push((PolicyRef::rop(party.clone(), asset.cloned()), seq));
    }

    /// Request half of calls and round trips: fresh assets are launched by
    /// the caller, known assets are delivered to the callee.
    fn asset_request_half(
        &mut self,
        tuple: &ServiceCallTuple,
        assets_in: &[AssetId],
        step: &str,
    ) -> Result<(), SliceError> {
        let fresh: Vec<AssetId> = assets_in.iter().filter(|a| self.is_fresh(a)).cloned().collect();
        let known: Vec<AssetId> = assets_in.iter().filter(|a| !self.is_fresh(a)).cloned().collect();
        if !fresh.is_empty() {
            self.register_assets(&fresh, &tuple.caller, 0);
            let idx = self.new_rop_ctx(&tuple.caller, &tuple.callee, step, fresh.clone(), vec![]);
            for a in &fresh {
                self.add_policy(idx, &tuple.caller.clone(), Some(a));
            }
            self.rop_ctxs[idx].consumers.insert(tuple.callee.clone());
            self.emit_rop(idx, vec![], fresh.clone(), step, DevelopmentKind::Create, PHASE_ROP_REQ);
        }
        for idx in self.homes(&known) {
            self.rop_ctxs[idx].consumers.insert(tuple.callee.clone());
        }
        // The callee consumes whatever the request carries.
        self.delivery_check(&tuple.callee, assets_in, step);
        self.touch(assets_in, 0);
        Ok(())
    }

    /// Response half: fresh response assets develop the request context
    /// (update when the requester produced the request assets itself, a child
    /// context otherwise, a detached context plus an immediate merge when the
    /// response does not include the request).
    fn asset_response_half(
        &mut self,
        tuple: &ServiceCallTuple,
        req_assets: &[AssetId],
        assets_out: &[AssetId],
        includes_input: bool,
        step: &str,
    ) -> Result<(), SliceError> {
        let requester = tuple.caller.clone();
        let responder = tuple.callee.clone();
        let fresh: Vec<AssetId> = assets_out.iter().filter(|a| self.is_fresh(a)).cloned().collect();
        let known: Vec<AssetId> = assets_out.iter().filter(|a| !self.is_fresh(a)).cloned().collect();
        let mut developed: Option<usize> = None;

        if !fresh.is_empty() {
            self.register_assets(&fresh, &responder, 1);
            let req_homes = self.homes(req_assets);
            let req_ctx = match req_homes.len() {
                0 => None,
                1 => Some(req_homes[0]),
                // Assets from several live contexts consumed by one request:
                // they merge at this step before the response develops them.
                _ => Some(self.merge_ctxs(&req_homes, &requester, step, None)),
            };
            match req_ctx {
                None => {
                    let idx =
                        self.new_rop_ctx(&responder, &requester, step, fresh.clone(), vec![]);
                    for a in &fresh {
                        self.add_policy(idx, &responder.clone(), Some(a));
                    }
                    self.rop_ctxs[idx].consumers.insert(requester.clone());
                    self.emit_rop(idx, vec![], fresh.clone(), step, DevelopmentKind::Create, PHASE_ROP_RESP);
                    developed = Some(idx);
                }
                Some(rc) => {
                    if !includes_input {
                        // Detached response: own context with lineage parent
                        // but no policy taint, then an immediate merge since
                        // the requester aggregates request and response.
                        let parent_ref = self.rop_ctxs[rc].version_ref();
                        let idx =
                            self.new_rop_ctx(&responder, &requester, step, fresh.clone(), vec![]);
                        for a in &fresh {
                            self.add_policy(idx, &responder.clone(), Some(a));
                        }
                        self.rop_ctxs[idx].created_pos = self.pos;
                        self.rop_ctxs[idx].consumers.insert(requester.clone());
                        self.emit_rop(
                            idx,
                            vec![parent_ref],
                            fresh.clone(),
                            step,
                            DevelopmentKind::Create,
                            PHASE_ROP_RESP,
                        );
                        developed = Some(self.merge_ctxs(&[rc, idx], &requester, step, None));
                    } else if req_assets
                        .iter()
                        .all(|a| self.assets.get(a).map(|s| s.producer == requester).unwrap_or(false))
                    {
                        // The requester sent out its own artifact; the
                        // enriched response extends the same context.
                        let prev = self.rop_ctxs[rc].version_ref();
                        self.rop_ctxs[rc].version += 1;
                        self.rop_ctxs[rc].constituents.extend(fresh.iter().cloned());
                        for a in &fresh {
                            self.assets.get_mut(a).expect("registered above").home = Some(rc);
                            self.add_policy(rc, &responder.clone(), Some(a));
                        }
                        self.rop_ctxs[rc].consumers.insert(requester.clone());
                        self.emit_rop(
                            rc,
                            vec![prev],
                            fresh.clone(),
                            step,
                            DevelopmentKind::Update,
                            PHASE_ROP_RESP,
                        );
                        developed = Some(rc);
                    } else {
                        // An intermediary forwarded someone else's assets:
                        // the response starts a branch of the request
                        // context, carrying its policies.
                        let parent_ref = self.rop_ctxs[rc].version_ref();
                        let inherited = self.rop_ctxs[rc].policies.clone();
                        let idx = self.new_rop_ctx(
                            &responder,
                            &requester,
                            step,
                            fresh.clone(),
                            inherited,
                        );
                        for a in &fresh {
                            self.add_policy(idx, &responder.clone(), Some(a));
                        }
                        self.rop_ctxs[idx].consumers.insert(requester.clone());
                        self.rop_ctxs[rc].child_count += 1;
                        if self.rop_ctxs[rc].child_count == 2 {
                            let parent_name = self.rop_ctxs[rc].name.clone();
                            self.log_named(PHASE_ROP_RESP, step, DevelopmentKind::Split, &parent_name);
                        }
                        self.emit_rop(
                            idx,
                            vec![parent_ref],
                            fresh.clone(),
                            step,
                            DevelopmentKind::Create,
                            PHASE_ROP_RESP,
                        );
                        developed = Some(idx);
                    }
                }
            }
        } else if !known.is_empty() && req_assets.is_empty() {
            // A finished artifact delivered to a pure consumer whose request
            // carried nothing: the sub-context gains a consumer.
            let homes = self.homes(&known);
            if let Some(&first) = homes.first() {
                let target = if homes.len() > 1 {
                    self.merge_ctxs(&homes, &requester, step, None)
                } else {
                    first
                };
                let prev = self.rop_ctxs[target].version_ref();
                self.rop_ctxs[target].version += 1;
                let constituents = self.rop_ctxs[target].constituents.clone();
                self.rop_ctxs[target].consumers.insert(requester.clone());
                self.emit_rop(
                    target,
                    vec![prev],
                    constituents,
                    step,
                    DevelopmentKind::Update,
                    PHASE_ROP_RESP,
                );
            }
        }
        // An included response correlates whatever it carries with the
        // request contexts: known outputs that do not already subsume the
        // request's policies merge with them here.
        if includes_input && !req_assets.is_empty() {
            let mut targets = self.homes(&known);
            if let Some(t) = developed {
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
            if !targets.is_empty() {
                let covered: BTreeSet<PartyId> = targets
                    .iter()
                    .flat_map(|&i| self.rop_ctxs[i].policies.iter().map(|(r, _)| r.party.clone()))
                    .collect();
                let mut merge_set = targets.clone();
                for rc in self.homes(req_assets) {
                    let parties: BTreeSet<PartyId> =
                        self.rop_ctxs[rc].policies.iter().map(|(r, _)| r.party.clone()).collect();
                    if !parties.is_subset(&covered) && !merge_set.contains(&rc) {
                        merge_set.push(rc);
                    }
                }
                if merge_set.len() >= 2 {
                    self.merge_ctxs(&merge_set, &requester, step, None);
                }
            }
        }
        for idx in self.homes(assets_out) {
            self.rop_ctxs[idx].consumers.insert(requester.clone());
        }
        self.delivery_check(&requester, assets_out, step);
        self.touch(assets_out, 1);
        Ok(())
    }

    /// Self round trip: the party merges the inputs (and whatever context the
    /// outputs already belonged to) into one artifact. Fresh inputs are the
    /// party's own contribution and bring its policy; fresh outputs are
    /// aliases of the merged artifact.
    fn asset_self_merge(
        &mut self,
        tuple: &ServiceCallTuple,
        step: &str,
    ) -> Result<(), SliceError> {
        let actor = tuple.caller.clone();
        let assets_in = self.prune_dead(&tuple.assets_in);
        let assets_out = self.prune_dead(&tuple.assets_out);
        let fresh_in: Vec<AssetId> = assets_in.iter().filter(|a| self.is_fresh(a)).cloned().collect();
        let known_in: Vec<AssetId> = assets_in.iter().filter(|a| !self.is_fresh(a)).cloned().collect();
        let fresh_out: Vec<AssetId> =
            assets_out.iter().filter(|a| self.is_fresh(a)).cloned().collect();
        let known_out: Vec<AssetId> =
            assets_out.iter().filter(|a| !self.is_fresh(a)).cloned().collect();

        let mut involved = self.homes(&known_in);
        for idx in self.homes(&known_out) {
            if !involved.contains(&idx) {
                involved.push(idx);
            }
        }

        // Known inputs listed most recently touched first, own fresh inputs
        // appended in tuple order.
        let mut la_known = known_in.clone();
        la_known.sort_by(|a, b| {
            let ta = self.assets[a].last_touch;
            let tb = self.assets[b].last_touch;
            tb.cmp(&ta)
        });
        let mut involved_assets = la_known;
        involved_assets.extend(fresh_in.iter().cloned());

        if involved.len() >= 2 {
            self.merge_with_la(&involved, &actor, step, involved_assets.clone(), &fresh_in, &fresh_out);
        } else if !fresh_in.is_empty() || !fresh_out.is_empty() {
            match involved.first().copied() {
                Some(idx) => {
                    let prev = self.rop_ctxs[idx].version_ref();
                    self.rop_ctxs[idx].version += 1;
                    self.register_assets(&fresh_in, &actor, 0);
                    self.rop_ctxs[idx].constituents.extend(fresh_in.iter().cloned());
                    for a in &fresh_in {
                        self.assets.get_mut(a).expect("registered above").home = Some(idx);
                        self.add_policy(idx, &actor.clone(), Some(a));
                    }
                    self.attach_aliases(idx, &actor, &fresh_out);
                    self.emit_rop(
                        idx,
                        vec![prev],
                        involved_assets,
                        step,
                        DevelopmentKind::Update,
                        PHASE_ROP_RESP,
                    );
                }
                None => {
                    // Nothing known anywhere: the party introduces its own
                    // assets internally.
                    let own: Vec<AssetId> = if fresh_in.is_empty() {
                        fresh_out.clone()
                    } else {
                        fresh_in.clone()
                    };
                    self.register_assets(&own, &actor, 0);
                    let idx = self.new_rop_ctx(&actor, &actor, step, own.clone(), vec![]);
                    for a in &own {
                        self.add_policy(idx, &actor.clone(), Some(a));
                    }
                    self.attach_aliases(idx, &actor, &fresh_out);
                    self.emit_rop(idx, vec![], own, step, DevelopmentKind::Create, PHASE_ROP_RESP);
                }
            }
        }
        let _ = known_out;
        self.touch(&assets_in, 0);
        self.touch(&assets_out, 1);
        Ok(())
    }

    /// Merges the given live contexts at `step`, returning the winner index.
    /// The winner keeps its name: preferred is a context created by an
    /// interaction received by the acting party (earliest such), otherwise
    /// the most recently developed one.
    fn merge_ctxs(&mut self, ctxs: &[usize], actor: &PartyId, step: &str, la: Option<Vec<AssetId>>) -> usize {
        let la = la.unwrap_or_else(|| {
            // Winner constituents first, then the absorbed contexts' in
            // creation order.
            let winner = self.pick_winner(ctxs, actor);
            let mut assets = self.rop_ctxs[winner].constituents.clone();
            for &idx in ctxs {
                if idx != winner {
                    assets.extend(self.rop_ctxs[idx].constituents.iter().cloned());
                }
            }
            assets
        });
        self.merge_with_la(ctxs, actor, step, la, &[], &[])
    }

    /// Fresh outputs of a self merge become aliases of the artifact and carry
    /// the actor's own information, so its policy joins.
    fn attach_aliases(&mut self, idx: usize, actor: &PartyId, fresh_out: &[AssetId]) {
        let alias: Vec<AssetId> =
            fresh_out.iter().filter(|a| !self.assets.contains_key(*a)).cloned().collect();
        self.register_assets(&alias, actor, 1);
        for a in &alias {
            self.assets.get_mut(a).expect("registered above").home = Some(idx);
            self.add_policy(idx, &actor.clone(), Some(a));
        }
    }

    fn pick_winner(&self, ctxs: &[usize], actor: &PartyId) -> usize {
        let preferred: Vec<usize> = ctxs
            .iter()
            .copied()
            .filter(|&i| self.rop_ctxs[i].created_receiver == *actor)
            .collect();
        if let Some(&winner) = preferred.iter().min_by_key(|&&i| self.rop_ctxs[i].created_pos) {
            return winner;
        }
        ctxs.iter().copied().max_by_key(|&i| self.rop_ctxs[i].last_pos).expect("non-empty merge set")
    }

    fn merge_with_la(
        &mut self,
        ctxs: &[usize],
        actor: &PartyId,
        step: &str,
        la: Vec<AssetId>,
        fresh_in: &[AssetId],
        fresh_out: &[AssetId],
    ) -> usize {
        let winner = self.pick_winner(ctxs, actor);
        let mut parents: Vec<usize> = ctxs.to_vec();
        parents.sort_by_key(|&i| self.rop_ctxs[i].last_pos);
        let parent_refs: Vec<ContextVersionRef> =
            parents.iter().map(|&i| self.rop_ctxs[i].version_ref()).collect();

        let mut policies = self.rop_ctxs[winner].policies.clone();
        let mut constituents = self.rop_ctxs[winner].constituents.clone();
        let mut consumers = self.rop_ctxs[winner].consumers.clone();
        for &idx in &parents {
            if idx == winner {
                continue;
            }
            for (r, seq) in self.rop_ctxs[idx].policies.clone() {
                if !policies.iter().any(|(p, _)| p.kind == r.kind && p.party == r.party) {
                    policies.push((r, seq));
                }
            }
            for a in self.rop_ctxs[idx].constituents.clone() {
                if !constituents.contains(&a) {
                    constituents.push(a);
                }
            }
            consumers.extend(self.rop_ctxs[idx].consumers.iter().cloned());
            self.rop_ctxs[idx].live = false;
            let absorbed = self.rop_ctxs[idx].name.clone();
            self.log_named(PHASE_ROP_RESP, step, DevelopmentKind::End, &absorbed);
        }
        self.register_assets(fresh_in, actor, 0);
        for a in fresh_in {
            if !constituents.contains(a) {
                constituents.push(a.clone());
            }
        }
        {
            let ctx = &mut self.rop_ctxs[winner];
            ctx.version += 1;
            ctx.policies = policies;
            ctx.constituents = constituents.clone();
            ctx.consumers = consumers;
        }
        for a in fresh_in {
            self.add_policy(winner, &actor.clone(), Some(a));
        }
        // Re-home everything the absorbed contexts tracked, aliases included.
        for state in self.assets.values_mut() {
            if let Some(home) = state.home {
                if parents.contains(&home) {
                    state.home = Some(winner);
                }
            }
        }
        for a in &constituents {
            if let Some(state) = self.assets.get_mut(a) {
                state.home = Some(winner);
            }
        }
        self.attach_aliases(winner, actor, fresh_out);
        self.emit_rop(winner, parent_refs, la, step, DevelopmentKind::Merge, PHASE_ROP_RESP);
        winner
    }

    // ----- request side ----------------------------------------------------

    fn qop_name(&mut self, requester: &PartyId, callee: &PartyId, step: &str) -> String {
        let base = format!("Q_{}{}", requester, callee);
        let name = if self.qop_names.contains(&base) { format!("{base}@{step}") } else { base };
        self.qop_names.insert(name.clone());
        name
    }

    fn active_frame(&self, party: &PartyId) -> Option<usize> {
        self.stacks.get(party).and_then(|s| s.last().copied())
    }

    fn lineage_final(&self, mut idx: usize) -> usize {
        while let Some(next) = self.qop_lineages[idx].merged_into {
            idx = next;
        }
        idx
    }

    fn new_qop_record(
        &mut self,
        lineage: usize,
        parents: Vec<usize>,
        step: &str,
        kind: DevelopmentKind,
        phase: u8,
    ) -> usize {
        let seq = self.next_seq();
        let rec_idx = self.qop_records.len();
        let policies = {
            let lin = &self.qop_lineages[lineage];
            let mut refs: Vec<_> = lin.policies.clone();
            refs.sort_by_key(|(_, s)| *s);
            refs.into_iter().map(|(r, _)| r).collect()
        };
        self.qop_records.push(QRecord {
            lineage,
            parents,
            policies,
            step: step.to_string(),
            pos: self.pos,
            seq,
            kind,
        });
        self.qop_lineages[lineage].records.push(rec_idx);
        self.qop_lineages[lineage].last_pos = self.pos;
        self.developments.push(DevEntry::QRecord {
            pos: self.pos,
            phase,
            seq,
            step: step.to_string(),
            rec: rec_idx,
        });
        rec_idx
    }

    fn add_qop_policy(&mut self, lineage: usize, party: &PartyId) {
        if self.qop_lineages[lineage]
            .policies
            .iter()
            .any(|(r, _)| r.kind == PolicyKind::Qop && r.party == *party)
        {
            return;
        }
        let seq = self.next_policy_seq();
        self.qop_lineages[lineage].policies.push((PolicyRef::qop(party.clone()), seq));
    }

    /// Handles the request moment: frame bookkeeping, the QoP development and
    /// (with a bundle) the request-side negotiation. Returns whether a
    /// negotiation denial failed the tuple.
    fn request_side(
        &mut self,
        tuple: &ServiceCallTuple,
        assets_in: &[AssetId],
        step: &str,
        hint: BranchHint,
        recorded_failure: bool,
    ) -> Result<bool, SliceError> {
        if !self.options.requests {
            return Ok(false);
        }
        if tuple.caller == tuple.callee {
            return Ok(false);
        }
        let requester = tuple.caller.clone();
        let callee = tuple.callee.clone();

        // A request on behalf of former requesters from several sub-contexts
        // merges those contexts first (the carried assets correlate them).
        self.on_behalf_merge(&requester, assets_in, step);

        let lineage = match self.active_frame(&requester) {
            None => {
                let name = self.qop_name(&requester, &callee, step);
                let idx = self.qop_lineages.len();
                self.qop_lineages.push(QLineage {
                    name,
                    created_receiver: callee.clone(),
                    created_pos: self.pos,
                    records: Vec::new(),
                    policies: Vec::new(),
                    live: true,
                    root: true,
                    coalescable: false,
                    merged_into: None,
                    last_pos: self.pos,
                });
                self.add_qop_policy(idx, &requester);
                self.new_qop_record(idx, vec![], step, DevelopmentKind::Create, PHASE_QOP_REQ);
                idx
            }
            Some(frame_idx) => {
                let parent_lineage = self.lineage_final(self.frames[frame_idx].branch);
                let parent_rec = *self.qop_lineages[parent_lineage]
                    .records
                    .last()
                    .expect("a lineage always has its creating record");
                let name = self.qop_name(&requester, &callee, step);
                let idx = self.qop_lineages.len();
                self.qop_lineages.push(QLineage {
                    name,
                    created_receiver: callee.clone(),
                    created_pos: self.pos,
                    records: Vec::new(),
                    policies: self.qop_lineages[parent_lineage].policies.clone(),
                    live: true,
                    root: false,
                    coalescable: hint != BranchHint::ForceSplit,
                    merged_into: None,
                    last_pos: self.pos,
                });
                self.add_qop_policy(idx, &requester);
                self.new_qop_record(idx, vec![parent_rec], step, DevelopmentKind::Create, PHASE_QOP_REQ);
                self.frames[frame_idx].children.push(idx);
                self.frames[frame_idx].pending_callees.insert(callee.clone());
                idx
            }
        };

        // Negotiation at the request: the chain's aggregated QoP against the
        // callee's requirements.
        let mut denied = false;
        if !recorded_failure {
            if let Some(bundle) = self.bundle {
                denied = self.request_check(lineage, &callee, step, bundle)?;
            }
        }

        if recorded_failure || denied {
            // Failed edge: the branch context exists but propagation ends.
            self.qop_lineages[lineage].live = false;
            return Ok(denied);
        }

        // The callee now serves the requester; a newer request interrupts any
        // frame the callee was already serving.
        if let Some(stack) = self.stacks.get(&callee) {
            if let Some(&top) = stack.last() {
                self.frames[top].suspended = true;
            }
        }
        let frame_idx = self.frames.len();
        self.frames.push(Frame {
            servicer: callee.clone(),
            requester: requester.clone(),
            branch: lineage,
            pending_callees: BTreeSet::new(),
            suspended: false,
            children: Vec::new(),
            root: self.qop_lineages[lineage].root,
            delivered: assets_in.iter().cloned().collect(),
            open: true,
        });
        self.stacks.entry(callee).or_default().push(frame_idx);
        Ok(false)
    }

    /// Merges the QoP contexts of every open frame of `requester` whose
    /// delivered assets the outgoing request carries, when they span several
    /// sub-contexts and the active frame is involved.
    fn on_behalf_merge(&mut self, requester: &PartyId, assets_in: &[AssetId], step: &str) {
        if assets_in.is_empty() {
            return;
        }
        let Some(active) = self.active_frame(requester) else { return };
        let contributing: Vec<usize> = self
            .stacks
            .get(requester)
            .map(|stack| {
                stack
                    .iter()
                    .copied()
                    .filter(|&f| {
                        self.frames[f].open
                            && assets_in.iter().any(|a| self.frames[f].delivered.contains(a))
                    })
                    .collect()
            })
            .unwrap_or_default();
        if !contributing.contains(&active) {
            return;
        }
        let mut lineages: Vec<usize> = Vec::new();
        for f in &contributing {
            let lin = self.lineage_final(self.frames[*f].branch);
            if !lineages.contains(&lin) {
                lineages.push(lin);
            }
        }
        if lineages.len() < 2 {
            return;
        }
        // Winner selection mirrors the asset side.
        let preferred: Vec<usize> = lineages
            .iter()
            .copied()
            .filter(|&l| self.qop_lineages[l].created_receiver == *requester)
            .collect();
        let winner = preferred
            .iter()
            .copied()
            .min_by_key(|&l| self.qop_lineages[l].created_pos)
            .unwrap_or_else(|| {
                lineages
                    .iter()
                    .copied()
                    .max_by_key(|&l| self.qop_lineages[l].last_pos)
                    .expect("non-empty lineage set")
            });
        let mut parent_recs = Vec::new();
        let mut ordered = lineages.clone();
        ordered.sort_by_key(|&l| self.qop_lineages[l].last_pos);
        for &l in &ordered {
            parent_recs.push(*self.qop_lineages[l].records.last().expect("lineage has records"));
        }
        for &l in &ordered {
            if l == winner {
                continue;
            }
            for (r, seq) in self.qop_lineages[l].policies.clone() {
                if !self.qop_lineages[winner]
                    .policies
                    .iter()
                    .any(|(p, _)| p.party == r.party && p.kind == r.kind)
                {
                    self.qop_lineages[winner].policies.push((r, seq));
                }
            }
            self.qop_lineages[l].live = false;
            self.qop_lineages[l].merged_into = Some(winner);
            let ended = self.qop_lineages[l].name.clone();
            self.log_named(PHASE_QOP_REQ, step, DevelopmentKind::End, &ended);
        }
        self.qop_lineages[winner].policies.sort_by_key(|(_, s)| *s);
        self.new_qop_record(winner, parent_recs, step, DevelopmentKind::Merge, PHASE_QOP_REQ);
        // Re-point the contributing frames at the merged lineage.
        for f in contributing {
            self.frames[f].branch = winner;
        }
    }

    /// Frame handling for a split response: closes the callee's frame that
    /// served the requester and resumes a suspended frame whose pending
    /// callee just answered.
    fn response_side_frames(&mut self, tuple: &ServiceCallTuple, step: &str) {
        if !self.options.requests {
            return;
        }
        let receiver = tuple.caller.clone();
        let responder = tuple.callee.clone();

        // The responder has answered: close its frame serving the receiver.
        if let Some(stack) = self.stacks.get_mut(&responder) {
            if let Some(pos) = stack
                .iter()
                .rposition(|&f| self.frames[f].requester == receiver && self.frames[f].open)
            {
                let frame_idx = stack.remove(pos);
                self.frames[frame_idx].open = false;
                if self.frames[frame_idx].root {
                    let lineage = self.lineage_final(self.frames[frame_idx].branch);
                    let (pos, seq) = (self.pos, self.next_seq());
                    self.developments.push(DevEntry::QLineage {
                        pos,
                        phase: PHASE_QOP_RESP,
                        seq,
                        step: step.to_string(),
                        kind: DevelopmentKind::End,
                        lineage,
                    });
                }
            }
        }

        // A response from a partner called on behalf of a suspended frame's
        // requester resumes that on-behalf relation.
        if let Some(stack) = self.stacks.get(&receiver) {
            if let Some(&top) = stack.last() {
                if self.frames[top].pending_callees.contains(&responder) {
                    let resumed = self.frames[top].suspended;
                    self.frames[top].pending_callees.remove(&responder);
                    if resumed {
                        self.frames[top].suspended = false;
                        let lineage = self.lineage_final(self.frames[top].branch);
                        let (pos, seq) = (self.pos, self.next_seq());
                        self.developments.push(DevEntry::QLineage {
                            pos,
                            phase: PHASE_QOP_RESP,
                            seq,
                            step: step.to_string(),
                            kind: DevelopmentKind::Update,
                            lineage,
                        });
                    }
                } else {
                    // Not the top: just clear the pending mark wherever it is.
                    for &f in stack.iter() {
                        if self.frames[f].pending_callees.contains(&responder) {
                            self.frames[f].pending_callees.remove(&responder);
                            break;
                        }
                    }
                }
            }
        }
    }

    /// Round trips open and close the callee-side frame within one tuple.
    fn round_trip_frames(&mut self, tuple: &ServiceCallTuple, step: &str) {
        if !self.options.requests {
            return;
        }
        let _ = step;
        let requester = tuple.caller.clone();
        let callee = tuple.callee.clone();
        if let Some(stack) = self.stacks.get_mut(&callee) {
            if let Some(pos) = stack
                .iter()
                .rposition(|&f| self.frames[f].requester == requester && self.frames[f].open)
            {
                let frame_idx = stack.remove(pos);
                self.frames[frame_idx].open = false;
            }
        }
        // The opener frame's pending mark is answered within the tuple.
        if let Some(stack) = self.stacks.get(&requester) {
            for &f in stack.iter().rev() {
                if self.frames[f].pending_callees.contains(&callee) {
                    self.frames[f].pending_callees.remove(&callee);
                    break;
                }
            }
        }
    }

    // ----- negotiation -----------------------------------------------------

    fn resolved_qops(
        &self,
        refs: &[PolicyRef],
        bundle: &PolicyBundle,
    ) -> Result<Vec<Qop>, SliceError> {
        refs.iter()
            .filter(|r| r.kind == PolicyKind::Qop)
            .map(|r| bundle.resolve_qop(&r.party).cloned().map_err(SliceError::from))
            .collect()
    }

    fn rop_aggregate(
        &self,
        refs: &[PolicyRef],
        direct: Option<&PartyId>,
        bundle: &PolicyBundle,
    ) -> Result<AggregatedPolicy, SliceError> {
        aggregate_context_rops(bundle, refs, direct).map_err(SliceError::from)
    }

    fn push_negotiation(
        &mut self,
        step: &str,
        check: CheckKind,
        qop_agg: &AggregatedPolicy,
        rop_agg: &AggregatedPolicy,
        bundle: &PolicyBundle,
    ) -> Result<bool, SliceError> {
        let mut consumers: Vec<PartyId> = Vec::new();
        for m in &qop_agg.members {
            if !consumers.contains(&m.party) {
                consumers.push(m.party.clone());
            }
        }
        let mut providers: Vec<PartyId> = Vec::new();
        for m in &rop_agg.members {
            if !providers.contains(&m.party) {
                providers.push(m.party.clone());
            }
        }
        let mut any_denied = false;
        let mut rights: Vec<&str> = rop_agg.rights();
        if rights.is_empty() {
            return Ok(false);
        }
        rights.sort_unstable();
        for right in rights {
            let mut dedup_consumers = consumers.clone();
            dedup_consumers.sort();
            let mut dedup_providers = providers.clone();
            dedup_providers.sort();
            let key = (check, dedup_consumers, dedup_providers, right.to_string());
            if !self.negotiation_seen.insert(key) {
                continue;
            }
            let outcome = negotiate(&bundle.vocabulary, qop_agg, rop_agg, right)?;
            if !outcome.is_satisfied() {
                any_denied = true;
            }
            let mut conflicts = rop_agg.conflicts.clone();
            conflicts.extend(qop_agg.conflicts.iter().cloned());
            self.negotiations.push(NegotiationEvent {
                step: step.to_string(),
                check,
                consumers: consumers.clone(),
                providers: providers.clone(),
                right: right.to_string(),
                outcome,
                conflicts,
            });
        }
        Ok(any_denied)
    }

    /// Requester chain's QoP aggregate against the callee's RoPs.
    fn request_check(
        &mut self,
        lineage: usize,
        callee: &PartyId,
        step: &str,
        bundle: &PolicyBundle,
    ) -> Result<bool, SliceError> {
        let refs: Vec<PolicyRef> = {
            let lin = &self.qop_lineages[lineage];
            let mut refs: Vec<_> = lin.policies.clone();
            refs.sort_by_key(|(_, s)| *s);
            refs.into_iter().map(|(r, _)| r).collect()
        };
        let qops = self.resolved_qops(&refs, bundle)?;
        let qop_agg = aggregate_qops(&qops);
        let callee_refs: Vec<PolicyRef> = bundle
            .rops
            .iter()
            .filter(|r| r.owner == *callee)
            .map(|r| PolicyRef::rop(r.owner.clone(), r.asset.clone()))
            .collect();
        if callee_refs.is_empty() {
            return Ok(false);
        }
        let rop_agg = self.rop_aggregate(&callee_refs, Some(callee), bundle)?;
        self.push_negotiation(step, CheckKind::Request, &qop_agg, &rop_agg, bundle)
    }

    /// Receiver's own QoP against the aggregated RoPs of the delivered
    /// assets' contexts.
    fn delivery_check(&mut self, receiver: &PartyId, assets: &[AssetId], step: &str) {
        let Some(bundle) = self.bundle else { return };
        if assets.is_empty() {
            return;
        }
        let homes = self.homes(assets);
        if homes.is_empty() {
            return;
        }
        let mut refs: Vec<(PolicyRef, u64)> = Vec::new();
        for idx in &homes {
            for (r, seq) in &self.rop_ctxs[*idx].policies {
                if !refs.iter().any(|(p, _)| p.party == r.party && p.kind == r.kind) {
                    refs.push((r.clone(), *seq));
                }
            }
        }
        refs.sort_by_key(|(_, s)| *s);
        let refs: Vec<PolicyRef> = refs.into_iter().map(|(r, _)| r).collect();
        let qop = match bundle.resolve_qop(receiver) {
            Ok(q) => q.clone(),
            Err(_) => return,
        };
        let qop_agg = aggregate_qops(core::slice::from_ref(&qop));
        let Ok(rop_agg) = self.rop_aggregate(&refs, None, bundle) else { return };
        let _ = self.push_negotiation(step, CheckKind::Delivery, &qop_agg, &rop_agg, bundle);
    }

    // ----- bpel support ----------------------------------------------------

    /// Ends every live context at `step` (process termination).
    pub(crate) fn end_all(&mut self, step: &str) {
        self.last_step = step.to_string();
        self.trace_ended = true;
        self.emit_trace_end();
    }

    /// Final consumer sets per RoP context lineage, for per-context verdicts.
    pub(crate) fn context_consumers(&self) -> Vec<(String, Vec<PolicyRef>, BTreeSet<PartyId>)> {
        self.rop_ctxs
            .iter()
            .map(|c| (c.name.clone(), c.policy_refs(), c.consumers.clone()))
            .collect()
    }

    // ----- finalize ---------------------------------------------------------

    fn emit_trace_end(&mut self) {
        let step = self.last_step.clone();
        if step.is_empty() {
            return;
        }
        for idx in 0..self.rop_ctxs.len() {
            if self.rop_ctxs[idx].live {
                self.rop_ctxs[idx].live = false;
                let name = self.rop_ctxs[idx].name.clone();
                let (pos, seq) = (self.pos, self.next_seq());
                self.developments.push(DevEntry::Named {
                    pos,
                    phase: PHASE_TRACE_END,
                    seq,
                    step: step.clone(),
                    kind: DevelopmentKind::End,
                    context: name,
                });
            }
        }
        for f in 0..self.frames.len() {
            if self.frames[f].open && self.frames[f].root {
                self.frames[f].open = false;
                let lineage = self.lineage_final(self.frames[f].branch);
                let (pos, seq) = (self.pos, self.next_seq());
                self.developments.push(DevEntry::QLineage {
                    pos,
                    phase: PHASE_TRACE_END,
                    seq,
                    step: step.clone(),
                    kind: DevelopmentKind::End,
                    lineage,
                });
            }
        }
    }

    pub(crate) fn finish(mut self) -> Result<SliceReport, SliceError> {
        if !self.trace_ended {
            self.emit_trace_end();
            self.trace_ended = true;
        }

        // Coalesce single-branch frames: the lone child becomes a version
        // bump of the parent context instead of a named sibling.
        let mut coalesced: BTreeMap<usize, usize> = BTreeMap::new(); // lineage -> parent lineage
        for f in 0..self.frames.len() {
            let children = self.frames[f].children.clone();
            if children.len() != 1 {
                continue;
            }
            let child = children[0];
            if !self.qop_lineages[child].coalescable || self.qop_lineages[child].merged_into.is_some()
            {
                continue;
            }
            // The parent is the lineage of the child's creating record.
            let first_rec = self.qop_lineages[child].records[0];
            let Some(&parent_rec) = self.qop_records[first_rec].parents.first() else { continue };
            let parent = self.qop_records[parent_rec].lineage;
            let parent = *coalesced.get(&parent).unwrap_or(&parent);
            if parent == child {
                continue;
            }
            coalesced.insert(child, parent);
            let records = core::mem::take(&mut self.qop_lineages[child].records);
            for rec in &records {
                self.qop_records[*rec].lineage = parent;
                if self.qop_records[*rec].kind == DevelopmentKind::Create {
                    self.qop_records[*rec].kind = DevelopmentKind::Update;
                }
            }
            self.qop_lineages[parent].records.extend(records);
            self.qop_lineages[child].merged_into = Some(parent);
        }

        // Split entries: a frame that fanned out to several callees splits
        // its context at the moment the second branch appears.
        let mut split_entries: Vec<DevEntry> = Vec::new();
        for f in 0..self.frames.len() {
            let children = &self.frames[f].children;
            if children.len() < 2 {
                continue;
            }
            let second = children[1];
            let rec = self.qop_lineages[second].records.first().copied().unwrap_or_else(|| {
                // Coalesce never applies to multi-child frames, so the
                // lineage keeps its creating record; be defensive anyway.
                0
            });
            let record = &self.qop_records[rec];
            let parent_lineage = self.lineage_final(self.frames[f].branch);
            split_entries.push(DevEntry::QLineage {
                pos: record.pos,
                phase: PHASE_QOP_REQ,
                seq: record.seq - 1,
                step: record.step.clone(),
                kind: DevelopmentKind::Split,
                lineage: parent_lineage,
            });
        }
        self.developments.extend(split_entries);

        // Materialize QoP tuples: versions per final lineage in record order.
        let mut order: Vec<usize> = (0..self.qop_records.len()).collect();
        order.sort_by_key(|&r| self.qop_records[r].seq);
        let mut versions: BTreeMap<usize, u32> = BTreeMap::new();
        let mut record_version: BTreeMap<usize, (String, u32)> = BTreeMap::new();
        let mut qop_tuples = Vec::new();
        for &r in &order {
            let rec = &self.qop_records[r];
            let lineage = rec.lineage;
            let v = versions.entry(lineage).or_insert(0);
            *v += 1;
            let name = self.qop_lineages[lineage].name.clone();
            record_version.insert(r, (name.clone(), *v));
            let parents = rec
                .parents
                .iter()
                .map(|p| {
                    let (pname, pver) = record_version
                        .get(p)
                        .cloned()
                        .expect("parent records precede children");
                    ContextVersionRef { name: pname, version: pver }
                })
                .collect();
            qop_tuples.push(ContextDevelopmentTuple {
                name,
                version: *v,
                parents,
                assets: Vec::new(),
                policies: rec.policies.clone(),
                step: rec.step.clone(),
            });
        }

        // Resolve the development log.
        self.developments.sort_by_key(|d| d.key());
        let mut developments = Vec::new();
        for entry in &self.developments {
            let dev = match entry {
                DevEntry::Named { step, kind, context, .. } => Development {
                    step: step.clone(),
                    kind: *kind,
                    context: context.clone(),
                },
                DevEntry::QRecord { step, rec, .. } => Development {
                    step: step.clone(),
                    kind: self.qop_records[*rec].kind,
                    context: record_version[rec].0.clone(),
                },
                DevEntry::QLineage { step, kind, lineage, .. } => Development {
                    step: step.clone(),
                    kind: *kind,
                    context: self.qop_lineages[self.lineage_final(*lineage)].name.clone(),
                },
            };
            developments.push(dev);
        }

        Ok(SliceReport {
            rop_contexts: self.rop_tuples,
            qop_contexts: qop_tuples,
            developments,
            negotiations: self.negotiations,
        })
    }
}
