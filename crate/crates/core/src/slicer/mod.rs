//! Context slicing: turning an interaction trace into the evolution of
//! sub-contexts.
//!
//! Two strategies run over the same tuple list:
//!
//! * **Asset-based slicing** follows assets. A sub-context is created when a
//!   provider launches an asset, updated when new assets merge into the
//!   artifact it tracks, merged when two tracked artifacts combine, and split
//!   into children when responses derive new assets from a request that
//!   carried someone else's data.
//! * **Request-based slicing** follows requests. A sub-context is created on
//!   a self-initiated request, and every request a servicer makes while
//!   answering someone runs *on behalf of* that requester, so the requester
//!   chain's QoPs aggregate down the call tree. The on-behalf relation is
//!   interrupted by a newer inbound request and resumes once the interrupting
//!   request is answered and a pending callee responds (a stack of frames per
//!   servicer).
//!
//! The combined on-the-fly mode interleaves both and, given a policy bundle,
//! negotiates at the earliest step two aggregates meet: a requester chain's
//! QoP aggregate against the callee's RoPs at each request, and a receiver's
//! QoP against the asset's aggregated RoPs at each delivery. A denied request
//! marks the interaction failed and prunes every downstream development of
//! that branch.

mod engine;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::policy::{ConflictRecord, Decision, PolicyBundle, PolicyError, PolicyRef};
use crate::scg::{AssetId, GraphError, PartyId, ServiceCallTuple};

pub(crate) use engine::Engine;
pub use engine::{BranchHint, OnBehalfFrame};

/// Reference to one version of a sub-context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextVersionRef {
    pub name: String,
    pub version: u32,
}

/// One versioned snapshot of a sub-context: name, version, parent versions,
/// the assets involved in this development, the accumulated policy references
/// and the step that caused it. Request-based contexts carry no assets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDevelopmentTuple {
    pub name: String,
    pub version: u32,
    pub parents: Vec<ContextVersionRef>,
    pub assets: Vec<AssetId>,
    pub policies: Vec<PolicyRef>,
    pub step: String,
}

/// The five development kinds a step can cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevelopmentKind {
    Create,
    Update,
    Merge,
    Split,
    End,
}

/// One entry of the development log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Development {
    pub step: String,
    pub kind: DevelopmentKind,
    pub context: String,
}

/// Which side of an exchange a negotiation guarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Requester chain's QoP aggregate against the callee's RoPs.
    Request,
    /// Receiving party's QoP against the delivered assets' RoP aggregate.
    Delivery,
}

/// One policy negotiation, emitted at the earliest step the two aggregates
/// meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationEvent {
    pub step: String,
    pub check: CheckKind,
    pub consumers: Vec<PartyId>,
    pub providers: Vec<PartyId>,
    pub right: String,
    #[serde(flatten)]
    pub outcome: Decision,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conflicts: Vec<ConflictRecord>,
}

/// Everything a slicing run produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub rop_contexts: Vec<ContextDevelopmentTuple>,
    pub qop_contexts: Vec<ContextDevelopmentTuple>,
    pub developments: Vec<Development>,
    pub negotiations: Vec<NegotiationEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SliceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("step `{step}`: response from `{from}` without a matching outstanding request")]
    UnmatchedResponse { step: String, from: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// What to run over the trace.
#[derive(Debug, Clone, Copy, Default)]
pub struct SliceOptions {
    pub assets: bool,
    pub requests: bool,
}

impl SliceOptions {
    pub fn asset_only() -> Self {
        SliceOptions { assets: true, requests: false }
    }

    pub fn request_only() -> Self {
        SliceOptions { assets: false, requests: true }
    }

    pub fn both() -> Self {
        SliceOptions { assets: true, requests: true }
    }
}

/// Runs a slicing pass over the whole trace.
///
/// Negotiation happens when a bundle is given: request checks when
/// request-based slicing is enabled, delivery checks when asset-based slicing
/// is enabled; on-the-fly mode is both. Without a bundle the pass is pure
/// slicing.
pub fn slice_trace(
    tuples: &[ServiceCallTuple],
    options: SliceOptions,
    bundle: Option<&PolicyBundle>,
) -> Result<SliceReport, SliceError> {
    let mut engine = Engine::new(options, bundle);
    for tuple in tuples {
        engine.step(tuple, BranchHint::Auto)?;
    }
    engine.finish()
}

/// Asset-based slicing: the ordered list of RoP context development tuples.
pub fn asset_slice(tuples: &[ServiceCallTuple]) -> Result<Vec<ContextDevelopmentTuple>, SliceError> {
    Ok(slice_trace(tuples, SliceOptions::asset_only(), None)?.rop_contexts)
}

/// Request-based slicing: the ordered list of QoP context development tuples.
pub fn request_slice(tuples: &[ServiceCallTuple]) -> Result<Vec<ContextDevelopmentTuple>, SliceError> {
    Ok(slice_trace(tuples, SliceOptions::request_only(), None)?.qop_contexts)
}

/// On-the-fly analysis: both slicings interleaved in step order plus
/// negotiation events against the bundle.
pub fn on_the_fly_slice(
    tuples: &[ServiceCallTuple],
    bundle: &PolicyBundle,
) -> Result<SliceReport, SliceError> {
    slice_trace(tuples, SliceOptions::both(), Some(bundle))
}

/// Incremental slicing state, for feeding tuples one at a time and asking
/// what a next tuple would do.
#[derive(Clone)]
pub struct SliceState<'b> {
    engine: Engine<'b>,
}

impl<'b> SliceState<'b> {
    pub fn new(options: SliceOptions, bundle: Option<&'b PolicyBundle>) -> Self {
        SliceState { engine: Engine::new(options, bundle) }
    }

    pub fn feed(&mut self, tuple: &ServiceCallTuple) -> Result<(), SliceError> {
        self.engine.step(tuple, BranchHint::Auto)
    }

    pub fn frames(&self) -> Vec<OnBehalfFrame> {
        self.engine.frames_view()
    }

    /// Name of the live sub-context currently tracking an asset, if any.
    pub fn asset_home(&self, asset: &AssetId) -> Option<&str> {
        self.engine.asset_home(asset)
    }

    pub fn finish(self) -> Result<SliceReport, SliceError> {
        self.engine.finish()
    }
}

/// Per-right grouping of asset-based context tuples (the single-asset
/// multi-group mode): consumers holding different rights on the same
/// artifact belong to different groups, so when the providers behind a
/// context define several rights, the tuple expands into one tuple per right,
/// named `<context>#<right>` and carrying the references of the providers
/// that define that right. Contexts whose providers define at most one right
/// pass through unchanged.
pub fn samg_groups(
    contexts: &[ContextDevelopmentTuple],
    bundle: &PolicyBundle,
) -> Result<Vec<ContextDevelopmentTuple>, PolicyError> {
    use alloc::collections::BTreeSet;
    use alloc::format;
    use alloc::vec::Vec as AVec;
    let mut out = AVec::new();
    for tuple in contexts {
        let mut rights: AVec<String> = AVec::new();
        let mut refs_by_right: AVec<(String, AVec<PolicyRef>)> = AVec::new();
        for r in tuple.policies.iter().filter(|r| matches!(r.kind, crate::policy::PolicyKind::Rop)) {
            let rop = bundle.resolve_rop(&r.party, r.asset.as_ref())?;
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            for rule in &rop.rules {
                if !seen.insert(&rule.right) {
                    continue;
                }
                if !rights.contains(&rule.right) {
                    rights.push(rule.right.clone());
                }
                match refs_by_right.iter_mut().find(|(right, _)| *right == rule.right) {
                    Some((_, refs)) => refs.push(r.clone()),
                    None => refs_by_right.push((rule.right.clone(), alloc::vec![r.clone()])),
                }
            }
        }
        if rights.len() <= 1 {
            out.push(tuple.clone());
            continue;
        }
        for right in &rights {
            let refs = refs_by_right
                .iter()
                .find(|(r, _)| r == right)
                .map(|(_, refs)| refs.clone())
                .unwrap_or_default();
            out.push(ContextDevelopmentTuple {
                name: format!("{}#{right}", tuple.name),
                version: tuple.version,
                parents: tuple.parents.clone(),
                assets: tuple.assets.clone(),
                policies: refs,
                step: tuple.step.clone(),
            });
        }
    }
    Ok(out)
}

/// Classifies the developments one more tuple would cause on the given state,
/// without mutating it. With `trace_ends` set, the end developments of the
/// then-live contexts are included.
pub fn classify_development(
    state: &SliceState<'_>,
    tuple: &ServiceCallTuple,
    trace_ends: bool,
) -> Result<Vec<Development>, SliceError> {
    let mut probe = state.engine.clone();
    probe.step(tuple, BranchHint::Auto)?;
    if !trace_ends {
        probe.forget_trace_end();
    }
    let before = state.engine.clone();
    let base = before.finish()?;
    let full = probe.finish()?;
    let mut devs = full.developments;
    // Remove the developments already present (finishing the base state adds
    // its own end entries, which are not caused by this tuple).
    devs.retain(|d| d.kind != DevelopmentKind::End || trace_ends);
    let base_nonend: Vec<_> =
        base.developments.iter().filter(|d| d.kind != DevelopmentKind::End).cloned().collect();
    Ok(devs.into_iter().filter(|d| !base_nonend.contains(d) || d.kind == DevelopmentKind::End).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_trace;

    const USE_CASE_1: &str = "\
1: D -c-> B
2: B -c-> C
3: B <-d- C [out: e]
4: B <-> B [in: e, m] [out: me]
5: D <-d- B [out: me]
";

    fn names(tuples: &[ContextDevelopmentTuple]) -> Vec<(String, u32, String)> {
        tuples.iter().map(|t| (t.name.clone(), t.version, t.step.clone())).collect()
    }

    #[test]
    fn use_case_1_asset_slicing_yields_three_versions() {
        let tuples = parse_trace(USE_CASE_1).unwrap();
        let contexts = asset_slice(&tuples).unwrap();
        assert_eq!(
            names(&contexts),
            [
                ("R_CB".into(), 1, "3".into()),
                ("R_CB".into(), 2, "4".into()),
                ("R_CB".into(), 3, "5".into()),
            ]
        );
        assert_eq!(contexts[0].parents, []);
        assert_eq!(contexts[0].assets, [crate::scg::asset("e")]);
        assert_eq!(contexts[1].assets, [crate::scg::asset("e"), crate::scg::asset("m")]);
        assert_eq!(contexts[2].assets, contexts[1].assets);
        let parties: Vec<_> = contexts[2].policies.iter().map(|p| p.party.as_str()).collect();
        assert_eq!(parties, ["C", "B"]);
    }

    #[test]
    fn use_case_1_request_slicing_yields_two_versions() {
        let tuples = parse_trace(USE_CASE_1).unwrap();
        let contexts = request_slice(&tuples).unwrap();
        assert_eq!(
            names(&contexts),
            [("Q_DB".into(), 1, "1".into()), ("Q_DB".into(), 2, "2".into())]
        );
        let parties: Vec<_> = contexts[1].policies.iter().map(|p| p.party.as_str()).collect();
        assert_eq!(parties, ["D", "B"]);
        assert!(contexts.iter().all(|c| c.assets.is_empty()));
    }

    #[test]
    fn control_only_trace_has_no_asset_contexts() {
        let tuples = parse_trace("1: A -c-> B\n2: B -c-> C\n").unwrap();
        assert!(asset_slice(&tuples).unwrap().is_empty());
    }

    #[test]
    fn response_without_request_is_an_error() {
        let tuples = parse_trace("1: A <-d- B [out: x]").unwrap();
        let err = request_slice(&tuples).unwrap_err();
        assert!(matches!(err, SliceError::UnmatchedResponse { .. }));
    }

    #[test]
    fn classify_reports_update_for_merging_a_new_asset() {
        let tuples = parse_trace(USE_CASE_1).unwrap();
        let mut state = SliceState::new(SliceOptions::asset_only(), None);
        for t in &tuples[..3] {
            state.feed(t).unwrap();
        }
        let devs = classify_development(&state, &tuples[3], false).unwrap();
        assert_eq!(devs.len(), 1);
        assert_eq!(devs[0].kind, DevelopmentKind::Update);
        assert_eq!(devs[0].context, "R_CB");
    }

    #[test]
    fn classify_reports_end_for_all_live_contexts_at_trace_end() {
        let tuples = parse_trace(USE_CASE_1).unwrap();
        let mut state = SliceState::new(SliceOptions::asset_only(), None);
        for t in &tuples[..4] {
            state.feed(t).unwrap();
        }
        let devs = classify_development(&state, &tuples[4], true).unwrap();
        assert!(devs
            .iter()
            .any(|d| d.kind == DevelopmentKind::End && d.context == "R_CB"));
    }

    #[test]
    fn classify_reports_merge_for_a_request_on_behalf_of_two_subcontexts() {
        let text = "\
1: Y -d-> X [in: ay]
2: Z -d-> X [in: az]
";
        let tuples = parse_trace(text).unwrap();
        let mut state = SliceState::new(SliceOptions::request_only(), None);
        for t in &tuples {
            state.feed(t).unwrap();
        }
        let next = parse_trace("3: X -d-> W [in: ay, az]").unwrap();
        let devs = classify_development(&state, &next[0], false).unwrap();
        assert!(devs.iter().any(|d| d.kind == DevelopmentKind::Merge), "{devs:?}");
    }
}
