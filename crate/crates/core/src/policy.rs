//! Usage-control policies: rules, RoP/QoP documents, aggregation and a
//! predicate negotiator.
//!
//! Providers publish RoP documents (requirements of protection) made of rules
//! over subject/object/context attributes; consumers publish QoP documents
//! (quality of protection): attribute claims plus the obligations they accept.
//! When assets merge their providers' RoPs aggregate; when a consumer chain
//! forms, its QoPs aggregate. Aggregation detects conflicts — jointly
//! unsatisfiable predicate pairs on the same attribute — and negotiation
//! checks a QoP aggregate against every rule an RoP aggregate holds for a
//! given right.
//!
//! A rule predicate is entailed only when every member of the QoP aggregate
//! has a claim on the attribute that guarantees it; a consortium is as strong
//! as its weakest member. Object conditions select the asset a rule protects
//! and are not matched against consumer claims.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::scg::{AssetId, PartyId};

/// A scalar attribute value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Num(f64),
    Str(String),
}

impl PartialEq for AttrValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (AttrValue::Bool(a), AttrValue::Bool(b)) => a == b,
            (AttrValue::Num(a), AttrValue::Num(b)) => a.total_cmp(b) == Ordering::Equal,
            (AttrValue::Str(a), AttrValue::Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for AttrValue {}

impl AttrValue {
    /// Ordering within one type; values of different types are incomparable.
    pub fn partial_cmp_same_type(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (AttrValue::Num(a), AttrValue::Num(b)) => Some(a.total_cmp(b)),
            (AttrValue::Str(a), AttrValue::Str(b)) => Some(a.cmp(b)),
            (AttrValue::Bool(a), AttrValue::Bool(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

}

/// Which entity an attribute describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrScope {
    Subject,
    Object,
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredOp {
    Eq,
    Neq,
    Geq,
    Leq,
    InSet,
}

/// Scalar for eq/neq/geq/leq, set for in_set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredValue {
    Scalar(AttrValue),
    Set(Vec<AttrValue>),
}

/// One predicate over a named attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributePredicate {
    pub scope: AttrScope,
    pub attribute: String,
    pub op: PredOp,
    pub value: PredValue,
}

impl AttributePredicate {
    /// Does the predicate hold at a concrete value?
    pub fn holds_at(&self, x: &AttrValue) -> bool {
        match (&self.op, &self.value) {
            (PredOp::Eq, PredValue::Scalar(v)) => x == v,
            (PredOp::Neq, PredValue::Scalar(v)) => x != v,
            (PredOp::Geq, PredValue::Scalar(v)) => {
                matches!(x.partial_cmp_same_type(v), Some(Ordering::Greater | Ordering::Equal))
            }
            (PredOp::Leq, PredValue::Scalar(v)) => {
                matches!(x.partial_cmp_same_type(v), Some(Ordering::Less | Ordering::Equal))
            }
            (PredOp::InSet, PredValue::Set(set)) => set.contains(x),
            _ => false,
        }
    }
}

/// Lifecycle scope of a rule: binding between direct partners only, or kept
/// until the end of the whole transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Dp,
    Eot,
}

/// One usage-control rule, owned by a stakeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UconRule {
    #[serde(default)]
    pub stakeholder: Option<PartyId>,
    #[serde(default)]
    pub subject_conditions: Vec<AttributePredicate>,
    #[serde(default)]
    pub object_conditions: Vec<AttributePredicate>,
    #[serde(default)]
    pub context_conditions: Vec<AttributePredicate>,
    pub right: String,
    #[serde(default)]
    pub obligations: Vec<String>,
    #[serde(default)]
    pub restrictions: Vec<AttributePredicate>,
    pub lifecycle: Lifecycle,
}

impl UconRule {
    /// Conditions a consumer must discharge (object conditions select the
    /// asset, not the consumer).
    fn consumer_conditions(&self) -> impl Iterator<Item = &AttributePredicate> {
        self.subject_conditions
            .iter()
            .chain(self.context_conditions.iter())
            .chain(self.restrictions.iter())
    }
}

/// A provider's requirements of protection for one asset (or all of the
/// owner's assets when `asset` is absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rop {
    #[serde(rename = "party")]
    pub owner: PartyId,
    #[serde(default)]
    pub asset: Option<AssetId>,
    pub rules: Vec<UconRule>,
}

/// A consumer's quality of protection: claimed security attributes and the
/// obligations it is willing to honor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qop {
    #[serde(rename = "party")]
    pub owner: PartyId,
    #[serde(default)]
    pub claims: Vec<AttributePredicate>,
    #[serde(default)]
    pub accepted_obligations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Rop,
    Qop,
}

/// Reference to one stakeholder's policy inside a bundle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PolicyRef {
    pub kind: PolicyKind,
    pub party: PartyId,
    #[serde(default)]
    pub asset: Option<AssetId>,
}

impl PolicyRef {
    pub fn rop(party: PartyId, asset: Option<AssetId>) -> Self {
        PolicyRef { kind: PolicyKind::Rop, party, asset }
    }

    pub fn qop(party: PartyId) -> Self {
        PolicyRef { kind: PolicyKind::Qop, party, asset: None }
    }
}

/// A claim together with the party asserting it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnedClaim {
    pub party: PartyId,
    pub predicate: AttributePredicate,
}

/// One side of a detected conflict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictSide {
    pub party: PartyId,
    pub predicate: AttributePredicate,
}

/// Two clashing predicates and why they clash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub attribute: String,
    pub scope: AttrScope,
    #[serde(default)]
    pub right: Option<String>,
    pub first: ConflictSide,
    pub second: ConflictSide,
    pub reason: String,
}

/// Result of aggregating several RoPs or QoPs.
///
/// `rules` is populated for RoP aggregates, `claims` and
/// `accepted_obligations` for QoP aggregates. An empty `conflicts` list means
/// the aggregation succeeded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregatedPolicy {
    pub members: Vec<PolicyRef>,
    pub rules: Vec<UconRule>,
    pub claims: Vec<OwnedClaim>,
    pub accepted_obligations: Vec<String>,
    pub conflicts: Vec<ConflictRecord>,
}

impl AggregatedPolicy {
    pub fn is_consistent(&self) -> bool {
        self.conflicts.is_empty()
    }

    /// Distinct rights named by the aggregated rules, in first-seen order.
    pub fn rights(&self) -> Vec<&str> {
        let mut rights = Vec::new();
        for rule in &self.rules {
            if !rights.contains(&rule.right.as_str()) {
                rights.push(rule.right.as_str());
            }
        }
        rights
    }
}

/// Aggregation scope: rules tagged `dp` bind only the direct partner, so they
/// are dropped from an aggregate carried beyond the first hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    DirectPartner,
    EndOfTransaction,
}

/// Whether two predicates on the same attribute can hold at once.
pub fn jointly_satisfiable(p: &AttributePredicate, q: &AttributePredicate) -> bool {
    use PredOp::*;
    let pv = &p.value;
    let qv = &q.value;
    let scalar = |v: &PredValue| match v {
        PredValue::Scalar(s) => Some(s.clone()),
        PredValue::Set(_) => None,
    };
    let set = |v: &PredValue| match v {
        PredValue::Set(s) => Some(s.clone()),
        PredValue::Scalar(_) => None,
    };
    let cmp = |a: &AttrValue, b: &AttrValue| a.partial_cmp_same_type(b);
    match (p.op, q.op) {
        (Eq, Eq) => match (scalar(pv), scalar(qv)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
        (Eq, Neq) | (Neq, Eq) => {
            let (e, n) = if p.op == Eq { (scalar(pv), scalar(qv)) } else { (scalar(qv), scalar(pv)) };
            matches!((e, n), (Some(a), Some(b)) if a != b)
        }
        (Eq, Geq) | (Geq, Eq) => {
            let (e, g) = if p.op == Eq { (scalar(pv), scalar(qv)) } else { (scalar(qv), scalar(pv)) };
            matches!((e, g), (Some(a), Some(b)) if matches!(cmp(&a, &b), Some(Ordering::Greater | Ordering::Equal)))
        }
        (Eq, Leq) | (Leq, Eq) => {
            let (e, l) = if p.op == Eq { (scalar(pv), scalar(qv)) } else { (scalar(qv), scalar(pv)) };
            matches!((e, l), (Some(a), Some(b)) if matches!(cmp(&a, &b), Some(Ordering::Less | Ordering::Equal)))
        }
        (Eq, InSet) | (InSet, Eq) => {
            let (e, s) = if p.op == Eq { (scalar(pv), set(qv)) } else { (scalar(qv), set(pv)) };
            matches!((e, s), (Some(a), Some(members)) if members.contains(&a))
        }
        (Neq, Neq) | (Neq, Geq) | (Geq, Neq) | (Neq, Leq) | (Leq, Neq) => true,
        (Neq, InSet) | (InSet, Neq) => {
            let (n, s) = if p.op == Neq { (scalar(pv), set(qv)) } else { (scalar(qv), set(pv)) };
            matches!((n, s), (Some(a), Some(members)) if members.iter().any(|m| *m != a))
        }
        (Geq, Geq) | (Leq, Leq) => true,
        (Geq, Leq) | (Leq, Geq) => {
            let (g, l) = if p.op == Geq { (scalar(pv), scalar(qv)) } else { (scalar(qv), scalar(pv)) };
            matches!((g, l), (Some(a), Some(b)) if matches!(cmp(&a, &b), Some(Ordering::Less | Ordering::Equal)))
        }
        (Geq, InSet) | (InSet, Geq) => {
            let (g, s) = if p.op == Geq { (scalar(pv), set(qv)) } else { (scalar(qv), set(pv)) };
            matches!((g, s), (Some(a), Some(members))
                if members.iter().any(|m| matches!(cmp(m, &a), Some(Ordering::Greater | Ordering::Equal))))
        }
        (Leq, InSet) | (InSet, Leq) => {
            let (l, s) = if p.op == Leq { (scalar(pv), set(qv)) } else { (scalar(qv), set(pv)) };
            matches!((l, s), (Some(a), Some(members))
                if members.iter().any(|m| matches!(cmp(m, &a), Some(Ordering::Less | Ordering::Equal))))
        }
        (InSet, InSet) => match (set(pv), set(qv)) {
            (Some(a), Some(b)) => a.iter().any(|m| b.contains(m)),
            _ => false,
        },
    }
}

fn conflict_record(
    right: Option<&str>,
    a_party: &PartyId,
    a_pred: &AttributePredicate,
    b_party: &PartyId,
    b_pred: &AttributePredicate,
) -> ConflictRecord {
    // Canonical side order keeps the conflict set stable under input
    // permutation.
    let mut first = ConflictSide { party: a_party.clone(), predicate: a_pred.clone() };
    let mut second = ConflictSide { party: b_party.clone(), predicate: b_pred.clone() };
    let key = |s: &ConflictSide| {
        (s.party.clone(), s.predicate.op, alloc::format!("{:?}", s.predicate.value))
    };
    if key(&second) < key(&first) {
        core::mem::swap(&mut first, &mut second);
    }
    ConflictRecord {
        attribute: a_pred.attribute.clone(),
        scope: a_pred.scope,
        right: right.map(|r| r.to_string()),
        reason: alloc::format!(
            "predicates on `{}` cannot hold at once: {:?} {:?} vs {:?} {:?}",
            a_pred.attribute, first.predicate.op, first.predicate.value,
            second.predicate.op, second.predicate.value
        ),
        first,
        second,
    }
}

/// Aggregates providers' RoPs. Rules tagged `dp` survive only a
/// direct-partner aggregate; `eot` rules are always carried. Conflicts pair
/// requirements on the same attribute and right that no consumer could
/// satisfy together.
pub fn aggregate_rops(rops: &[Rop], boundary: Boundary) -> AggregatedPolicy {
    let mut agg = AggregatedPolicy::default();
    for rop in rops {
        agg.members.push(PolicyRef::rop(rop.owner.clone(), rop.asset.clone()));
        for rule in &rop.rules {
            if boundary == Boundary::EndOfTransaction && rule.lifecycle == Lifecycle::Dp {
                continue;
            }
            let mut rule = rule.clone();
            rule.stakeholder.get_or_insert_with(|| rop.owner.clone());
            agg.rules.push(rule);
        }
    }
    for i in 0..agg.rules.len() {
        for j in i + 1..agg.rules.len() {
            let (a, b) = (&agg.rules[i], &agg.rules[j]);
            if a.right != b.right {
                continue;
            }
            for pa in a.consumer_conditions() {
                for pb in b.consumer_conditions() {
                    if pa.attribute == pb.attribute
                        && pa.scope == pb.scope
                        && !jointly_satisfiable(pa, pb)
                    {
                        let a_party = a.stakeholder.clone().expect("stakeholder filled above");
                        let b_party = b.stakeholder.clone().expect("stakeholder filled above");
                        let rec = conflict_record(Some(&a.right), &a_party, pa, &b_party, pb);
                        if !agg.conflicts.contains(&rec) {
                            agg.conflicts.push(rec);
                        }
                    }
                }
            }
        }
    }
    agg.conflicts.sort_by(|a, b| alloc::format!("{a:?}").cmp(&alloc::format!("{b:?}")));
    agg
}

/// Aggregates consumers' QoPs. Claims are unioned (kept per party),
/// contradictory claims on one attribute become conflicts, and the aggregate
/// only accepts obligations every member accepts.
pub fn aggregate_qops(qops: &[Qop]) -> AggregatedPolicy {
    let mut agg = AggregatedPolicy::default();
    let mut obligations: Option<BTreeSet<String>> = None;
    for qop in qops {
        agg.members.push(PolicyRef::qop(qop.owner.clone()));
        for claim in &qop.claims {
            agg.claims.push(OwnedClaim { party: qop.owner.clone(), predicate: claim.clone() });
        }
        let accepted: BTreeSet<String> = qop.accepted_obligations.iter().cloned().collect();
        obligations = Some(match obligations {
            None => accepted,
            Some(prev) => prev.intersection(&accepted).cloned().collect(),
        });
    }
    agg.accepted_obligations = obligations.unwrap_or_default().into_iter().collect();
    for i in 0..agg.claims.len() {
        for j in i + 1..agg.claims.len() {
            let (a, b) = (&agg.claims[i], &agg.claims[j]);
            if a.predicate.attribute == b.predicate.attribute
                && a.predicate.scope == b.predicate.scope
                && !jointly_satisfiable(&a.predicate, &b.predicate)
            {
                let rec = conflict_record(None, &a.party, &a.predicate, &b.party, &b.predicate);
                if !agg.conflicts.contains(&rec) {
                    agg.conflicts.push(rec);
                }
            }
        }
    }
    agg.conflicts.sort_by(|a, b| alloc::format!("{a:?}").cmp(&alloc::format!("{b:?}")));
    agg
}

/// Aggregates the RoPs behind a context's policy references.
///
/// The `direct` party is the provider the consumer faces, so its rules bind
/// with direct-partner scope while upstream providers contribute only rules
/// kept until the end of the transaction. References to identifiable assets
/// stay apart: each such provider's policy is appended without cross-conflict
/// checks, since an identifiable original asset never merges its policy list
/// with the others (each asset keeps its own group).
pub fn aggregate_context_rops(
    bundle: &PolicyBundle,
    refs: &[PolicyRef],
    direct: Option<&PartyId>,
) -> Result<AggregatedPolicy, PolicyError> {
    let mut pooled: Vec<Rop> = Vec::new();
    let mut separate: Vec<Rop> = Vec::new();
    for r in refs.iter().filter(|r| r.kind == PolicyKind::Rop) {
        let mut rop = bundle.resolve_rop(&r.party, r.asset.as_ref())?.clone();
        if rop.asset.is_none() {
            rop.asset = r.asset.clone();
        }
        let identifiable = r.asset.as_ref().map(|a| bundle.is_identifiable(a)).unwrap_or(false);
        if identifiable {
            separate.push(rop);
        } else {
            pooled.push(rop);
        }
    }
    let (pool_direct, pool_upstream): (Vec<Rop>, Vec<Rop>) = match direct {
        None => (pooled, Vec::new()),
        Some(d) => pooled.into_iter().partition(|r| r.owner == *d),
    };
    let mut agg = aggregate_rops(&pool_direct, Boundary::DirectPartner);
    let upstream = aggregate_rops(&pool_upstream, Boundary::EndOfTransaction);
    agg.members.extend(upstream.members);
    agg.rules.extend(upstream.rules);
    agg.conflicts.extend(upstream.conflicts);
    for rop in separate {
        let boundary = match direct {
            Some(d) if rop.owner == *d => Boundary::DirectPartner,
            Some(_) => Boundary::EndOfTransaction,
            None => Boundary::DirectPartner,
        };
        let one = aggregate_rops(core::slice::from_ref(&rop), boundary);
        agg.members.extend(one.members);
        agg.rules.extend(one.rules);
        agg.conflicts.extend(one.conflicts);
    }
    Ok(agg)
}

/// A rule that a QoP aggregate failed to satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmetRule {
    pub stakeholder: Option<PartyId>,
    pub right: String,
    pub missing_predicates: Vec<AttributePredicate>,
    pub missing_obligations: Vec<String>,
}

/// Outcome of a negotiation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Satisfied,
    Denied { unmet: Vec<UnmetRule> },
}

impl Decision {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, Decision::Satisfied)
    }
}

/// Does one member's claim guarantee the rule predicate for every value the
/// claim allows?
fn claim_entails(claim: &AttributePredicate, pred: &AttributePredicate) -> bool {
    use PredOp::*;
    match (&claim.op, &claim.value) {
        (Eq, PredValue::Scalar(v)) => pred.holds_at(v),
        (InSet, PredValue::Set(values)) => {
            !values.is_empty() && values.iter().all(|v| pred.holds_at(v))
        }
        (Neq, PredValue::Scalar(v)) => {
            pred.op == Neq && pred.value == PredValue::Scalar(v.clone())
        }
        (Geq, PredValue::Scalar(a)) => match (&pred.op, &pred.value) {
            (Geq, PredValue::Scalar(b)) => {
                matches!(a.partial_cmp_same_type(b), Some(Ordering::Greater | Ordering::Equal))
            }
            (Neq, PredValue::Scalar(b)) => {
                matches!(b.partial_cmp_same_type(a), Some(Ordering::Less))
            }
            _ => false,
        },
        (Leq, PredValue::Scalar(a)) => match (&pred.op, &pred.value) {
            (Leq, PredValue::Scalar(b)) => {
                matches!(a.partial_cmp_same_type(b), Some(Ordering::Less | Ordering::Equal))
            }
            (Neq, PredValue::Scalar(b)) => {
                matches!(b.partial_cmp_same_type(a), Some(Ordering::Greater))
            }
            _ => false,
        },
        _ => false,
    }
}

/// Every aggregate member must hold a claim on the predicate's attribute that
/// entails it.
fn aggregate_entails(qop: &AggregatedPolicy, pred: &AttributePredicate) -> bool {
    let members: BTreeSet<&PartyId> = qop.members.iter().map(|m| &m.party).collect();
    if members.is_empty() {
        return false;
    }
    members.iter().all(|party| {
        let mut saw_attribute = false;
        let mut entailed = false;
        for claim in qop.claims.iter().filter(|c| c.party == **party) {
            if claim.predicate.attribute == pred.attribute && claim.predicate.scope == pred.scope {
                saw_attribute = true;
                if claim_entails(&claim.predicate, pred) {
                    entailed = true;
                }
            }
        }
        saw_attribute && entailed
    })
}

/// Checks a consumer aggregate against every rule the provider aggregate
/// holds for `right`. An empty rule set satisfies vacuously.
pub fn negotiate(
    vocabulary: &Vocabulary,
    qop: &AggregatedPolicy,
    rop: &AggregatedPolicy,
    right: &str,
) -> Result<Decision, PolicyError> {
    if !vocabulary.rights.contains(right) {
        return Err(PolicyError::UnknownRight { right: right.to_string() });
    }
    let accepted: BTreeSet<&str> = qop.accepted_obligations.iter().map(|s| s.as_str()).collect();
    let mut unmet = Vec::new();
    for rule in rop.rules.iter().filter(|r| r.right == right) {
        let missing_predicates: Vec<_> = rule
            .consumer_conditions()
            .filter(|pred| !aggregate_entails(qop, pred))
            .cloned()
            .collect();
        let missing_obligations: Vec<_> = rule
            .obligations
            .iter()
            .filter(|ob| !accepted.contains(ob.as_str()))
            .cloned()
            .collect();
        if !missing_predicates.is_empty() || !missing_obligations.is_empty() {
            unmet.push(UnmetRule {
                stakeholder: rule.stakeholder.clone(),
                right: rule.right.clone(),
                missing_predicates,
                missing_obligations,
            });
        }
    }
    if unmet.is_empty() {
        Ok(Decision::Satisfied)
    } else {
        Ok(Decision::Denied { unmet })
    }
}

/// Declared attribute types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrType {
    String,
    Number,
    Bool,
}

/// The attribute and right vocabulary a bundle is written against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub attributes: BTreeMap<String, AttrType>,
    pub rights: BTreeSet<String>,
}

/// A policy bundle: the vocabulary plus every party's RoPs and QoPs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub vocabulary: Vocabulary,
    /// Assets that stay identifiable inside collaboration artifacts; their
    /// providers' policies are never cross-checked against each other.
    #[serde(default)]
    pub identifiable_assets: Vec<AssetId>,
    #[serde(default)]
    pub rops: Vec<Rop>,
    #[serde(default)]
    pub qops: Vec<Qop>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("unknown right `{right}`")]
    UnknownRight { right: String },
    #[error("attribute `{attribute}` is not in the bundle vocabulary")]
    UnknownAttribute { attribute: String },
    #[error("attribute `{attribute}`: value does not match the declared {expected:?} type")]
    TypeMismatch { attribute: String, expected: AttrType },
    #[error("attribute `{attribute}`: {message}")]
    InvalidPredicate { attribute: String, message: String },
    #[error("party `{party}` claims contradictory values for `{attribute}`")]
    InconsistentClaims { party: String, attribute: String },
    #[error("no {kind:?} policy for party `{party}` in the bundle")]
    UnresolvedPolicyRef { kind: PolicyKind, party: String },
}

impl PolicyBundle {
    /// Structural validation: vocabulary coverage, value typing, operator
    /// arity, per-party claim consistency and stakeholder coherence.
    pub fn validate(&self) -> Result<(), PolicyError> {
        for rop in &self.rops {
            for rule in &rop.rules {
                if let Some(sh) = &rule.stakeholder {
                    if *sh != rop.owner {
                        return Err(PolicyError::InvalidPredicate {
                            attribute: rule.right.clone(),
                            message: alloc::format!(
                                "rule stakeholder `{sh}` differs from entry party `{}`",
                                rop.owner
                            ),
                        });
                    }
                }
                if rule.right.is_empty() || !self.vocabulary.rights.contains(&rule.right) {
                    return Err(PolicyError::UnknownRight { right: rule.right.clone() });
                }
                for pred in rule
                    .consumer_conditions()
                    .chain(rule.object_conditions.iter())
                {
                    self.check_predicate(pred)?;
                }
            }
        }
        for qop in &self.qops {
            for claim in &qop.claims {
                self.check_predicate(claim)?;
            }
            for (i, a) in qop.claims.iter().enumerate() {
                for b in qop.claims.iter().skip(i + 1) {
                    if a.attribute == b.attribute
                        && a.scope == b.scope
                        && !jointly_satisfiable(a, b)
                    {
                        return Err(PolicyError::InconsistentClaims {
                            party: qop.owner.to_string(),
                            attribute: a.attribute.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_predicate(&self, pred: &AttributePredicate) -> Result<(), PolicyError> {
        let Some(ty) = self.vocabulary.attributes.get(&pred.attribute) else {
            return Err(PolicyError::UnknownAttribute { attribute: pred.attribute.clone() });
        };
        let check_value = |v: &AttrValue| -> Result<(), PolicyError> {
            let ok = matches!(
                (ty, v),
                (AttrType::String, AttrValue::Str(_))
                    | (AttrType::Number, AttrValue::Num(_))
                    | (AttrType::Bool, AttrValue::Bool(_))
            );
            if ok {
                Ok(())
            } else {
                Err(PolicyError::TypeMismatch { attribute: pred.attribute.clone(), expected: *ty })
            }
        };
        match (&pred.op, &pred.value) {
            (PredOp::InSet, PredValue::Set(values)) => {
                if values.is_empty() {
                    return Err(PolicyError::InvalidPredicate {
                        attribute: pred.attribute.clone(),
                        message: "in_set needs at least one value".into(),
                    });
                }
                values.iter().try_for_each(check_value)?;
            }
            (PredOp::InSet, PredValue::Scalar(_)) => {
                return Err(PolicyError::InvalidPredicate {
                    attribute: pred.attribute.clone(),
                    message: "in_set takes a value list".into(),
                });
            }
            (PredOp::Geq | PredOp::Leq, PredValue::Scalar(v)) => {
                if *ty != AttrType::Number {
                    return Err(PolicyError::InvalidPredicate {
                        attribute: pred.attribute.clone(),
                        message: "ordering comparisons need a number attribute".into(),
                    });
                }
                check_value(v)?;
            }
            (_, PredValue::Scalar(v)) => check_value(v)?,
            (_, PredValue::Set(_)) => {
                return Err(PolicyError::InvalidPredicate {
                    attribute: pred.attribute.clone(),
                    message: alloc::format!("{:?} takes a scalar value", pred.op),
                });
            }
        }
        Ok(())
    }

    /// Resolves an RoP reference: an entry for the exact asset wins over the
    /// owner's catch-all entry.
    pub fn resolve_rop(&self, party: &PartyId, asset: Option<&AssetId>) -> Result<&Rop, PolicyError> {
        if let Some(asset) = asset {
            if let Some(rop) = self
                .rops
                .iter()
                .find(|r| r.owner == *party && r.asset.as_ref() == Some(asset))
            {
                return Ok(rop);
            }
        }
        self.rops
            .iter()
            .find(|r| r.owner == *party && r.asset.is_none())
            .or_else(|| self.rops.iter().find(|r| r.owner == *party))
            .ok_or_else(|| PolicyError::UnresolvedPolicyRef {
                kind: PolicyKind::Rop,
                party: party.to_string(),
            })
    }

    pub fn resolve_qop(&self, party: &PartyId) -> Result<&Qop, PolicyError> {
        self.qops.iter().find(|q| q.owner == *party).ok_or_else(|| {
            PolicyError::UnresolvedPolicyRef { kind: PolicyKind::Qop, party: party.to_string() }
        })
    }

    pub fn is_identifiable(&self, asset: &AssetId) -> bool {
        self.identifiable_assets.contains(asset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scg::party;
    use alloc::vec;

    pub fn pred(scope: AttrScope, attr: &str, op: PredOp, value: PredValue) -> AttributePredicate {
        AttributePredicate { scope, attribute: attr.into(), op, value }
    }

    pub fn s(v: &str) -> PredValue {
        PredValue::Scalar(AttrValue::Str(v.into()))
    }

    pub fn n(v: f64) -> PredValue {
        PredValue::Scalar(AttrValue::Num(v))
    }

    fn read_rule(owner: &str, conditions: Vec<AttributePredicate>) -> UconRule {
        UconRule {
            stakeholder: Some(party(owner)),
            subject_conditions: conditions,
            object_conditions: vec![],
            context_conditions: vec![],
            right: "read".into(),
            obligations: vec![],
            restrictions: vec![],
            lifecycle: Lifecycle::Eot,
        }
    }

    fn rop(owner: &str, rules: Vec<UconRule>) -> Rop {
        Rop { owner: party(owner), asset: None, rules }
    }

    #[test]
    fn contradictory_requirements_yield_one_conflict() {
        let a = rop("P1", vec![read_rule("P1", vec![pred(AttrScope::Subject, "encryption", PredOp::Eq, s("aes256"))])]);
        let b = rop("P2", vec![read_rule("P2", vec![pred(AttrScope::Subject, "encryption", PredOp::Eq, s("none"))])]);
        let agg = aggregate_rops(&[a, b], Boundary::EndOfTransaction);
        assert_eq!(agg.conflicts.len(), 1);
        assert_eq!(agg.conflicts[0].attribute, "encryption");
        assert_eq!(agg.conflicts[0].right.as_deref(), Some("read"));
        assert!(!agg.is_consistent());
    }

    #[test]
    fn single_rop_aggregates_to_itself() {
        let a = rop("P1", vec![read_rule("P1", vec![pred(AttrScope::Subject, "encryption", PredOp::Eq, s("aes256"))])]);
        let agg = aggregate_rops(core::slice::from_ref(&a), Boundary::DirectPartner);
        assert_eq!(agg.rules, a.rules);
        assert!(agg.conflicts.is_empty());
        assert_eq!(agg.members.len(), 1);
    }

    #[test]
    fn dp_rules_are_dropped_beyond_the_first_hop() {
        let mut dp_rule = read_rule("P1", vec![]);
        dp_rule.lifecycle = Lifecycle::Dp;
        let eot_rule = read_rule("P1", vec![pred(AttrScope::Subject, "x", PredOp::Eq, s("v"))]);
        let agg = aggregate_rops(&[rop("P1", vec![dp_rule.clone(), eot_rule.clone()])], Boundary::EndOfTransaction);
        assert_eq!(agg.rules, vec![eot_rule.clone()]);
        let direct = aggregate_rops(&[rop("P1", vec![dp_rule.clone(), eot_rule.clone()])], Boundary::DirectPartner);
        assert_eq!(direct.rules.len(), 2);
    }

    fn qop(owner: &str, claims: Vec<AttributePredicate>, obligations: &[&str]) -> Qop {
        Qop {
            owner: party(owner),
            claims,
            accepted_obligations: obligations.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn disjoint_claims_union_without_conflict() {
        let a = qop("E", vec![pred(AttrScope::Subject, "platform", PredOp::Eq, s("trusted"))], &["log"]);
        let b = qop("A", vec![pred(AttrScope::Subject, "clearance", PredOp::Eq, n(5.0))], &["log", "notify"]);
        let agg = aggregate_qops(&[a, b]);
        assert_eq!(agg.claims.len(), 2);
        assert!(agg.conflicts.is_empty());
        assert_eq!(agg.accepted_obligations, vec!["log".to_string()]);
    }

    #[test]
    fn contradictory_platform_claims_conflict() {
        let a = qop("E", vec![pred(AttrScope::Subject, "platform", PredOp::Eq, s("trusted"))], &[]);
        let b = qop("A", vec![pred(AttrScope::Subject, "platform", PredOp::Eq, s("untrusted"))], &[]);
        let agg = aggregate_qops(&[a, b]);
        assert_eq!(agg.conflicts.len(), 1);
        assert_eq!(agg.conflicts[0].attribute, "platform");
    }

    fn vocab() -> Vocabulary {
        let mut attributes = BTreeMap::new();
        attributes.insert("encryption".to_string(), AttrType::String);
        attributes.insert("clearance".to_string(), AttrType::Number);
        Vocabulary { attributes, rights: ["read".to_string()].into_iter().collect() }
    }

    #[test]
    fn empty_rop_is_vacuously_satisfied() {
        let q = aggregate_qops(&[qop("E", vec![], &[])]);
        let r = aggregate_rops(&[], Boundary::EndOfTransaction);
        assert!(negotiate(&vocab(), &q, &r, "read").unwrap().is_satisfied());
    }

    #[test]
    fn unknown_right_is_an_error() {
        let q = aggregate_qops(&[qop("E", vec![], &[])]);
        let r = aggregate_rops(&[], Boundary::EndOfTransaction);
        let err = negotiate(&vocab(), &q, &r, "disseminate").unwrap_err();
        assert_eq!(err, PolicyError::UnknownRight { right: "disseminate".into() });
    }

    #[test]
    fn denial_lists_the_unmet_rule_and_owner() {
        let r = aggregate_rops(
            &[rop("I", vec![read_rule("I", vec![pred(AttrScope::Subject, "clearance", PredOp::Geq, n(3.0))])])],
            Boundary::EndOfTransaction,
        );
        let q = aggregate_qops(&[qop("E", vec![pred(AttrScope::Subject, "clearance", PredOp::Eq, n(1.0))], &[])]);
        match negotiate(&vocab(), &q, &r, "read").unwrap() {
            Decision::Denied { unmet } => {
                assert_eq!(unmet.len(), 1);
                assert_eq!(unmet[0].stakeholder, Some(party("I")));
                assert_eq!(unmet[0].missing_predicates.len(), 1);
            }
            Decision::Satisfied => panic!("expected denial"),
        }
    }

    #[test]
    fn every_member_must_back_a_requirement() {
        let r = aggregate_rops(
            &[rop("H", vec![read_rule("H", vec![pred(AttrScope::Subject, "clearance", PredOp::Geq, n(3.0))])])],
            Boundary::EndOfTransaction,
        );
        let strong = qop("A", vec![pred(AttrScope::Subject, "clearance", PredOp::Eq, n(5.0))], &[]);
        let weak = qop("E", vec![pred(AttrScope::Subject, "clearance", PredOp::Eq, n(1.0))], &[]);
        let both = aggregate_qops(&[strong.clone(), weak]);
        assert!(!negotiate(&vocab(), &both, &r, "read").unwrap().is_satisfied());
        let alone = aggregate_qops(&[strong]);
        assert!(negotiate(&vocab(), &alone, &r, "read").unwrap().is_satisfied());
    }

    #[test]
    fn missing_obligation_denies() {
        let mut rule = read_rule("H", vec![]);
        rule.obligations = vec!["audit".into()];
        let r = aggregate_rops(&[rop("H", vec![rule])], Boundary::EndOfTransaction);
        let q = aggregate_qops(&[qop("E", vec![], &["log"])]);
        assert!(!negotiate(&vocab(), &q, &r, "read").unwrap().is_satisfied());
        let q = aggregate_qops(&[qop("E", vec![], &["audit"])]);
        assert!(negotiate(&vocab(), &q, &r, "read").unwrap().is_satisfied());
    }

    #[test]
    fn bundle_validation_catches_unknown_attribute_and_bad_claims() {
        let mut bundle = PolicyBundle {
            vocabulary: vocab(),
            identifiable_assets: vec![],
            rops: vec![rop("H", vec![read_rule("H", vec![pred(AttrScope::Subject, "mystery", PredOp::Eq, s("x"))])])],
            qops: vec![],
        };
        assert!(matches!(bundle.validate(), Err(PolicyError::UnknownAttribute { .. })));
        bundle.rops.clear();
        bundle.qops.push(qop(
            "E",
            vec![
                pred(AttrScope::Subject, "encryption", PredOp::Eq, s("aes256")),
                pred(AttrScope::Subject, "encryption", PredOp::Eq, s("none")),
            ],
            &[],
        ));
        assert!(matches!(bundle.validate(), Err(PolicyError::InconsistentClaims { .. })));
    }
}
