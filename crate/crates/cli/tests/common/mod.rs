//! Shared generators and independent oracles for the acceptance suite.

use std::collections::BTreeSet;

use bpslicer_core::scg::{asset, party, AssetId, PartyId, ServiceCallTuple, TupleKind};
use bpslicer_core::DependencyKind;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const PARTY_POOL: &[&str] = &["P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8"];
const ASSET_POOL: &[&str] = &["a1", "a2", "a3", "a4", "a5"];

/// A random tuple list over at most eight parties; kinds and payloads are
/// arbitrary, step labels unique.
pub fn random_trace(rng: &mut StdRng) -> Vec<ServiceCallTuple> {
    let n_parties = rng.gen_range(2..=PARTY_POOL.len());
    let n_tuples = rng.gen_range(1..=14);
    let mut tuples = Vec::new();
    for i in 0..n_tuples {
        let caller = party(PARTY_POOL[rng.gen_range(0..n_parties)]);
        let callee = party(PARTY_POOL[rng.gen_range(0..n_parties)]);
        let step = format!("t{i}");
        let pick_assets = |rng: &mut StdRng| -> Vec<AssetId> {
            let count = rng.gen_range(1..=2);
            let mut assets = Vec::new();
            for _ in 0..count {
                let a = asset(ASSET_POOL[rng.gen_range(0..ASSET_POOL.len())]);
                if !assets.contains(&a) {
                    assets.push(a);
                }
            }
            assets
        };
        let tuple = match rng.gen_range(0..6) {
            0 => Ok(ServiceCallTuple::control_call(step, caller, callee)),
            1 => ServiceCallTuple::new(step, caller, callee, TupleKind::ControlResponse, vec![], vec![], true),
            2 => ServiceCallTuple::new(step, caller, callee, TupleKind::DataCall, pick_assets(rng), vec![], true),
            3 => ServiceCallTuple::new(step, caller, callee, TupleKind::DataResponse, vec![], pick_assets(rng), true),
            4 => {
                let ins = if rng.gen_bool(0.7) { pick_assets(rng) } else { vec![] };
                let outs = if rng.gen_bool(0.7) { pick_assets(rng) } else { vec![] };
                ServiceCallTuple::new(step, caller, callee, TupleKind::RoundTrip, ins, outs, rng.gen_bool(0.8))
            }
            _ => ServiceCallTuple::new(step, caller, callee, TupleKind::Failed, vec![], vec![], true),
        }
        .expect("generated tuples respect the kind invariants");
        tuples.push(tuple);
    }
    tuples
}

/// Direct dependencies re-derived from the tuple semantics, independent of
/// the graph implementation.
pub fn oracle_direct(tuples: &[ServiceCallTuple]) -> BTreeSet<(String, String, bool)> {
    let mut deps = BTreeSet::new();
    for t in tuples {
        let caller = t.caller.to_string();
        let callee = t.callee.to_string();
        match t.kind {
            TupleKind::ControlCall => {
                deps.insert((callee, caller, false));
            }
            TupleKind::ControlResponse => {
                deps.insert((caller, callee, false));
            }
            TupleKind::DataCall => {
                deps.insert((callee, caller, true));
            }
            TupleKind::DataResponse => {
                deps.insert((caller, callee, true));
            }
            TupleKind::RoundTrip => {
                if t.assets_in.is_empty() {
                    deps.insert((callee.clone(), caller.clone(), false));
                } else if t.includes_input {
                    deps.insert((callee.clone(), caller.clone(), true));
                }
                if !t.assets_out.is_empty() {
                    deps.insert((caller, callee, true));
                }
            }
            TupleKind::Failed => {}
        }
    }
    deps
}

struct PathSearch<'a> {
    deps: &'a BTreeSet<(String, String, bool)>,
    target: String,
    reached_any: bool,
    reached_pure_data: bool,
}

impl PathSearch<'_> {
    fn run(&mut self, current: &str, visited: &mut Vec<String>, pure_data: bool) {
        if self.reached_any && self.reached_pure_data {
            return;
        }
        for (from, to, is_data) in self.deps.iter() {
            if from != current {
                continue;
            }
            let chain_pure = pure_data && *is_data;
            if *to == self.target {
                self.reached_any = true;
                if chain_pure {
                    self.reached_pure_data = true;
                }
            }
            if !visited.contains(to) && *to != self.target {
                visited.push(to.clone());
                self.run(to, visited, chain_pure);
                visited.pop();
            }
        }
    }
}

/// Exhaustively enumerates dependency chains: a pure data chain witnesses a
/// data dependency, any chain containing a control edge a control one; a data
/// witness wins.
pub fn oracle_indirect(
    deps: &BTreeSet<(String, String, bool)>,
    a: &str,
    b: &str,
) -> Option<DependencyKind> {
    let mut search = PathSearch {
        deps,
        target: b.to_string(),
        reached_any: false,
        reached_pure_data: false,
    };
    let mut visited = vec![a.to_string()];
    search.run(a, &mut visited, true);
    if search.reached_pure_data {
        Some(DependencyKind::Data)
    } else if search.reached_any {
        Some(DependencyKind::Control)
    } else {
        None
    }
}

pub fn parties_of(tuples: &[ServiceCallTuple]) -> Vec<PartyId> {
    let mut parties = Vec::new();
    for t in tuples {
        for p in [&t.caller, &t.callee] {
            if !parties.contains(p) {
                parties.push(p.clone());
            }
        }
    }
    parties
}

/// A consistent request/response trace generator for slicing properties.
pub struct SliceTraceGen {
    rng: StdRng,
    outstanding: Vec<(PartyId, PartyId)>,
    known: Vec<AssetId>,
    next_asset: usize,
    next_step: usize,
}

impl SliceTraceGen {
    pub fn new(seed: u64) -> Self {
        SliceTraceGen {
            rng: StdRng::seed_from_u64(seed),
            outstanding: Vec::new(),
            known: Vec::new(),
            next_asset: 0,
            next_step: 0,
        }
    }

    fn step_label(&mut self) -> String {
        self.next_step += 1;
        format!("s{}", self.next_step)
    }

    fn fresh_asset(&mut self) -> AssetId {
        self.next_asset += 1;
        let a = asset(&format!("x{}", self.next_asset));
        self.known.push(a.clone());
        a
    }

    fn some_assets(&mut self) -> Vec<AssetId> {
        let mut assets = Vec::new();
        for _ in 0..self.rng.gen_range(1..=2) {
            let a = if self.known.is_empty() || self.rng.gen_bool(0.4) {
                self.fresh_asset()
            } else {
                self.known[self.rng.gen_range(0..self.known.len())].clone()
            };
            if !assets.contains(&a) {
                assets.push(a);
            }
        }
        assets
    }

    fn random_party(&mut self) -> PartyId {
        party(["A", "B", "C", "D", "E", "F"][self.rng.gen_range(0..6)])
    }

    pub fn trace(&mut self, len: usize) -> Vec<ServiceCallTuple> {
        let mut tuples = Vec::new();
        for _ in 0..len {
            if !self.outstanding.is_empty() && self.rng.gen_bool(0.4) {
                let idx = self.rng.gen_range(0..self.outstanding.len());
                let (caller, callee) = self.outstanding.remove(idx);
                let step = self.step_label();
                let outs = self.some_assets();
                tuples.push(
                    ServiceCallTuple::new(step, caller, callee, TupleKind::DataResponse, vec![], outs, true)
                        .unwrap(),
                );
                continue;
            }
            match self.rng.gen_range(0..5) {
                0 => {
                    let (a, b) = (self.random_party(), self.random_party());
                    if a == b {
                        continue;
                    }
                    let step = self.step_label();
                    self.outstanding.push((a.clone(), b.clone()));
                    tuples.push(ServiceCallTuple::control_call(step, a, b));
                }
                1 | 2 => {
                    let (a, b) = (self.random_party(), self.random_party());
                    if a == b {
                        continue;
                    }
                    let ins = self.some_assets();
                    let step = self.step_label();
                    self.outstanding.push((a.clone(), b.clone()));
                    tuples.push(
                        ServiceCallTuple::new(step, a, b, TupleKind::DataCall, ins, vec![], true).unwrap(),
                    );
                }
                3 => {
                    let (a, b) = (self.random_party(), self.random_party());
                    if a == b {
                        continue;
                    }
                    let ins = self.some_assets();
                    let outs = vec![self.fresh_asset()];
                    let step = self.step_label();
                    tuples.push(
                        ServiceCallTuple::new(step, a, b, TupleKind::RoundTrip, ins, outs, self.rng.gen_bool(0.8))
                            .unwrap(),
                    );
                }
                _ => {
                    let a = self.random_party();
                    let ins = self.some_assets();
                    let outs = vec![self.fresh_asset()];
                    let step = self.step_label();
                    tuples.push(
                        ServiceCallTuple::new(step, a.clone(), a, TupleKind::RoundTrip, ins, outs, true)
                            .unwrap(),
                    );
                }
            }
        }
        tuples
    }
}
