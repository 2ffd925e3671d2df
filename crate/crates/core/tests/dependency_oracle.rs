//! Randomized cross-check of the indirect dependency query against an
//! exhaustive path oracle: every simple dependency chain is enumerated, a
//! chain of pure data edges witnesses a data dependency, any chain with a
//! control edge witnesses a control dependency, and a data witness wins.

use std::collections::BTreeSet;

use bpslicer_core::scg::{asset, party, ServiceCallGraph, ServiceCallTuple, TupleKind};
use bpslicer_core::DependencyKind;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const PARTY_POOL: &[&str] = &["P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8"];
const ASSET_POOL: &[&str] = &["a1", "a2", "a3", "a4", "a5"];

fn random_trace(rng: &mut StdRng) -> Vec<ServiceCallTuple> {
    let n_parties = rng.gen_range(2..=PARTY_POOL.len());
    let n_tuples = rng.gen_range(1..=14);
    let mut tuples = Vec::new();
    for i in 0..n_tuples {
        let caller = party(PARTY_POOL[rng.gen_range(0..n_parties)]);
        let callee = party(PARTY_POOL[rng.gen_range(0..n_parties)]);
        let step = format!("t{i}");
        let pick_assets = |rng: &mut StdRng| -> Vec<_> {
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
                let includes = rng.gen_bool(0.8);
                ServiceCallTuple::new(step, caller, callee, TupleKind::RoundTrip, ins, outs, includes)
            }
            _ => ServiceCallTuple::new(step, caller, callee, TupleKind::Failed, vec![], vec![], true),
        }
        .expect("generated tuples respect the kind invariants");
        tuples.push(tuple);
    }
    tuples
}

/// Direct dependencies re-derived from first principles, independent of the
/// graph implementation: calls make the callee depend on the caller (control
/// when nothing is carried, data when assets are), responses make the
/// receiver data-dependent on the sender, a non-including round trip does not
/// taint the callee, and failed interactions derive nothing.
fn oracle_direct(tuples: &[ServiceCallTuple]) -> BTreeSet<(String, String, bool)> {
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

fn oracle_indirect(
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

#[test]
fn indirect_dependency_agrees_with_exhaustive_path_enumeration() {
    let mut rng = StdRng::seed_from_u64(0x5c9d_0de7);
    for round in 0..200 {
        let tuples = random_trace(&mut rng);
        let graph = ServiceCallGraph::from_tuples(tuples.clone()).unwrap();
        let deps = oracle_direct(&tuples);
        let mut parties: Vec<String> = Vec::new();
        for t in &tuples {
            for p in [&t.caller, &t.callee] {
                if !parties.contains(&p.to_string()) {
                    parties.push(p.to_string());
                }
            }
        }
        for a in &parties {
            for b in &parties {
                let got = graph.indirect_dependency(&party(a), &party(b)).unwrap();
                let want = oracle_indirect(&deps, a, b);
                assert_eq!(
                    got, want,
                    "round {round}: disagreement on ({a}, {b}) for trace {tuples:?}"
                );
            }
        }
    }
}
