//! Render/parse round-trip over generated tuple lists.

use bpslicer_core::scg::{AssetId, PartyId, ServiceCallTuple, TupleKind};
use bpslicer_core::trace::{parse_trace, render_trace};
use proptest::prelude::*;

fn name_strategy() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9_.-]{0,6}"
}

fn assets_strategy() -> impl Strategy<Value = Vec<AssetId>> {
    proptest::collection::btree_set(name_strategy(), 1..3)
        .prop_map(|set| set.into_iter().map(|s| AssetId::new(s).unwrap()).collect())
}

fn tuple_strategy() -> impl Strategy<Value = ServiceCallTuple> {
    (
        0usize..6,
        name_strategy(),
        name_strategy(),
        assets_strategy(),
        assets_strategy(),
        proptest::bool::ANY,
    )
        .prop_map(|(kind, caller, callee, ins, outs, includes)| {
            let caller = PartyId::new(caller).unwrap();
            let callee = PartyId::new(callee).unwrap();
            match kind {
                0 => ServiceCallTuple::control_call("s", caller, callee),
                1 => ServiceCallTuple::new("s", caller, callee, TupleKind::ControlResponse, vec![], vec![], true)
                    .unwrap(),
                2 => ServiceCallTuple::new("s", caller, callee, TupleKind::DataCall, ins, vec![], true).unwrap(),
                3 => ServiceCallTuple::new("s", caller, callee, TupleKind::DataResponse, vec![], outs, true)
                    .unwrap(),
                4 => ServiceCallTuple::new("s", caller, callee, TupleKind::RoundTrip, ins, outs, includes)
                    .unwrap(),
                _ => ServiceCallTuple::failed("s", caller, callee),
            }
        })
}

proptest! {
    #[test]
    fn parse_after_render_is_identity(tuples in proptest::collection::vec(tuple_strategy(), 0..12)) {
        let tuples: Vec<ServiceCallTuple> = tuples
            .into_iter()
            .enumerate()
            .map(|(i, mut t)| {
                t.step = format!("s{i}.{}", i + 1);
                t
            })
            .collect();
        let rendered = render_trace(&tuples);
        let parsed = parse_trace(&rendered).unwrap();
        prop_assert_eq!(parsed, tuples);
    }
}
