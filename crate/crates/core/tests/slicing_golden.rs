//! Frozen expectations for the two worked examples and the nested
//! on-behalf-of trace.

use bpslicer_core::slicer::{
    asset_slice, on_the_fly_slice, request_slice, slice_trace, SliceOptions,
};
use bpslicer_core::trace::parse_trace;
use bpslicer_core::ContextDevelopmentTuple;

const USE_CASE_2: &str = "\
# price inquiry collaboration
1: E -d-> A [in: o]
i+ii: A <-> B [in: o] [out: f] [noinc]
2.1: A -d-> C [in: o]
a.1+b.1: C <-> G [in: o] [out: m_G]
a.2+b.2: C <-f-> H
a.3+b.3: C <-f-> I
c: C <-> C [in: m_G, l] [out: v]
3.1: A <-d- C [out: v]
2.2+3.2: A <-> D [in: o] [out: u]
4: A <-> A [in: v, u, k] [out: r]
5+6: A <-> F [in: r] [out: n]
7: A <-> A [in: r, n] [out: t]
8: E <-d- A [out: t]
9: E <-> E [in: t]
";

/// The Protocol-3 example: X serves Y, is interrupted by Z, and the Y
/// relation resumes when pending callee P responds after X answers Z.
const NESTED_ON_BEHALF: &str = "\
1: Y -d-> X [in: i1]
2: X -d-> P [in: i2]
3: Z -d-> X [in: i3]
4: X <-> Q [in: i4] [out: o4]
5: Z <-d- X [out: o3]
6: X <-d- P [out: o2]
7: Y <-d- X [out: o1]
";

fn summary(t: &ContextDevelopmentTuple) -> (String, u32, Vec<(String, u32)>, Vec<String>, Vec<String>, String) {
    (
        t.name.clone(),
        t.version,
        t.parents.iter().map(|p| (p.name.clone(), p.version)).collect(),
        t.assets.iter().map(|a| a.as_str().to_string()).collect(),
        t.policies.iter().map(|p| p.party.as_str().to_string()).collect(),
        t.step.clone(),
    )
}

fn expect(
    name: &str,
    version: u32,
    parents: &[(&str, u32)],
    assets: &[&str],
    policies: &[&str],
    step: &str,
) -> (String, u32, Vec<(String, u32)>, Vec<String>, Vec<String>, String) {
    (
        name.into(),
        version,
        parents.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
        assets.iter().map(|s| s.to_string()).collect(),
        policies.iter().map(|s| s.to_string()).collect(),
        step.into(),
    )
}

#[test]
fn use_case_2_rop_chain_matches_the_published_lineage() {
    let tuples = parse_trace(USE_CASE_2).unwrap();
    let contexts = asset_slice(&tuples).unwrap();
    let got: Vec<_> = contexts.iter().map(summary).collect();
    let want = vec![
        expect("R_EA", 1, &[], &["o"], &["E"], "1"),
        expect("R_BA", 1, &[("R_EA", 1)], &["f"], &["B"], "ii"),
        expect("R_EA", 2, &[("R_EA", 1), ("R_BA", 1)], &["o", "f"], &["E", "B"], "ii"),
        expect("R_GC", 1, &[("R_EA", 2)], &["m_G"], &["E", "B", "G"], "b.1"),
        expect("R_GC", 2, &[("R_GC", 1)], &["m_G", "l"], &["E", "B", "G", "C"], "c"),
        expect("R_DA", 1, &[("R_EA", 2)], &["u"], &["E", "B", "D"], "3.2"),
        expect(
            "R_DA",
            2,
            &[("R_GC", 2), ("R_DA", 1)],
            &["u", "v", "k"],
            &["E", "B", "G", "C", "D", "A"],
            "4",
        ),
        expect(
            "R_DA",
            3,
            &[("R_DA", 2)],
            &["n"],
            &["E", "B", "G", "C", "D", "A", "F"],
            "6",
        ),
        expect(
            "R_DA",
            4,
            &[("R_DA", 3)],
            &["n", "r"],
            &["E", "B", "G", "C", "D", "A", "F"],
            "7",
        ),
    ];
    assert_eq!(got, want);
}

#[test]
fn use_case_2_qop_chain_splits_into_the_published_children() {
    let tuples = parse_trace(USE_CASE_2).unwrap();
    let contexts = request_slice(&tuples).unwrap();
    let got: Vec<_> = contexts.iter().map(summary).collect();
    let want = vec![
        expect("Q_EA", 1, &[], &[], &["E"], "1"),
        expect("Q_AB", 1, &[("Q_EA", 1)], &[], &["E", "A"], "i"),
        expect("Q_AC", 1, &[("Q_EA", 1)], &[], &["E", "A"], "2.1"),
        expect("Q_CG", 1, &[("Q_AC", 1)], &[], &["E", "A", "C"], "a.1"),
        expect("Q_CH", 1, &[("Q_AC", 1)], &[], &["E", "A", "C"], "a.2"),
        expect("Q_CI", 1, &[("Q_AC", 1)], &[], &["E", "A", "C"], "a.3"),
        expect("Q_AD", 1, &[("Q_EA", 1)], &[], &["E", "A"], "2.2"),
        expect("Q_AF", 1, &[("Q_EA", 1)], &[], &["E", "A"], "5"),
    ];
    assert_eq!(got, want);
}

#[test]
fn use_case_2_developments_interleave_in_step_order() {
    let tuples = parse_trace(USE_CASE_2).unwrap();
    let report = slice_trace(&tuples, SliceOptions::both(), None).unwrap();
    let got: Vec<(String, String, String)> = report
        .developments
        .iter()
        .map(|d| (d.step.clone(), format!("{:?}", d.kind).to_lowercase(), d.context.clone()))
        .collect();
    let want: Vec<(String, String, String)> = [
        ("1", "create", "Q_EA"),
        ("1", "create", "R_EA"),
        ("i", "create", "Q_AB"),
        ("ii", "create", "R_BA"),
        ("ii", "end", "R_BA"),
        ("ii", "merge", "R_EA"),
        ("2.1", "split", "Q_EA"),
        ("2.1", "create", "Q_AC"),
        ("a.1", "create", "Q_CG"),
        ("b.1", "create", "R_GC"),
        ("a.2", "split", "Q_AC"),
        ("a.2", "create", "Q_CH"),
        ("a.3", "create", "Q_CI"),
        ("c", "update", "R_GC"),
        ("2.2", "create", "Q_AD"),
        ("3.2", "split", "R_EA"),
        ("3.2", "create", "R_DA"),
        ("4", "end", "R_GC"),
        ("4", "merge", "R_DA"),
        ("5", "create", "Q_AF"),
        ("6", "update", "R_DA"),
        ("7", "update", "R_DA"),
        ("8", "end", "Q_EA"),
        ("9", "end", "R_EA"),
        ("9", "end", "R_DA"),
    ]
    .iter()
    .map(|(s, k, c)| (s.to_string(), k.to_string(), c.to_string()))
    .collect();
    assert_eq!(got, want);
}

#[test]
fn nested_on_behalf_attributes_late_responses_to_the_resumed_frame() {
    let tuples = parse_trace(NESTED_ON_BEHALF).unwrap();
    let report = slice_trace(&tuples, SliceOptions::both(), None).unwrap();

    let got_qop: Vec<_> = report.qop_contexts.iter().map(summary).collect();
    let want_qop = vec![
        expect("Q_YX", 1, &[], &[], &["Y"], "1"),
        expect("Q_YX", 2, &[("Q_YX", 1)], &[], &["Y", "X"], "2"),
        expect("Q_ZX", 1, &[], &[], &["Z"], "3"),
        expect("Q_ZX", 2, &[("Q_ZX", 1)], &[], &["Z", "X"], "4"),
    ];
    assert_eq!(got_qop, want_qop);

    let got_rop: Vec<_> = report.rop_contexts.iter().map(summary).collect();
    let want_rop = vec![
        expect("R_YX", 1, &[], &["i1"], &["Y"], "1"),
        expect("R_XP", 1, &[], &["i2"], &["X"], "2"),
        expect("R_ZX", 1, &[], &["i3"], &["Z"], "3"),
        expect("R_XQ", 1, &[], &["i4"], &["X"], "4"),
        expect("R_XQ", 2, &[("R_XQ", 1)], &["o4"], &["X", "Q"], "4"),
        expect("R_ZX", 2, &[("R_ZX", 1)], &["o3"], &["Z", "X"], "5"),
        expect("R_XP", 2, &[("R_XP", 1)], &["o2"], &["X", "P"], "6"),
        expect("R_YX", 2, &[("R_YX", 1)], &["o1"], &["Y", "X"], "7"),
    ];
    assert_eq!(got_rop, want_rop);

    let got_dev: Vec<(String, String, String)> = report
        .developments
        .iter()
        .map(|d| (d.step.clone(), format!("{:?}", d.kind).to_lowercase(), d.context.clone()))
        .collect();
    let want_dev: Vec<(String, String, String)> = [
        ("1", "create", "Q_YX"),
        ("1", "create", "R_YX"),
        ("2", "update", "Q_YX"),
        ("2", "create", "R_XP"),
        ("3", "create", "Q_ZX"),
        ("3", "create", "R_ZX"),
        ("4", "update", "Q_ZX"),
        ("4", "create", "R_XQ"),
        ("4", "update", "R_XQ"),
        ("5", "update", "R_ZX"),
        ("5", "end", "Q_ZX"),
        // The response from P resumes the X-on-behalf-of-Y relation, so the
        // remaining flows belong to the Y-rooted context.
        ("6", "update", "R_XP"),
        ("6", "update", "Q_YX"),
        ("7", "update", "R_YX"),
        ("7", "end", "Q_YX"),
        ("7", "end", "R_YX"),
        ("7", "end", "R_XP"),
        ("7", "end", "R_ZX"),
        ("7", "end", "R_XQ"),
    ]
    .iter()
    .map(|(s, k, c)| (s.to_string(), k.to_string(), c.to_string()))
    .collect();
    assert_eq!(got_dev, want_dev);
}

#[test]
fn on_the_fly_with_satisfiable_bundle_matches_independent_runs() {
    let tuples = parse_trace(USE_CASE_2).unwrap();
    let bundle: bpslicer_core::policy::PolicyBundle = serde_json::from_str(include_str!(
        "../../cli/testdata/bundles/usecase2_all_satisfiable.json"
    ))
    .unwrap();
    bundle.validate().unwrap();
    let report = on_the_fly_slice(&tuples, &bundle).unwrap();
    assert!(report.negotiations.iter().all(|n| n.outcome.is_satisfied()));
    assert_eq!(report.rop_contexts, asset_slice(&tuples).unwrap());
    assert_eq!(report.qop_contexts, request_slice(&tuples).unwrap());
}

#[test]
fn denials_surface_at_the_request_in_on_the_fly_mode() {
    let text = std::fs::read_to_string("../cli/testdata/traces/usecase2_optimistic.trace").unwrap();
    let tuples = parse_trace(&text).unwrap();
    let bundle: bpslicer_core::policy::PolicyBundle =
        serde_json::from_str(include_str!("../../cli/testdata/bundles/usecase2_qop_e_fails.json"))
            .unwrap();
    bundle.validate().unwrap();

    let report = on_the_fly_slice(&tuples, &bundle).unwrap();
    let denied: Vec<&str> = report
        .negotiations
        .iter()
        .filter(|n| !n.outcome.is_satisfied())
        .map(|n| n.step.as_str())
        .collect();
    assert_eq!(denied, ["a.2", "a.3"], "{:#?}", report.negotiations);
    // The pruned branches leave the same context chains as the recorded
    // trace with failed interactions.
    let recorded = parse_trace(
        &std::fs::read_to_string("../cli/testdata/traces/usecase2.trace").unwrap(),
    )
    .unwrap();
    assert_eq!(report.rop_contexts, asset_slice(&recorded).unwrap());
    assert_eq!(report.qop_contexts, request_slice(&recorded).unwrap());

    let asset_only =
        slice_trace(&tuples, SliceOptions::asset_only(), Some(&bundle)).unwrap();
    let first_denial = asset_only
        .negotiations
        .iter()
        .find(|n| !n.outcome.is_satisfied())
        .expect("the conflict must surface eventually");
    assert_eq!(first_denial.step, "8");
}

#[test]
fn providers_with_multiple_rights_split_contexts_per_right() {
    use bpslicer_core::policy::*;
    use bpslicer_core::slicer::samg_groups;

    let tuples = parse_trace("1: D -c-> B\n2: B -c-> C\n3: B <-d- C [out: e]\n4: B <-> B [in: e, m] [out: me]\n").unwrap();
    let contexts = asset_slice(&tuples).unwrap();

    let rule = |right: &str| UconRule {
        stakeholder: None,
        subject_conditions: vec![],
        object_conditions: vec![],
        context_conditions: vec![],
        right: right.into(),
        obligations: vec![],
        restrictions: vec![],
        lifecycle: Lifecycle::Eot,
    };
    let mut bundle = PolicyBundle::default();
    bundle.vocabulary.rights = ["read".to_string(), "disseminate".to_string()].into_iter().collect();
    bundle.rops.push(Rop {
        owner: bpslicer_core::scg::party("C"),
        asset: None,
        rules: vec![rule("read"), rule("disseminate")],
    });
    bundle.rops.push(Rop {
        owner: bpslicer_core::scg::party("B"),
        asset: None,
        rules: vec![rule("read")],
    });

    let groups = samg_groups(&contexts, &bundle).unwrap();
    // Both versions expand into a read group and a disseminate group.
    let names: Vec<&str> = groups.iter().map(|g| g.name.as_str()).collect();
    assert_eq!(names, ["R_CB#read", "R_CB#disseminate", "R_CB#read", "R_CB#disseminate"]);
    let read_v2 = &groups[2];
    assert_eq!(read_v2.version, 2);
    let parties: Vec<&str> = read_v2.policies.iter().map(|p| p.party.as_str()).collect();
    assert_eq!(parties, ["C", "B"], "both providers define read");
    let disseminate_v2 = &groups[3];
    let parties: Vec<&str> = disseminate_v2.policies.iter().map(|p| p.party.as_str()).collect();
    assert_eq!(parties, ["C"], "only C defines disseminate");

    // A single-right bundle is the single-group mode: tuples pass through.
    bundle.rops[0].rules.pop();
    let unchanged = samg_groups(&contexts, &bundle).unwrap();
    assert_eq!(unchanged, contexts);
}
