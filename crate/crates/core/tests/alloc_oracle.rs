//! Capacity allocation against an independent exact oracle.
//!
//! The oracle finds the slice water level by trying every subset of
//! saturated slices rather than iterating, and does the in-slice split with
//! `i128` rationals. Integer inputs keep every quantity exact.

mod common;

use common::oracle::{OFlow, OSlice};
use common::sweep::{check, exhaustive_sweep, to_cell, to_flows};
use edgeai_core::sim::{allocate_capacity, Cell, Direction, Flow, SliceConfig};
use proptest::prelude::*;

#[test]
fn exhaustive_small_topologies_match_oracle() {
    let sw = exhaustive_sweep();
    assert!(sw.failures.is_empty(), "{} mismatches, first: {}", sw.failures.len(), sw.failures[0]);
    assert!(sw.instances >= 10_000, "only {} instances", sw.instances);
    println!("{} instances in {:?}", sw.instances, sw.elapsed);
}

#[test]
fn documented_examples() {
    let one = [OSlice { id: "s", weight: 1, ratio_quarters: 0 }];
    let f = |offered, gbr| OFlow {
        slice: "s",
        offered,
        gbr,
        mbr: None,
        prio: 9,
    };
    check(100, &one, &[f(10, 0)]).unwrap();
    check(100, &one, &[f(80, 0), f(80, 0)]).unwrap();
    let got = allocate_capacity(
        &to_cell(100, &one),
        &to_flows(&[f(60, 20), f(60, 0)]),
        Direction::Uplink,
    );
    assert_eq!(got["f0"], 20.0 + 80.0 * 40.0 / 100.0);
    assert_eq!(got["f1"], 48.0);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn random_integer_topologies(
        cap in 1i64..=20,
        wa in 0i64..=4, wb in 0i64..=4,
        ra in 0i64..=2, rb in 0i64..=2,
        flows in proptest::collection::vec(
            (prop_oneof![Just("a"), Just("b"), Just("z")], 0i64..=20, 0i64..=20, proptest::option::of(0i64..=20), 1u8..=3),
            1..=4,
        ),
    ) {
        let slices = [
            OSlice { id: "a", weight: wa, ratio_quarters: ra },
            OSlice { id: "b", weight: wb, ratio_quarters: rb },
        ];
        let flows: Vec<OFlow> = flows
            .into_iter()
            .map(|(slice, offered, gbr, mbr, prio)| OFlow { slice, offered, gbr, mbr, prio })
            .collect();
        prop_assert!(check(cap, &slices, &flows).is_ok(), "{:?}", check(cap, &slices, &flows));
    }

    #[test]
    fn allocation_invariants(
        cap in 1u32..=200,
        flows in proptest::collection::vec((0.0f64..150.0, 0.0f64..60.0, 1u8..=9), 1..=6),
    ) {
        let cell = Cell {
            cell_id: "c".into(),
            capacity_dl_mbps: cap as f64,
            capacity_ul_mbps: cap as f64,
            slices: vec![SliceConfig { slice_id: "s".into(), scheduling_weight: 1.0, dedicated_ratio: 0.0 }],
            buffer_cap_ratio: 3.0,
        };
        let fl: Vec<Flow> = flows
            .iter()
            .enumerate()
            .map(|(i, (o, g, p))| Flow {
                flow_id: format!("f{i}"),
                ue_id: format!("u{i}"),
                direction: Direction::Uplink,
                slice_id: "s".into(),
                offered_mbps: *o,
                gbr_mbps: *g,
                mbr_mbps: None,
                priority_level: *p,
                dest_node_id: "n".into(),
            })
            .collect();
        let a = allocate_capacity(&cell, &fl, Direction::Uplink);
        let total: f64 = a.values().sum();
        prop_assert!(total <= cap as f64 + 1e-9);
        for f in &fl {
            prop_assert!(a[&f.flow_id] <= f.offered_mbps);
            prop_assert!(a[&f.flow_id] >= 0.0);
        }
        let gbr_total: f64 = fl.iter().map(|f| f.gbr_mbps.min(f.offered_mbps)).sum();
        if gbr_total <= cap as f64 {
            for f in &fl {
                prop_assert!(a[&f.flow_id] + 1e-9 >= f.gbr_mbps.min(f.offered_mbps));
            }
        }
        let offered: f64 = fl.iter().map(|f| f.offered_mbps).sum();
        if offered >= cap as f64 {
            prop_assert!(total >= cap as f64 - 1e-6, "work conserving: {total} of {cap}");
        }
    }
}
