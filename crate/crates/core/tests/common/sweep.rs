//! Exhaustive small-topology sweep of the allocator against the oracle.

use std::time::{Duration, Instant};

use edgeai_core::sim::{allocate_capacity, Cell, Direction, Flow, SliceConfig};

use super::oracle::{allocate_oracle, is_floor_of, OFlow, OSlice};

pub fn to_cell(cap: i64, slices: &[OSlice]) -> Cell {
    Cell {
        cell_id: "c".into(),
        capacity_dl_mbps: cap as f64,
        capacity_ul_mbps: cap as f64,
        slices: slices
            .iter()
            .map(|s| SliceConfig {
                slice_id: s.id.to_string(),
                scheduling_weight: s.weight as f64,
                dedicated_ratio: s.ratio_quarters as f64 / 4.0,
            })
            .collect(),
        buffer_cap_ratio: 3.0,
    }
}

pub fn to_flows(flows: &[OFlow]) -> Vec<Flow> {
    flows
        .iter()
        .enumerate()
        .map(|(i, f)| Flow {
            flow_id: format!("f{i}"),
            ue_id: format!("u{i}"),
            direction: Direction::Uplink,
            slice_id: f.slice.to_string(),
            offered_mbps: f.offered as f64,
            gbr_mbps: f.gbr as f64,
            mbr_mbps: f.mbr.map(|m| m as f64),
            priority_level: f.prio,
            dest_node_id: "n".into(),
        })
        .collect()
}

/// Allocator output is the f64 floor of the oracle for every flow.
pub fn check(cap: i64, slices: &[OSlice], flows: &[OFlow]) -> Result<(), String> {
    let got = allocate_capacity(&to_cell(cap, slices), &to_flows(flows), Direction::Uplink);
    let want = allocate_oracle(cap, slices, flows);
    for (i, w) in want.iter().enumerate() {
        let g = got[&format!("f{i}")];
        if !is_floor_of(g, w) {
            return Err(format!("f{i}: got {g}, oracle {w} (cap {cap}, slices {slices:?}, flows {flows:?})"));
        }
    }
    Ok(())
}

fn cells() -> Vec<(i64, Vec<OSlice>)> {
    let s = |id, weight, ratio_quarters| OSlice { id, weight, ratio_quarters };
    vec![
        (10, vec![s("a", 1, 0), s("b", 1, 0)]),
        (20, vec![s("a", 2, 0), s("b", 1, 0)]),
        (20, vec![s("a", 1, 1), s("b", 3, 0)]),
        (17, vec![s("a", 1, 2), s("b", 1, 2)]),
    ]
}

fn flow_options() -> Vec<OFlow> {
    let mut out = Vec::new();
    for (offered, mbr) in [(4, None), (20, None), (20, Some(7))] {
        for gbr in [0, 6, 20] {
            for (prio, slice) in [(1, "a"), (2, "a"), (1, "b")] {
                out.push(OFlow {
                    slice,
                    offered,
                    gbr,
                    mbr,
                    prio,
                });
            }
        }
    }
    out
}

fn product(options: &[OFlow], n: usize) -> Vec<Vec<OFlow>> {
    let mut acc: Vec<Vec<OFlow>> = vec![Vec::new()];
    for _ in 0..n {
        acc = acc
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| {
                    let mut p = prefix.clone();
                    p.push(o.clone());
                    p
                })
            })
            .collect();
    }
    acc
}

pub struct Sweep {
    pub instances: usize,
    pub failures: Vec<String>,
    pub elapsed: Duration,
}

/// One to four flows with integer parameters up to 20 over four cell layouts.
pub fn exhaustive_sweep() -> Sweep {
    let start = Instant::now();
    let all = flow_options();
    let three: Vec<OFlow> = all.iter().step_by(3).cloned().collect();
    let four: Vec<OFlow> = all.iter().step_by(5).take(6).cloned().collect();
    let mut instances = 0usize;
    let mut failures = Vec::new();
    for (cap, slices) in cells() {
        for (n, opts) in [(1, &all), (2, &all), (3, &three), (4, &four)] {
            for flows in product(opts, n) {
                instances += 1;
                if let Err(e) = check(cap, &slices, &flows) {
                    failures.push(e);
                }
            }
        }
    }
    Sweep {
        instances,
        failures,
        elapsed: start.elapsed(),
    }
}
