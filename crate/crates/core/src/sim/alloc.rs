//! Two-phase water-filling capacity allocation.
//!
//! Phase one divides a cell's capacity among slices: every slice owns
//! `dedicated_ratio * C` outright and the remaining pool is water-filled by
//! `scheduling_weight`, so a slice that needs less than its weighted share
//! hands the excess to the others. Phase two divides a slice's capacity among
//! its flows: GBR amounts are granted in ascending `priority_level` order
//! (ties by `flow_id`), then whatever is left is split proportionally to each
//! flow's residual demand.
//!
//! All arithmetic is exact (arbitrary precision rationals). Results are
//! rounded toward zero when converted back to `f64`, so the sum of returned
//! allocations never exceeds the cell capacity.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use super::{Cell, Direction, Flow};

pub(crate) fn exact(x: f64) -> BigRational {
    if x.is_finite() && x > 0.0 {
        BigRational::from_float(x).unwrap_or_else(BigRational::zero)
    } else {
        BigRational::zero()
    }
}

/// Largest `f64` not greater than `r` (for non-negative `r`).
pub(crate) fn floor_f64(r: &BigRational) -> f64 {
    if !r.is_positive() {
        return 0.0;
    }
    let mut x = r.to_f64().unwrap_or(f64::MAX);
    while x > 0.0 && exact(x) > *r {
        x = x.next_down();
    }
    x
}

/// Demand a flow presents to the scheduler: offered load capped at its MBR.
pub fn effective_demand(flow: &Flow) -> f64 {
    let offered = flow.offered_mbps.max(0.0);
    match flow.mbr_mbps {
        Some(mbr) if mbr >= 0.0 => offered.min(mbr),
        _ => offered,
    }
}

/// Allocate `cell`'s capacity in `direction` among `flows`.
///
/// Flows in a different direction are ignored. Flows naming a slice the cell
/// does not configure receive nothing.
pub fn allocate_capacity(cell: &Cell, flows: &[Flow], direction: Direction) -> BTreeMap<String, f64> {
    let capacity = exact(cell.capacity(direction));
    let flows: Vec<&Flow> = flows.iter().filter(|f| f.direction == direction).collect();

    let mut out: BTreeMap<String, f64> = flows.iter().map(|f| (f.flow_id.clone(), 0.0)).collect();
    if flows.is_empty() {
        return out;
    }

    let demand: BTreeMap<&str, BigRational> = flows
        .iter()
        .map(|f| (f.flow_id.as_str(), exact(effective_demand(f))))
        .collect();

    // Phase one: per-slice capacity.
    let mut slice_demand: Vec<BigRational> = vec![BigRational::zero(); cell.slices.len()];
    for f in &flows {
        if let Some(i) = cell.slices.iter().position(|s| s.slice_id == f.slice_id) {
            slice_demand[i] += &demand[f.flow_id.as_str()];
        }
    }
    let dedicated: Vec<BigRational> = cell
        .slices
        .iter()
        .map(|s| exact(s.dedicated_ratio.clamp(0.0, 1.0)) * &capacity)
        .collect();
    let mut pool = capacity.clone();
    for d in &dedicated {
        pool -= d;
    }
    if pool < BigRational::zero() {
        pool = BigRational::zero();
    }
    let mut slice_cap = dedicated.clone();
    let excess: Vec<BigRational> = slice_demand
        .iter()
        .zip(&dedicated)
        .map(|(d, ded)| if d > ded { d - ded } else { BigRational::zero() })
        .collect();
    let weights: Vec<BigRational> = cell.slices.iter().map(|s| exact(s.scheduling_weight)).collect();
    let mut active: Vec<usize> = (0..cell.slices.len())
        .filter(|&i| !excess[i].is_zero() && !weights[i].is_zero())
        .collect();
    while !active.is_empty() && !pool.is_zero() {
        let total_w: BigRational = active.iter().map(|&i| weights[i].clone()).sum();
        let saturated: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| excess[i] <= &pool * &weights[i] / &total_w)
            .collect();
        if saturated.is_empty() {
            for &i in &active {
                slice_cap[i] += &pool * &weights[i] / &total_w;
            }
            break;
        }
        for &i in &saturated {
            slice_cap[i] += &excess[i];
            pool -= &excess[i];
        }
        active.retain(|i| !saturated.contains(i));
    }

    // Phase two: within each slice.
    for (i, slice) in cell.slices.iter().enumerate() {
        let mut members: Vec<&Flow> = flows.iter().copied().filter(|f| f.slice_id == slice.slice_id).collect();
        if members.is_empty() {
            continue;
        }
        members.sort_by(|a, b| a.priority_level.cmp(&b.priority_level).then_with(|| a.flow_id.cmp(&b.flow_id)));

        let mut remaining = slice_cap[i].clone();
        let mut granted: Vec<BigRational> = Vec::with_capacity(members.len());
        for f in &members {
            let want = exact(f.gbr_mbps).min(demand[f.flow_id.as_str()].clone());
            let g = want.min(remaining.clone());
            remaining -= &g;
            granted.push(g);
        }
        let residual: Vec<BigRational> = members
            .iter()
            .zip(&granted)
            .map(|(f, g)| &demand[f.flow_id.as_str()] - g)
            .collect();
        let total_residual: BigRational = residual.iter().cloned().sum();
        for ((f, g), r) in members.iter().zip(&granted).zip(&residual) {
            let alloc = if total_residual <= remaining {
                g + r
            } else {
                g + &remaining * r / &total_residual
            };
            out.insert(f.flow_id.clone(), floor_f64(&alloc));
        }
    }
    out
}
