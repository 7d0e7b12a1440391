//! Brute-force reference allocation over small integer inputs.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};

pub type Q = Ratio<i128>;

#[derive(Debug, Clone)]
pub struct OSlice {
    pub id: &'static str,
    pub weight: i64,
    /// Dedicated share in quarters of the capacity.
    pub ratio_quarters: i64,
}

#[derive(Debug, Clone)]
pub struct OFlow {
    pub slice: &'static str,
    pub offered: i64,
    pub gbr: i64,
    pub mbr: Option<i64>,
    pub prio: u8,
}

fn q(n: i64) -> Q {
    Q::from_integer(n as i128)
}

/// Per-slice capacity by trying every saturated subset.
fn slice_caps(cap: i64, slices: &[OSlice], demand: &[Q]) -> Vec<Q> {
    let c = q(cap);
    let ded: Vec<Q> = slices.iter().map(|s| c * Q::new(s.ratio_quarters as i128, 4)).collect();
    let pool = (c - ded.iter().sum::<Q>()).max(q(0));
    let excess: Vec<Q> = demand.iter().zip(&ded).map(|(d, e)| (*d - *e).max(q(0))).collect();
    let active: Vec<usize> = (0..slices.len())
        .filter(|&i| excess[i] > q(0) && slices[i].weight > 0)
        .collect();
    let mut found: Option<Vec<Q>> = None;
    for mask in 0u32..(1 << active.len()) {
        let sat: Vec<usize> = (0..active.len()).filter(|k| mask & (1 << k) != 0).map(|k| active[k]).collect();
        let rest: Vec<usize> = (0..active.len()).filter(|k| mask & (1 << k) == 0).map(|k| active[k]).collect();
        let used: Q = sat.iter().map(|&i| excess[i]).sum();
        let mut caps = ded.clone();
        for &i in &sat {
            caps[i] += excess[i];
        }
        let ok = if rest.is_empty() {
            used <= pool
        } else {
            let w: i64 = rest.iter().map(|&i| slices[i].weight).sum();
            let lambda = (pool - used) / q(w);
            let ok = lambda >= q(0)
                && sat.iter().all(|&i| excess[i] <= lambda * q(slices[i].weight))
                && rest.iter().all(|&i| excess[i] > lambda * q(slices[i].weight));
            for &i in &rest {
                caps[i] += lambda * q(slices[i].weight);
            }
            ok
        };
        if ok {
            if let Some(prev) = &found {
                assert_eq!(prev, &caps, "water level is not unique");
            }
            found = Some(caps);
        }
    }
    found.expect("some saturated subset is consistent")
}

/// Exact allocation per flow in input order. Flows are named `f0`, `f1`, ...
pub fn allocate_oracle(cap: i64, slices: &[OSlice], flows: &[OFlow]) -> Vec<Q> {
    let demand: Vec<Q> = flows
        .iter()
        .map(|f| q(f.mbr.map_or(f.offered, |m| f.offered.min(m))))
        .collect();
    let slice_demand: Vec<Q> = slices
        .iter()
        .map(|s| flows.iter().zip(&demand).filter(|(f, _)| f.slice == s.id).map(|(_, d)| *d).sum())
        .collect();
    let caps = slice_caps(cap, slices, &slice_demand);
    let mut out = vec![q(0); flows.len()];
    for (si, s) in slices.iter().enumerate() {
        let mut members: Vec<usize> = (0..flows.len()).filter(|&i| flows[i].slice == s.id).collect();
        members.sort_by_key(|&i| (flows[i].prio, format!("f{i}")));
        let mut remaining = caps[si];
        let mut grant = vec![q(0); flows.len()];
        for &i in &members {
            let g = q(flows[i].gbr).min(demand[i]).min(remaining);
            remaining -= g;
            grant[i] = g;
        }
        let resid_total: Q = members.iter().map(|&i| demand[i] - grant[i]).sum();
        for &i in &members {
            let r = demand[i] - grant[i];
            out[i] = if resid_total <= remaining {
                grant[i] + r
            } else {
                grant[i] + remaining * r / resid_total
            };
        }
    }
    out
}

fn big(x: &Q) -> BigRational {
    BigRational::new(BigInt::from(*x.numer()), BigInt::from(*x.denom()))
}

/// `got` is the largest f64 not above `want`.
pub fn is_floor_of(got: f64, want: &Q) -> bool {
    let w = big(want);
    let at = |x: f64| BigRational::from_float(x).expect("finite");
    at(got) <= w && at(got.next_up()) > w
}
