//! Best-bound branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::lp::{solve_lp, LpError, LpProblem, LpResult};

pub const INT_TOL: f64 = 1e-6;
const ABS_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MilpProblem {
    pub lp: LpProblem,
    pub binary: Vec<bool>,
}

impl MilpProblem {
    pub fn new(lp: LpProblem) -> Self {
        let n = lp.n();
        MilpProblem { lp, binary: vec![false; n] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpResult {
    pub status: MilpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    pub node_count: usize,
}

struct Node {
    bound: f64,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Most fractional masked variable, ties to the lowest index.
pub fn most_fractional(x: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (&v, &b)) in x.iter().zip(mask).enumerate() {
        if !b {
            continue;
        }
        let f = (v - v.floor()).min(v.ceil() - v);
        if f > INT_TOL && best.is_none_or(|(_, bf)| f > bf) {
            best = Some((j, f));
        }
    }
    best.map(|(j, _)| j)
}

pub fn solve_milp(p: &MilpProblem) -> Result<MilpResult, LpError> {
    solve_milp_with_limit(p, 1_000_000)
}

pub fn solve_milp_with_limit(p: &MilpProblem, node_limit: usize) -> Result<MilpResult, LpError> {
    let n = p.lp.n();
    let mut lower = p.lp.lower.clone();
    let mut upper = p.lp.upper.clone();
    for j in 0..n {
        if p.binary.get(j).copied().unwrap_or(false) {
            lower[j] = lower[j].max(0.0).ceil();
            upper[j] = upper[j].min(1.0).floor();
        }
    }
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, seq: 0, lower, upper });
    let mut seq = 1usize;
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0usize;
    let mut work = p.lp.clone();
    while let Some(node) = heap.pop() {
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |i| i.1);
        if node.bound >= inc_obj - ABS_GAP {
            continue;
        }
        if nodes >= node_limit {
            heap.push(node);
            break;
        }
        nodes += 1;
        work.lower.clone_from(&node.lower);
        work.upper.clone_from(&node.upper);
        let r = solve_lp(&work)?;
        if !r.is_optimal() || r.objective >= inc_obj - ABS_GAP {
            continue;
        }
        match most_fractional(&r.x, &p.binary) {
            None => {
                let mut x = r.x;
                for j in 0..n {
                    if p.binary[j] {
                        x[j] = x[j].round();
                    }
                }
                // Value at the rounded point, so integer data gives integer objectives.
                let obj = p.lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                incumbent = Some((x, obj));
            }
            Some(j) => {
                let bound = r.objective;
                let mut down_hi = node.upper.clone();
                down_hi[j] = 0.0;
                heap.push(Node { bound, seq, lower: node.lower.clone(), upper: down_hi });
                seq += 1;
                let mut up_lo = node.lower;
                up_lo[j] = 1.0;
                heap.push(Node { bound, seq, lower: up_lo, upper: node.upper });
                seq += 1;
            }
        }
    }
    let open_bound = heap.iter().map(|nd| nd.bound).fold(f64::INFINITY, f64::min);
    Ok(match incumbent {
        Some((x, obj)) => {
            let limited = open_bound < obj - ABS_GAP;
            MilpResult {
                status: if limited { MilpStatus::NodeLimit } else { MilpStatus::Optimal },
                x,
                objective: obj,
                best_bound: open_bound.min(obj),
                node_count: nodes,
            }
        }
        None => MilpResult {
            status: if heap.is_empty() { MilpStatus::Infeasible } else { MilpStatus::NodeLimit },
            x: vec![0.0; n],
            objective: f64::INFINITY,
            best_bound: open_bound,
            node_count: nodes,
        },
    })
}

/// Fixes the binaries at `incumbent` and re-solves the LP; its row duals
/// serve as multipliers for the mixed-binary problem.
pub fn duals_at_incumbent(p: &MilpProblem, incumbent: &[f64]) -> Result<LpResult, LpError> {
    let mut lp = p.lp.clone();
    for j in 0..lp.n() {
        if p.binary[j] {
            let v = incumbent[j].round();
            lp.lower[j] = v;
            lp.upper[j] = v;
        }
    }
    solve_lp(&lp)
}
