//! Spatial branch-and-bound for mixed-binary bilinear programs.
//!
//! Node relaxations are McCormick LPs over the node box. Binaries are
//! branched first (most fractional), then the factor of the bilinear term
//! with the largest `|w - u v|` at the node solution.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{solve_lp, LpError, LpProblem, LpResult, LpSession};
use crate::milp::most_fractional;
use crate::model::{Sense, FEAS_TOL};
use crate::relax::{product_range, relax_with_bounds, Bilinear, RelaxError};

const BRANCH_CLAMP: f64 = 0.2;
const MIN_WIDTH: f64 = 1e-9;
/// Violation below which a repaired point is taken as is; between this and
/// `FEAS_TOL` it is first polished by an LP so incumbents do not undercut the
/// true optimum through row slack.
const EXACT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobalProblem {
    pub lp: LpProblem,
    pub binary: Vec<bool>,
    pub bilinear: Vec<Bilinear>,
    /// Variables held at their relaxation value when repairing a node
    /// solution into a feasible point (binaries and factors always are).
    pub repair_fix: Vec<bool>,
}

impl GlobalProblem {
    pub fn new(lp: LpProblem) -> Self {
        let n = lp.n();
        GlobalProblem { lp, binary: vec![false; n], bilinear: vec![], repair_fix: vec![false; n] }
    }

    pub fn n(&self) -> usize {
        self.lp.n()
    }

    /// Relaxation at the problem's own bounds.
    pub fn relaxation(&self) -> Result<LpProblem, RelaxError> {
        let (lo, hi) = self.relaxed_bounds();
        relax_with_bounds(&self.lp, &self.bilinear, &lo, &hi)
    }

    fn relaxed_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.lp.lower.clone();
        let mut hi = self.lp.upper.clone();
        for j in 0..self.n() {
            if self.binary[j] {
                lo[j] = lo[j].max(0.0).ceil();
                hi[j] = hi[j].min(1.0).floor();
            }
        }
        (lo, hi)
    }

    /// Largest violation over rows, bounds, integrality and bilinear terms.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = self.lp.max_violation(x);
        for j in 0..self.n() {
            if self.binary[j] {
                worst = worst.max((x[j] - x[j].round()).abs());
            }
        }
        for t in &self.bilinear {
            worst = worst.max((x[t.product] - x[t.left] * x[t.right]).abs());
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.lp.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalStatus {
    Optimal,
    Infeasible,
    GapLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalResult {
    pub status: GlobalStatus,
    pub x: Vec<f64>,
    /// Incumbent value (an upper bound); `+inf` without an incumbent.
    pub objective: f64,
    pub lower_bound: f64,
    pub node_count: usize,
    /// `(node, lower bound, incumbent)` each time either bound moves.
    pub progress: Vec<(usize, f64, f64)>,
}

impl GlobalResult {
    pub fn has_solution(&self) -> bool {
        self.objective.is_finite()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlobalError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error("tolerances must be positive")]
    Tolerance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_nodes: usize,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        GlobalOptions { abs_tol: 1e-3, rel_tol: 1e-3, max_nodes: 1_000_000 }
    }
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
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

pub fn solve_global(p: &GlobalProblem, abs_tol: f64, rel_tol: f64) -> Result<GlobalResult, GlobalError> {
    solve_global_with(p, &GlobalOptions { abs_tol, rel_tol, ..GlobalOptions::default() })
}

struct Search<'a> {
    p: &'a GlobalProblem,
    opts: GlobalOptions,
    incumbent: Option<(Vec<f64>, f64)>,
}

impl Search<'_> {
    fn inc_obj(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |i| i.1)
    }

    fn tol(&self) -> f64 {
        let inc = self.inc_obj();
        if inc.is_finite() {
            self.opts.abs_tol.max(self.opts.rel_tol * inc.abs())
        } else {
            self.opts.abs_tol
        }
    }

    fn offer(&mut self, x: Vec<f64>) -> bool {
        if self.p.max_violation(&x) > FEAS_TOL {
            return false;
        }
        let obj = self.p.objective_at(&x);
        if obj < self.inc_obj() {
            self.incumbent = Some((x, obj));
            return true;
        }
        false
    }

    /// Turns a relaxation point into feasible ones: products set to the
    /// factor products directly, then two LP repairs that hold binaries and
    /// one factor of every product at their relaxation values so the
    /// remaining problem is linear. A direct point that is only feasible to
    /// `FEAS_TOL` is polished first and kept only when nothing exact turns up.
    fn repair(&mut self, z: &[f64]) -> Result<bool, GlobalError> {
        let p = self.p;
        let mut direct = z.to_vec();
        for j in 0..p.n() {
            if p.binary[j] {
                direct[j] = direct[j].round();
            }
        }
        for t in &p.bilinear {
            direct[t.product] = direct[t.left] * direct[t.right];
        }
        let viol = p.max_violation(&direct);
        let mut found = false;
        let mut fallback = None;
        if viol <= EXACT_TOL {
            found |= self.offer(direct);
        } else if viol <= FEAS_TOL && p.objective_at(&direct) < self.inc_obj() {
            match self.polish(&direct)? {
                Some(x) => found |= self.offer(x),
                None => fallback = Some(direct),
            }
        }
        if !p.bilinear.is_empty() {
            found |= self.repair_cover(z, true)?;
        }
        found |= self.repair_cover(z, false)?;
        if !found {
            if let Some(x) = fallback {
                found |= self.offer(x);
            }
        }
        Ok(found)
    }

    /// LP over everything but the binaries and product factors, which stay
    /// at `z`; products are pinned to the exact factor products.
    fn polish(&self, z: &[f64]) -> Result<Option<Vec<f64>>, GlobalError> {
        let p = self.p;
        let mut lp = p.lp.clone();
        (lp.lower, lp.upper) = p.relaxed_bounds();
        let mut pin = |j: usize, v: f64| {
            lp.lower[j] = v;
            lp.upper[j] = v;
        };
        for j in 0..p.n() {
            if p.binary[j] {
                pin(j, z[j]);
            }
        }
        for t in &p.bilinear {
            pin(t.left, z[t.left]);
            pin(t.right, z[t.right]);
            pin(t.product, z[t.product]);
        }
        let r = solve_lp(&lp)?;
        Ok(r.is_optimal().then_some(r.x))
    }

    /// LP repair over the problem's own box: any exactly feasible point is a
    /// valid incumbent, and the node box may admit none once a factor is held.
    fn repair_cover(&mut self, z: &[f64], left_first: bool) -> Result<bool, GlobalError> {
        let p = self.p;
        let n = p.n();
        let (lower, upper) = p.relaxed_bounds();
        let (lower, upper) = (&lower, &upper);
        let mut lp = p.lp.clone();
        lp.lower = lower.to_vec();
        lp.upper = upper.to_vec();
        let mut fixed = vec![false; n];
        let fix = |lp: &mut LpProblem, fixed: &mut [bool], j: usize, v: f64| {
            let v = v.clamp(lower[j], upper[j]);
            lp.lower[j] = v;
            lp.upper[j] = v;
            fixed[j] = true;
        };
        for j in 0..n {
            if p.binary[j] {
                fix(&mut lp, &mut fixed, j, z[j].round());
            } else if p.repair_fix[j] {
                fix(&mut lp, &mut fixed, j, z[j]);
            }
        }
        for t in &p.bilinear {
            if !fixed[t.left] && !fixed[t.right] {
                let j = if left_first { t.left } else { t.right };
                fix(&mut lp, &mut fixed, j, z[j]);
            }
        }
        for t in &p.bilinear {
            match (fixed[t.left], fixed[t.right]) {
                (true, true) => {
                    let v = lp.lower[t.left] * lp.lower[t.right];
                    if v < lp.lower[t.product] - FEAS_TOL || v > lp.upper[t.product] + FEAS_TOL {
                        return Ok(false);
                    }
                    lp.add_row(vec![(t.product, 1.0)], Sense::Eq, v);
                }
                (true, false) => {
                    lp.add_row(vec![(t.product, 1.0), (t.right, -lp.lower[t.left])], Sense::Eq, 0.0);
                }
                (false, true) => {
                    lp.add_row(vec![(t.product, 1.0), (t.left, -lp.lower[t.right])], Sense::Eq, 0.0);
                }
                (false, false) => unreachable!("every product has a fixed factor"),
            }
        }
        let r = solve_lp(&lp)?;
        Ok(r.is_optimal() && self.offer(r.x))
    }

    /// Tightens factor bounds by minimising and maximising each factor over
    /// the relaxation, with the incumbent value as a cutoff when there is one.
    fn tighten(&self, lower: &mut [f64], upper: &mut [f64]) -> Result<(), GlobalError> {
        let p = self.p;
        let mut factors: Vec<usize> = p.bilinear.iter().flat_map(|t| [t.left, t.right]).filter(|&j| !p.binary[j]).collect();
        factors.sort_unstable();
        factors.dedup();
        let mut lp = relax_with_bounds(&p.lp, &p.bilinear, lower, upper)?;
        if self.inc_obj().is_finite() {
            let cost: Vec<(usize, f64)> = p.lp.objective.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, &c)| (k, c)).collect();
            lp.add_row(cost, Sense::Le, self.inc_obj());
        }
        let mut session = LpSession::new(&lp)?;
        for j in factors {
            for dir in [1.0, -1.0] {
                let mut objective = vec![0.0; p.n()];
                objective[j] = dir;
                let r = session.solve(&objective)?;
                if !r.is_optimal() {
                    return Ok(());
                }
                let v = r.x[j];
                let pad = 1e-7 * (1.0 + v.abs());
                if dir > 0.0 {
                    lower[j] = lower[j].max((v - pad).min(upper[j]));
                } else {
                    upper[j] = upper[j].min((v + pad).max(lower[j]));
                }
                session.set_bounds(j, lower[j], upper[j])?;
            }
        }
        Ok(())
    }
}

/// Shrinks the box of every variable resting at a bound with a positive
/// multiplier: moving it by more than `gap / multiplier` would push the
/// relaxation bound past the incumbent.
fn reduced_cost_tightening(r: &LpResult, bound: f64, inc: f64, binary: &[bool], lower: &mut [f64], upper: &mut [f64]) {
    let gap = inc - bound;
    if !gap.is_finite() {
        return;
    }
    for (j, &(u, v)) in r.bound_multipliers.iter().enumerate() {
        if v > 1e-9 {
            let reach = lower[j] + gap / v;
            let reach = reach + 1e-7 * (1.0 + reach.abs());
            let hi = if binary[j] { reach.floor() } else { reach };
            upper[j] = upper[j].min(hi.max(lower[j]));
        }
        if u > 1e-9 {
            let reach = upper[j] - gap / u;
            let reach = reach - 1e-7 * (1.0 + reach.abs());
            let lo = if binary[j] { reach.ceil() } else { reach };
            lower[j] = lower[j].max(lo.min(upper[j]));
        }
    }
}

pub fn solve_global_with(p: &GlobalProblem, opts: &GlobalOptions) -> Result<GlobalResult, GlobalError> {
    if !(opts.abs_tol > 0.0) || !(opts.rel_tol >= 0.0) {
        return Err(GlobalError::Tolerance);
    }
    let n = p.n();
    let (lo0, hi0) = p.relaxed_bounds();
    let mut search = Search { p, opts: *opts, incumbent: None };
    let (mut lo0, mut hi0) = (lo0, hi0);
    if !p.bilinear.is_empty() {
        let r = solve_lp(&relax_with_bounds(&p.lp, &p.bilinear, &lo0, &hi0)?)?;
        if r.is_optimal() {
            search.repair(&r.x)?;
            search.tighten(&mut lo0, &mut hi0)?;
        }
    }
    let root_width: Vec<f64> = lo0.iter().zip(&hi0).map(|(l, h)| (h - l).max(MIN_WIDTH)).collect();
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, seq: 0, lower: lo0, upper: hi0 });
    let mut seq = 1usize;
    let mut nodes = 0usize;
    // Bound of nodes that could not be branched further (boxes too small).
    let mut stuck_bound = f64::INFINITY;
    let mut progress: Vec<(usize, f64, f64)> = Vec::new();
    let mut last_lb = f64::NEG_INFINITY;
    let mut limited = false;
    // Smallest bound among nodes pruned within tolerance of the incumbent.
    let mut pruned = f64::INFINITY;

    while let Some(mut node) = heap.pop() {
        let lb_now = node.bound.min(stuck_bound);
        if lb_now > last_lb {
            last_lb = lb_now;
            progress.push((nodes, lb_now.min(search.inc_obj()), search.inc_obj()));
        }
        if node.bound >= search.inc_obj() - search.tol() {
            pruned = pruned.min(node.bound);
            heap.clear();
            break;
        }
        if nodes >= opts.max_nodes {
            heap.push(node);
            limited = true;
            break;
        }
        nodes += 1;
        // Interval tightening of product bounds.
        let mut empty = false;
        for t in &p.bilinear {
            let (a, b) = product_range((node.lower[t.left], node.upper[t.left]), (node.lower[t.right], node.upper[t.right]));
            node.lower[t.product] = node.lower[t.product].max(a);
            node.upper[t.product] = node.upper[t.product].min(b);
            if node.lower[t.product] > node.upper[t.product] + 1e-9 {
                empty = true;
            } else if node.lower[t.product] > node.upper[t.product] {
                let m = 0.5 * (node.lower[t.product] + node.upper[t.product]);
                node.lower[t.product] = m;
                node.upper[t.product] = m;
            }
        }
        if empty {
            continue;
        }
        let relaxed = relax_with_bounds(&p.lp, &p.bilinear, &node.lower, &node.upper)?;
        let r = solve_lp(&relaxed)?;
        if !r.is_optimal() {
            continue;
        }
        let bound = r.objective.max(node.bound);
        if bound >= search.inc_obj() - search.tol() {
            pruned = pruned.min(bound);
            continue;
        }
        let before = search.inc_obj();
        search.repair(&r.x)?;
        if search.inc_obj() < before {
            progress.push((nodes, last_lb.min(search.inc_obj()), search.inc_obj()));
        }
        if bound >= search.inc_obj() - search.tol() {
            pruned = pruned.min(bound);
            continue;
        }
        reduced_cost_tightening(&r, bound, search.inc_obj(), &p.binary, &mut node.lower, &mut node.upper);
        // Branching variable and split point.
        let mut split: Option<(usize, f64, f64)> = None; // (var, down_hi, up_lo)
        if let Some(j) = most_fractional(&r.x, &p.binary) {
            split = Some((j, 0.0, 1.0));
        } else {
            let mut worst = FEAS_TOL;
            for t in &p.bilinear {
                let gap = (r.x[t.product] - r.x[t.left] * r.x[t.right]).abs();
                if gap <= worst {
                    continue;
                }
                let wl = node.upper[t.left] - node.lower[t.left];
                let wr = node.upper[t.right] - node.lower[t.right];
                let j = if wr / root_width[t.right] > wl / root_width[t.left] { t.right } else { t.left };
                let width = node.upper[j] - node.lower[j];
                if width <= MIN_WIDTH * (1.0 + node.upper[j].abs()) {
                    continue;
                }
                worst = gap;
                let at = r.x[j].clamp(node.lower[j] + BRANCH_CLAMP * width, node.upper[j] - BRANCH_CLAMP * width);
                split = Some((j, at, at));
            }
        }
        let Some((j, down_hi, up_lo)) = split else {
            // Relaxation solution is feasible up to tolerance, or the box is
            // too small to split: keep its bound as a floor.
            if search.inc_obj() > bound + search.tol() {
                stuck_bound = stuck_bound.min(bound);
            }
            continue;
        };
        let mut down = Node { bound, seq, lower: node.lower.clone(), upper: node.upper.clone() };
        down.upper[j] = down_hi;
        seq += 1;
        let mut up = Node { bound, seq, lower: node.lower, upper: node.upper };
        up.lower[j] = up_lo;
        seq += 1;
        heap.push(down);
        heap.push(up);
    }

    let open = heap.iter().map(|nd| nd.bound).fold(f64::INFINITY, f64::min);
    let inc = search.inc_obj();
    let lower_bound = open.min(stuck_bound).min(pruned).min(inc);
    let status = match &search.incumbent {
        Some(_) if !limited && lower_bound >= inc - search.tol() => GlobalStatus::Optimal,
        None if !limited && lower_bound == f64::INFINITY => GlobalStatus::Infeasible,
        _ => GlobalStatus::GapLimit,
    };
    progress.push((nodes, lower_bound, inc));
    let x = search.incumbent.map(|i| i.0).unwrap_or_else(|| vec![0.0; n]);
    Ok(GlobalResult { status, x, objective: inc, lower_bound, node_count: nodes, progress })
}
