//! The decomposition subproblems. Each builder takes the problem, the data it
//! is parameterised by and returns the raw solver result; bookkeeping lives in
//! the driver.

use crate::flat::{full_problem, Layout};
use crate::global::{solve_global_with, GlobalError, GlobalOptions, GlobalProblem, GlobalResult, GlobalStatus};
use crate::lp::{solve_lp, LpError, LpProblem, LpResult, LpRow, LpSession};
use crate::milp::{duals_at_incumbent, solve_milp, MilpProblem, MilpStatus};
use crate::model::{Block, LinearConstraint, ScenarioBlock, Sense, StructuredProblem, VarRef};
use crate::relax::{Bilinear, BoundsState};

use super::pools::{BendersCut, ColumnPool, CutKind, CutPool, LagrangianCut};

/// Absolute slack granted to objective-bound rows so that points within
/// solver tolerance of the incumbent value are never cut off.
pub fn bound_margin(v: f64) -> f64 {
    1e-6 * (1.0 + v.abs())
}

fn bound_of(s: &ScenarioBlock, x0: &[(f64, f64)], r: VarRef) -> (f64, f64) {
    match r.block {
        Block::Linking => x0[r.index],
        Block::Convex => s.x_bounds[r.index],
        Block::Nonconvex => s.y_bounds[r.index],
    }
}

/// Upper bound on the violation a row can reach anywhere in the model box.
fn slack_cap(row: &LinearConstraint, s: &ScenarioBlock, x0: &[(f64, f64)]) -> f64 {
    1.0 + row.rhs.abs()
        + row
            .terms
            .iter()
            .map(|t| {
                let (lo, hi) = bound_of(s, x0, t.var);
                t.coef.abs() * lo.abs().max(hi.abs())
            })
            .sum::<f64>()
}

/// Rows of the scenario LP with `y` fixed: nonanticipativity rows first,
/// then coupling rows (nonconvex part moved to the right-hand side), then the
/// convex block's own rows. With `soft`, every nonanticipativity and coupling
/// row receives L1 slack variables with unit cost.
fn benders_lp(p: &StructuredProblem, w: usize, x0: &[f64], y: &[f64], soft: bool) -> LpProblem {
    let s = &p.scenarios[w];
    let mut lp = LpProblem::default();
    for (j, &(lo, hi)) in s.x_bounds.iter().enumerate() {
        lp.add_var(lo, hi, if soft { 0.0 } else { s.cost[j] });
    }
    let x0_box = p.linking.relaxed_bounds();
    let mut rows: Vec<(LpRow, f64)> = Vec::new();
    for (i, &j) in s.nac.iter().enumerate() {
        let cap = 1.0 + x0[i].abs() + s.x_bounds[j].0.abs().max(s.x_bounds[j].1.abs()) + x0_box[i].0.abs().max(x0_box[i].1.abs());
        rows.push((LpRow::new(vec![(j, 1.0)], Sense::Eq, x0[i]), cap));
    }
    for row in &s.coupling_rows {
        let mut terms = Vec::new();
        let mut rhs = row.rhs;
        for t in &row.terms {
            match t.var.block {
                Block::Convex => terms.push((t.var.index, t.coef)),
                Block::Nonconvex => rhs -= t.coef * y[t.var.index],
                Block::Linking => unreachable!("validated scenario rows do not reference linking variables"),
            }
        }
        rows.push((LpRow::new(terms, row.sense, rhs), slack_cap(row, s, &x0_box)));
    }
    for (mut row, cap) in rows {
        if soft {
            if row.sense != Sense::Ge {
                let z = lp.add_var(0.0, cap, 1.0);
                row.terms.push((z, -1.0));
            }
            if row.sense != Sense::Le {
                let z = lp.add_var(0.0, cap, 1.0);
                row.terms.push((z, 1.0));
            }
        }
        lp.rows.push(row);
    }
    for row in &s.x_rows {
        lp.rows.push(LpRow::new(row.terms.iter().map(|t| (t.var.index, t.coef)).collect(), row.sense, row.rhs));
    }
    lp
}

/// Benders primal subproblem: scenario LP over the convex block at fixed
/// `(x0, y)`.
pub fn solve_bpp(p: &StructuredProblem, w: usize, x0: &[f64], y: &[f64]) -> Result<LpResult, LpError> {
    solve_lp(&benders_lp(p, w, x0, y, false))
}

/// Benders feasibility subproblem: L1 slack on the nonanticipativity and
/// coupling rows.
pub fn solve_bfp(p: &StructuredProblem, w: usize, x0: &[f64], y: &[f64]) -> Result<LpResult, LpError> {
    solve_lp(&benders_lp(p, w, x0, y, true))
}

/// Turns a solved BPP/BFP into a cut.
pub fn benders_cut(
    p: &StructuredProblem,
    w: usize,
    kind: CutKind,
    iter: usize,
    x0: &[f64],
    y: &[f64],
    r: &LpResult,
) -> BendersCut {
    let s = &p.scenarios[w];
    let n0 = p.n0();
    let mu = r.row_duals[..n0].to_vec();
    let lambda: Vec<f64> = r.row_duals[n0..n0 + s.coupling_rows.len()].iter().map(|d| -d).collect();
    let mut y_coef = vec![0.0; s.ny()];
    for (row, &l) in s.coupling_rows.iter().zip(&lambda) {
        for t in &row.terms {
            if t.var.block == Block::Nonconvex {
                y_coef[t.var.index] += l * t.coef;
            }
        }
    }
    BendersCut {
        omega: w,
        kind,
        iter,
        value: r.objective,
        lambda,
        mu,
        anchor_x0: x0.to_vec(),
        anchor_y: y.to_vec(),
        y_coef,
    }
}

/// Scenario problem over `[x, y]` with the given boxes and cost on `x`.
fn scenario_global(s: &ScenarioBlock, xb: &[(f64, f64)], yb: &[(f64, f64)], cost: &[f64]) -> GlobalProblem {
    let nx = s.nx();
    let mut lp = LpProblem::default();
    for (j, &(lo, hi)) in xb.iter().enumerate() {
        lp.add_var(lo, hi, cost[j]);
    }
    for &(lo, hi) in yb {
        lp.add_var(lo, hi, 0.0);
    }
    let idx = |r: VarRef| match r.block {
        Block::Convex => r.index,
        Block::Nonconvex => nx + r.index,
        Block::Linking => unreachable!("validated scenario rows do not reference linking variables"),
    };
    for row in s.all_rows() {
        lp.rows.push(crate::flat::flat_row(row, idx));
    }
    let mut g = GlobalProblem::new(lp);
    g.bilinear = s
        .bilinear
        .iter()
        .map(|b| Bilinear { product: idx(b.product), left: idx(b.left), right: idx(b.right) })
        .collect();
    g
}

fn fixed_copies(s: &ScenarioBlock, x0: &[f64]) -> Vec<(f64, f64)> {
    let mut xb = s.x_bounds.clone();
    for (i, &j) in s.nac.iter().enumerate() {
        xb[j] = (x0[i], x0[i]);
    }
    xb
}

/// Outcome of a scenario global solve split back into blocks.
#[derive(Debug, Clone)]
pub struct ScenarioSolve {
    pub result: GlobalResult,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ScenarioSolve {
    fn new(s: &ScenarioBlock, result: GlobalResult) -> Self {
        let nx = s.nx();
        let (x, y) = if result.has_solution() {
            (result.x[..nx].to_vec(), result.x[nx..nx + s.ny()].to_vec())
        } else {
            (vec![], vec![])
        };
        ScenarioSolve { result, x, y }
    }

    pub fn feasible(&self) -> bool {
        self.result.has_solution()
    }
}

/// Primal subproblem: the scenario at fixed `x0`, solved globally.
pub fn solve_pp(p: &StructuredProblem, w: usize, x0: &[f64], opts: &GlobalOptions) -> Result<ScenarioSolve, GlobalError> {
    let s = &p.scenarios[w];
    if !copies_fit(s, x0) {
        return Ok(ScenarioSolve::new(s, no_solution(s.nx() + s.ny())));
    }
    let g = scenario_global(s, &fixed_copies(s, x0), &s.y_bounds, &s.cost);
    Ok(ScenarioSolve::new(s, solve_global_with(&g, opts)?))
}

fn copies_fit(s: &ScenarioBlock, x0: &[f64]) -> bool {
    s.nac.iter().enumerate().all(|(i, &j)| x0[i] >= s.x_bounds[j].0 - 1e-9 && x0[i] <= s.x_bounds[j].1 + 1e-9)
}

fn no_solution(n: usize) -> GlobalResult {
    GlobalResult {
        status: GlobalStatus::Infeasible,
        x: vec![0.0; n],
        objective: f64::INFINITY,
        lower_bound: f64::INFINITY,
        node_count: 0,
        progress: vec![],
    }
}

/// Feasibility problem: the scenario at `x0` with L1 slack on the coupling
/// rows and on the rows tying the copies to `x0`.
pub fn solve_fp(p: &StructuredProblem, w: usize, x0: &[f64], opts: &GlobalOptions) -> Result<ScenarioSolve, GlobalError> {
    let s = &p.scenarios[w];
    let mut g = scenario_global(s, &s.x_bounds, &s.y_bounds, &vec![0.0; s.nx()]);
    let x0_box = p.linking.relaxed_bounds();
    let first = s.x_rows.len();
    for (r, row) in s.coupling_rows.iter().enumerate() {
        add_slack(&mut g, first + r, slack_cap(row, s, &x0_box));
    }
    for (i, &j) in s.nac.iter().enumerate() {
        let (lo, hi) = s.x_bounds[j];
        let cap = 1.0 + (x0[i] - lo).abs().max((x0[i] - hi).abs());
        let row = g.lp.add_row(vec![(j, 1.0)], Sense::Eq, x0[i]);
        add_slack(&mut g, row, cap);
    }
    let r = solve_global_with(&g, opts)?;
    Ok(ScenarioSolve::new(s, r))
}

fn add_slack(g: &mut GlobalProblem, row: usize, cap: f64) {
    let sense = g.lp.rows[row].sense;
    if sense != Sense::Ge {
        let z = g.lp.add_var(0.0, cap, 1.0);
        g.lp.rows[row].terms.push((z, -1.0));
        g.binary.push(false);
        g.repair_fix.push(false);
    }
    if sense != Sense::Le {
        let z = g.lp.add_var(0.0, cap, 1.0);
        g.lp.rows[row].terms.push((z, 1.0));
        g.binary.push(false);
        g.repair_fix.push(false);
    }
}

/// Lagrangian subproblem for one scenario at the current boxes: cost
/// `c - pi H` over the coupling rows and both blocks.
pub fn solve_lsw(
    p: &StructuredProblem,
    w: usize,
    pi: &[f64],
    b: &BoundsState,
    opts: &GlobalOptions,
) -> Result<ScenarioSolve, GlobalError> {
    let s = &p.scenarios[w];
    let mut cost = s.cost.clone();
    let mut xb = s.x_bounds.clone();
    for (i, &j) in s.nac.iter().enumerate() {
        cost[j] -= pi[i];
        xb[j] = (xb[j].0.max(b.x0[i].0), xb[j].1.min(b.x0[i].1));
    }
    if xb.iter().any(|&(lo, hi)| lo > hi) {
        return Ok(ScenarioSolve::new(s, no_solution(s.nx() + s.ny())));
    }
    let g = scenario_global(s, &xb, &b.y[w], &cost);
    Ok(ScenarioSolve::new(s, solve_global_with(&g, opts)?))
}

/// `UBD >= sum_w obj + (sum_w pi).x0` rows over flat linking indices.
fn star_rows(cuts: &CutPool, ubd: f64, x0_index: impl Fn(usize) -> usize) -> Vec<LpRow> {
    if !ubd.is_finite() {
        return vec![];
    }
    cuts.lagrangian
        .iter()
        .map(|c| {
            let (k, coef) = c.aggregate();
            let terms = coef.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(i, &a)| (x0_index(i), a)).collect();
            LpRow::new(terms, Sense::Le, ubd + bound_margin(ubd) - k)
        })
        .collect()
}

fn linking_rows(p: &StructuredProblem) -> Vec<LpRow> {
    p.linking.rows.iter().map(|r| crate::flat::flat_row(r, |v| v.index)).collect()
}

#[derive(Debug, Clone)]
pub struct Ls0Result {
    pub x0: Vec<f64>,
    pub objective: f64,
}

/// Linking part of the Lagrangian subproblem: `min (sum_w pi_w).x0` over
/// the current linking box, the linking rows and the Lagrangian-cut rows.
/// `None` when infeasible.
pub fn solve_ls0(
    p: &StructuredProblem,
    pi: &[Vec<f64>],
    cuts: &CutPool,
    ubd: f64,
    b: &BoundsState,
) -> Result<Option<Ls0Result>, LpError> {
    let n0 = p.n0();
    let mut lp = LpProblem::default();
    for i in 0..n0 {
        let c: f64 = pi.iter().map(|v| v[i]).sum();
        lp.add_var(b.x0[i].0, b.x0[i].1, c);
    }
    lp.rows.extend(linking_rows(p));
    lp.rows.extend(star_rows(cuts, ubd, |i| i));
    let r = solve_milp(&MilpProblem { lp, binary: p.linking.binary.clone() })?;
    Ok(match r.status {
        MilpStatus::Optimal => Some(Ls0Result { x0: snap_binaries(p, r.x), objective: r.objective }),
        _ => None,
    })
}

pub fn snap_binaries(p: &StructuredProblem, mut x0: Vec<f64>) -> Vec<f64> {
    for (v, &bin) in x0.iter_mut().zip(&p.linking.binary) {
        if bin && (*v - v.round()).abs() <= 1e-6 {
            *v = v.round();
        }
    }
    x0
}

#[derive(Debug, Clone)]
pub struct RpmpResult {
    pub x0: Vec<f64>,
    pub objective: f64,
    /// Column weights per scenario over that scenario's distinct columns.
    pub theta: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    /// Whether the Lagrangian-cut rows had to be dropped.
    pub relaxed: bool,
}

/// Restricted primal master: columns replace the nonconvex blocks, solved as
/// a MILP; nonanticipativity multipliers come from the LP with binaries fixed.
/// `None` when no stored column combination is feasible.
pub fn solve_rpmp(p: &StructuredProblem, pool: &ColumnPool, cuts: &CutPool, ubd: f64) -> Result<Option<RpmpResult>, LpError> {
    for with_star in [true, false] {
        if !with_star && !(ubd.is_finite() && !cuts.lagrangian.is_empty()) {
            break;
        }
        let (milp, nac_rows, theta_idx) = rpmp_problem(p, pool, cuts, if with_star { ubd } else { f64::INFINITY });
        let r = solve_milp(&milp)?;
        if r.status != MilpStatus::Optimal {
            continue;
        }
        let d = duals_at_incumbent(&milp, &r.x)?;
        if !d.is_optimal() {
            continue;
        }
        let pi = nac_rows.iter().map(|rows| rows.iter().map(|&k| d.row_duals[k]).collect()).collect();
        let theta = theta_idx.iter().map(|ids| ids.iter().map(|&k| r.x[k]).collect()).collect();
        return Ok(Some(RpmpResult {
            x0: snap_binaries(p, r.x[..p.n0()].to_vec()),
            objective: r.objective,
            theta,
            pi,
            relaxed: !with_star,
        }));
    }
    Ok(None)
}

type RpmpParts = (MilpProblem, Vec<Vec<usize>>, Vec<Vec<usize>>);

fn rpmp_problem(p: &StructuredProblem, pool: &ColumnPool, cuts: &CutPool, ubd: f64) -> RpmpParts {
    let mut lp = LpProblem::default();
    let mut binary = Vec::new();
    for (i, (lo, hi)) in p.linking.relaxed_bounds().into_iter().enumerate() {
        lp.add_var(lo, hi, 0.0);
        binary.push(p.linking.binary[i]);
    }
    lp.rows.extend(linking_rows(p));
    lp.rows.extend(star_rows(cuts, ubd, |i| i));
    let mut nac_rows = Vec::new();
    let mut theta_idx = Vec::new();
    for (w, s) in p.scenarios.iter().enumerate() {
        let x_off = lp.n();
        for (j, &(lo, hi)) in s.x_bounds.iter().enumerate() {
            lp.add_var(lo, hi, s.cost[j]);
            binary.push(false);
        }
        let cols = pool.distinct(w);
        let t_off = lp.n();
        for _ in &cols {
            lp.add_var(0.0, 1.0, 0.0);
            binary.push(false);
        }
        theta_idx.push((t_off..t_off + cols.len()).collect());
        let mut rows = Vec::new();
        for (i, &j) in s.nac.iter().enumerate() {
            rows.push(lp.add_row(vec![(x_off + j, 1.0), (i, -1.0)], Sense::Eq, 0.0));
        }
        nac_rows.push(rows);
        for row in &s.coupling_rows {
            let mut terms = Vec::new();
            for t in &row.terms {
                if t.var.block == Block::Convex {
                    terms.push((x_off + t.var.index, t.coef));
                }
            }
            for (c, y) in cols.iter().enumerate() {
                let a: f64 = row.terms.iter().filter(|t| t.var.block == Block::Nonconvex).map(|t| t.coef * y[t.var.index]).sum();
                if a != 0.0 {
                    terms.push((t_off + c, a));
                }
            }
            lp.add_row(terms, row.sense, row.rhs);
        }
        for row in &s.x_rows {
            lp.rows.push(crate::flat::flat_row(row, |v| x_off + v.index));
        }
        lp.add_row((t_off..t_off + cols.len()).map(|k| (k, 1.0)).collect(), Sense::Eq, 1.0);
    }
    (MilpProblem { lp, binary }, nac_rows, theta_idx)
}

/// Variable positions in the joint relaxed master.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterLayout {
    pub n0: usize,
    pub eta0: usize,
    pub eta: Vec<usize>,
    pub y_off: Vec<usize>,
    pub total: usize,
}

impl MasterLayout {
    pub fn new(p: &StructuredProblem) -> Self {
        let n0 = p.n0();
        let s = p.scenarios.len();
        let eta0 = n0;
        let eta = (0..s).map(|w| n0 + 1 + w).collect();
        let mut off = n0 + 1 + s;
        let mut y_off = Vec::new();
        for sc in &p.scenarios {
            y_off.push(off);
            off += sc.ny();
        }
        MasterLayout { n0, eta0, eta, y_off, total: off }
    }

    pub fn split(&self, p: &StructuredProblem, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let y = p.scenarios.iter().enumerate().map(|(w, s)| z[self.y_off[w]..self.y_off[w] + s.ny()].to_vec()).collect();
        (z[..self.n0].to_vec(), y)
    }
}

/// Smallest value each scenario's Lagrangian cuts allow over the linking box.
pub fn eta_floors(p: &StructuredProblem, cuts: &CutPool, b: &BoundsState) -> Vec<f64> {
    (0..p.scenarios.len())
        .map(|w| {
            cuts.lagrangian
                .iter()
                .map(|c| {
                    c.obj[w]
                        + c.pi[w]
                            .iter()
                            .zip(&b.x0)
                            .map(|(&a, &(lo, hi))| (a * lo).min(a * hi))
                            .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Joint relaxed master over `(x0, eta0, eta_w, y_w)` with every cut family.
/// Requires finite `ubd`, `lbd` and at least one Lagrangian cut.
pub fn build_jrmp(p: &StructuredProblem, cuts: &CutPool, ubd: f64, lbd: f64, b: &BoundsState) -> (GlobalProblem, MasterLayout) {
    assert!(ubd.is_finite() && lbd.is_finite(), "master needs finite bounds");
    assert!(!cuts.lagrangian.is_empty(), "master needs a Lagrangian cut");
    let m = MasterLayout::new(p);
    let ub = ubd + bound_margin(ubd);
    let floors = eta_floors(p, cuts, b);
    let floor_sum: f64 = floors.iter().sum();
    let mut lp = LpProblem::default();
    let mut binary = Vec::new();
    for (i, &(lo, hi)) in b.x0.iter().enumerate() {
        lp.add_var(lo, hi, 0.0);
        binary.push(p.linking.binary[i]);
    }
    lp.add_var(lbd.min(ub), ub, 1.0);
    binary.push(false);
    for &f in &floors {
        let hi = (ub - (floor_sum - f)).max(f);
        lp.add_var(f, hi, 0.0);
        binary.push(false);
    }
    for yb in &b.y {
        for &(lo, hi) in yb {
            lp.add_var(lo, hi, 0.0);
            binary.push(false);
        }
    }
    let mut agg = vec![(m.eta0, 1.0)];
    agg.extend(m.eta.iter().map(|&e| (e, -1.0)));
    lp.add_row(agg, Sense::Ge, 0.0);
    for c in &cuts.benders {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for (i, &a) in c.mu.iter().enumerate() {
            if a != 0.0 {
                terms.push((i, -a));
            }
        }
        for (j, &a) in c.y_coef.iter().enumerate() {
            if a != 0.0 {
                terms.push((m.y_off[c.omega] + j, -a));
            }
        }
        if c.kind == CutKind::Optimality {
            terms.push((m.eta[c.omega], 1.0));
        }
        lp.add_row(terms, Sense::Ge, c.constant());
    }
    for c in &cuts.lagrangian {
        for w in 0..p.scenarios.len() {
            let mut terms = vec![(m.eta[w], 1.0)];
            for (i, &a) in c.pi[w].iter().enumerate() {
                if a != 0.0 {
                    terms.push((i, -a));
                }
            }
            lp.add_row(terms, Sense::Ge, c.obj[w]);
        }
    }
    lp.rows.extend(linking_rows(p));
    let mut bilinear = Vec::new();
    for (w, s) in p.scenarios.iter().enumerate() {
        let idx = |r: VarRef| m.y_off[w] + r.index;
        for row in &s.y_rows {
            lp.rows.push(crate::flat::flat_row(row, idx));
        }
        for e in &s.bilinear {
            bilinear.push(Bilinear { product: idx(e.product), left: idx(e.left), right: idx(e.right) });
        }
    }
    let mut repair_fix = vec![false; m.total];
    repair_fix[..m.n0].iter_mut().for_each(|f| *f = true);
    (GlobalProblem { lp, binary, bilinear, repair_fix }, m)
}

/// Convex relaxation of the joint master, solved as an LP.
pub fn solve_jrmpr(g: &GlobalProblem) -> Result<LpResult, GlobalError> {
    Ok(solve_lp(&g.relaxation()?)?)
}

/// Marginal-based reduction. `mult[j] = (u, v)` are the upper- and
/// lower-bound multipliers of the relaxation at the box `(lo, hi)`. A
/// binding lower bound with multiplier `v` caps the variable at
/// `lo + gap / v`; a binding upper bound with multiplier `u` lifts it to
/// `hi - gap / u`. Returns the new box.
pub fn mdr_bounds((lo, hi): (f64, f64), (u, v): (f64, f64), gap: f64) -> (f64, f64) {
    const THRESHOLD: f64 = 1e-6;
    let mut nlo = lo;
    let mut nhi = hi;
    if v > THRESHOLD {
        let cap = lo + gap / v;
        nhi = nhi.min(cap + 1e-7 * (1.0 + cap.abs()));
    }
    if u > THRESHOLD {
        let floor = hi - gap / u;
        nlo = nlo.max(floor - 1e-7 * (1.0 + floor.abs()));
    }
    (nlo, nhi.max(nlo))
}

/// Applies the reduction to every linking and nonconvex variable of the
/// master. Skipped when the gap is negative. Returns how many boxes shrank.
pub fn apply_mdr(p: &StructuredProblem, r: &LpResult, m: &MasterLayout, ubd: f64, b: &mut BoundsState) -> usize {
    if !ubd.is_finite() || !r.is_optimal() {
        return 0;
    }
    let gap = ubd + bound_margin(ubd) - r.objective;
    if gap < 0.0 {
        return 0;
    }
    let mut changed = 0;
    for i in 0..m.n0 {
        let (lo, hi) = mdr_bounds(b.x0[i], r.bound_multipliers[i], gap);
        if b.tighten_x0(i, lo, hi, p.linking.binary[i]) {
            changed += 1;
        }
    }
    for (w, s) in p.scenarios.iter().enumerate() {
        for j in 0..s.ny() {
            let (lo, hi) = mdr_bounds(b.y[w][j], r.bound_multipliers[m.y_off[w] + j], gap);
            if b.tighten_y(w, j, lo, hi) {
                changed += 1;
            }
        }
    }
    changed
}

/// Optimization-based reduction of every linking box over the relaxation of
/// the full problem with objective-bound rows and Lagrangian-cut rows.
/// Bounds are applied as soon as they are computed. Returns `Ok(None)` if
/// the relaxation is infeasible, else the number of bounds that moved.
pub fn apply_odr(p: &StructuredProblem, cuts: &CutPool, ubd: f64, lbd: f64, b: &mut BoundsState) -> Result<Option<usize>, GlobalError> {
    let layout = Layout::new(p);
    let lp = odr_lp(p, cuts, ubd, lbd, b, &layout)?;
    let mut session = LpSession::new(&lp)?;
    let mut changed = 0;
    for i in 0..p.n0() {
        for maximise in [false, true] {
            let mut objective = vec![0.0; lp.n()];
            objective[i] = if maximise { -1.0 } else { 1.0 };
            let r = session.solve(&objective)?;
            if !r.is_optimal() {
                return Ok(None);
            }
            let v = r.x[i];
            let pad = 1e-7 * (1.0 + v.abs());
            let (lo, hi) = if maximise { (f64::NEG_INFINITY, v + pad) } else { (v - pad, f64::INFINITY) };
            if b.tighten_x0(i, lo, hi, p.linking.binary[i]) {
                changed += 1;
                session.set_bounds(i, b.x0[i].0.max(lp.lower[i]), b.x0[i].1.min(lp.upper[i]))?;
            }
        }
    }
    Ok(Some(changed))
}

fn odr_lp(
    p: &StructuredProblem,
    cuts: &CutPool,
    ubd: f64,
    lbd: f64,
    b: &BoundsState,
    layout: &Layout,
) -> Result<LpProblem, GlobalError> {
    let g = full_problem(p, b, layout);
    let mut lp = g.relaxation()?;
    let cost: Vec<(usize, f64)> = lp.objective.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, &c)| (j, c)).collect();
    if ubd.is_finite() {
        lp.add_row(cost.clone(), Sense::Le, ubd + bound_margin(ubd));
    }
    if lbd.is_finite() {
        lp.add_row(cost, Sense::Ge, lbd - bound_margin(lbd));
    }
    lp.rows.extend(star_rows(cuts, ubd, |i| i));
    Ok(lp)
}

#[derive(Debug, Clone)]
pub struct IfpResult {
    pub result: GlobalResult,
    pub x0: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl IfpResult {
    /// A feasible point was found (total slack within tolerance).
    pub fn feasible(&self) -> bool {
        self.result.objective <= crate::model::FEAS_TOL
    }

    /// The slack cannot be driven to zero: the problem has no feasible point.
    pub fn proves_infeasible(&self) -> bool {
        match self.result.status {
            GlobalStatus::Infeasible => true,
            GlobalStatus::Optimal => self.result.lower_bound > crate::model::FEAS_TOL,
            GlobalStatus::GapLimit => false,
        }
    }
}

/// Initial feasibility problem: the whole problem with L1 slack on every
/// coupling row, solved globally.
pub fn solve_ifp(p: &StructuredProblem, max_nodes: usize) -> Result<IfpResult, GlobalError> {
    let b = BoundsState::from_problem(p);
    let layout = Layout::new(p);
    let mut g = full_problem(p, &b, &layout);
    g.lp.objective.iter_mut().for_each(|c| *c = 0.0);
    let x0_box = p.linking.relaxed_bounds();
    let mut row = p.linking.rows.len();
    for s in &p.scenarios {
        row += s.x_rows.len();
        for (r, cr) in s.coupling_rows.iter().enumerate() {
            add_slack(&mut g, row + r, slack_cap(cr, s, &x0_box));
        }
        row += s.coupling_rows.len() + s.y_rows.len();
    }
    let opts = GlobalOptions { abs_tol: 1e-7, rel_tol: 0.0, max_nodes };
    let result = solve_global_with(&g, &opts)?;
    let (x0, x, y) = layout.split(p, &result.x);
    Ok(IfpResult { result, x0, x, y })
}

/// Lagrangian cut from solved scenario subproblems, using their certified
/// lower bounds.
pub fn lagrangian_cut_from(iter: usize, parts: &[ScenarioSolve], pi: &[Vec<f64>]) -> LagrangianCut {
    LagrangianCut { iter, obj: parts.iter().map(|s| s.result.lower_bound).collect(), pi: pi.to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinkingSet, Meta};

    /// One linking variable copied into `x[0]`, cost `c` on it, plus
    /// `x[1] <= ... ` coupling to `y[0]`.
    fn toy(c: f64) -> StructuredProblem {
        StructuredProblem {
            meta: Meta { name: "toy".into(), s: 1, initial_x0: None },
            linking: LinkingSet { bounds: vec![(0.0, 10.0)], binary: vec![false], rows: vec![] },
            scenarios: vec![ScenarioBlock {
                cost: vec![c, 0.0],
                nac: vec![0],
                // x1 - y0 <= -1
                coupling_rows: vec![LinearConstraint::new(vec![(VarRef::x(1), 1.0), (VarRef::y(0), -1.0)], Sense::Le, -1.0)],
                x_rows: vec![],
                y_rows: vec![],
                x_bounds: vec![(0.0, 10.0), (0.0, 10.0)],
                y_bounds: vec![(0.0, 2.0)],
                bilinear: vec![],
            }],
        }
    }

    #[test]
    fn bpp_pins_copy() {
        let p = toy(1.5);
        let r = solve_bpp(&p, 0, &[3.0], &[1.0]).unwrap();
        assert!(r.is_optimal());
        assert!((r.objective - 4.5).abs() < 1e-12);
        assert!((r.row_duals[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bpp_infeasible_and_bfp_slack() {
        let p = toy(1.0);
        // y = 0 gives x1 <= -1 with x1 >= 0.
        assert!(!solve_bpp(&p, 0, &[3.0], &[0.0]).unwrap().is_optimal());
        let r = solve_bfp(&p, 0, &[3.0], &[0.0]).unwrap();
        assert!((r.objective - 1.0).abs() < 1e-12);
        assert_eq!(solve_bfp(&p, 0, &[3.0], &[1.5]).unwrap().objective, 0.0);
    }

    #[test]
    fn feasibility_cut_separates_bad_y() {
        let p = toy(1.0);
        let r = solve_bfp(&p, 0, &[3.0], &[0.0]).unwrap();
        let cut = benders_cut(&p, 0, CutKind::Feasibility, 1, &[3.0], &[0.0], &r);
        // Cut: 0 >= 1 - y, so y >= 1 is required; y = 1 is exactly feasible.
        assert!(cut.violation(&[3.0], &[0.0], 0.0) > 0.5);
        assert!(cut.violation(&[3.0], &[1.0], 0.0) <= 1e-12);
        assert!(cut.violation(&[7.0], &[2.0], 0.0) <= 1e-12);
    }

    #[test]
    fn mdr_substitution() {
        // y in [0, 10], lower bound binding with multiplier 2, gap 4.
        let (lo, hi) = mdr_bounds((0.0, 10.0), (0.0, 2.0), 4.0);
        assert_eq!(lo, 0.0);
        assert!((hi - 2.0).abs() < 1e-6);
        assert_eq!(mdr_bounds((0.0, 10.0), (0.0, 0.0), 4.0), (0.0, 10.0));
        // binding upper bound lifts the lower end
        let (lo, _) = mdr_bounds((0.0, 10.0), (4.0, 0.0), 4.0);
        assert!((lo - 9.0).abs() < 1e-5);
    }

    #[test]
    fn ls0_linear_over_box() {
        let p = toy(0.0);
        let b = BoundsState { x0: vec![(0.0, 1.0)], y: vec![vec![(0.0, 2.0)]], generation: 0 };
        let r = solve_ls0(&p, &[vec![-2.0]], &CutPool::default(), f64::INFINITY, &b).unwrap().unwrap();
        assert_eq!(r.x0, vec![1.0]);
        assert_eq!(r.objective, -2.0);
        let r = solve_ls0(&p, &[vec![0.0]], &CutPool::default(), f64::INFINITY, &b).unwrap().unwrap();
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn odr_with_objective_row() {
        // min x0 cost 1; UBD = 0.6 caps x0 at 0.6.
        let mut p = toy(1.0);
        p.linking.bounds = vec![(0.0, 1.0)];
        p.scenarios[0].x_bounds[0] = (0.0, 1.0);
        p.scenarios[0].coupling_rows.clear();
        let mut b = BoundsState::from_problem(&p);
        let moved = apply_odr(&p, &CutPool::default(), f64::INFINITY, f64::NEG_INFINITY, &mut b).unwrap().unwrap();
        assert_eq!(moved, 0);
        assert_eq!(b.x0[0], (0.0, 1.0));
        apply_odr(&p, &CutPool::default(), 0.6, f64::NEG_INFINITY, &mut b).unwrap().unwrap();
        assert!((b.x0[0].1 - 0.6).abs() < 1e-5 && b.x0[0].1 >= 0.6);
    }

    #[test]
    fn rpmp_single_column() {
        // x0 >= 3 keeps the copy off its own bound so the multiplier is unique.
        let mut p = toy(1.0);
        p.linking.bounds = vec![(3.0, 10.0)];
        let mut pool = ColumnPool::default();
        pool.push(super::super::pools::ColumnSource::Initial, vec![vec![2.0]]);
        let r = solve_rpmp(&p, &pool, &CutPool::default(), f64::INFINITY).unwrap().unwrap();
        assert_eq!(r.theta, vec![vec![1.0]]);
        assert!((r.objective - 3.0).abs() < 1e-12);
        // duplicate column: same objective
        pool.push(super::super::pools::ColumnSource::Pp, vec![vec![2.0]]);
        let r2 = solve_rpmp(&p, &pool, &CutPool::default(), f64::INFINITY).unwrap().unwrap();
        assert_eq!(r.objective, r2.objective);
        // pi equals the cost on the copy
        assert!((r.pi[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ifp_zero_point() {
        let p = toy(1.0);
        let r = solve_ifp(&p, 1000).unwrap();
        assert!(r.feasible());
        let mut bad = toy(1.0);
        bad.scenarios[0].y_bounds = vec![(0.0, 0.5)];
        assert!(!solve_ifp(&bad, 1000).unwrap().feasible());
    }
}
