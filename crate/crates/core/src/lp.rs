//! Dense bounded-variable primal simplex.
//!
//! Every row `a.x (sense) b` gets an activity variable `r = a.x` whose bounds
//! encode the sense, so the working system is `A x - r = 0` with all columns
//! bounded on at least one side. Phase 1 minimises the sum of bound
//! infeasibilities of the basic variables; phase 2 minimises the objective.
//!
//! Dual convention: `row_duals[i]` is the sensitivity of the optimal value to
//! the row's right-hand side (so a binding `<=` row in a minimisation has a
//! nonpositive dual). Bound multipliers are reported as `(u, v) >= 0` for the
//! upper and lower bound respectively, and
//! `objective = sum_i dual_i * rhs_i + sum_j (v_j * lo_j - u_j * hi_j)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Sense;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 150;
const DEGENERATE_BEFORE_BLAND: usize = 60;
const HARRIS_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-11;
const MAX_ROUNDS: usize = 6;
const LAZY_MIN_ROWS: usize = 120;
const LAZY_BATCH: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LpRow {
    pub fn new(terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        LpRow { terms, sense, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        self.sense.violation(self.lhs(x), self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn n(&self) -> usize {
        self.objective.len()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, lo: f64, hi: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(LpRow { terms, sense, rhs });
        self.rows.len() - 1
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for r in &self.rows {
            worst = worst.max(r.violation(x));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub row_duals: Vec<f64>,
    /// `(u, v)`: multipliers of the upper and lower bound of each variable.
    pub bound_multipliers: Vec<(f64, f64)>,
}

impl LpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn without_solution(status: LpStatus, n: usize, m: usize) -> Self {
        let objective = match status {
            LpStatus::Infeasible => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        LpResult { status, x: vec![0.0; n], objective, row_duals: vec![0.0; m], bound_multipliers: vec![(0.0, 0.0); n] }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("lp dimension mismatch: {0}")]
    Dimension(String),
    #[error("lp data not finite: {0}")]
    NotFinite(String),
    #[error("simplex pivot limit reached after {0} pivots")]
    PivotLimit(usize),
    #[error("singular basis during refactorisation")]
    Singular,
}

fn check(p: &LpProblem) -> Result<(), LpError> {
    let n = p.n();
    if p.lower.len() != n || p.upper.len() != n {
        return Err(LpError::Dimension(format!("{n} costs, {} lower, {} upper", p.lower.len(), p.upper.len())));
    }
    for j in 0..n {
        if !p.lower[j].is_finite() || !p.upper[j].is_finite() || !p.objective[j].is_finite() {
            return Err(LpError::NotFinite(format!("variable {j}")));
        }
    }
    for (i, r) in p.rows.iter().enumerate() {
        if !r.rhs.is_finite() {
            return Err(LpError::NotFinite(format!("rhs of row {i}")));
        }
        for &(j, a) in &r.terms {
            if j >= n {
                return Err(LpError::Dimension(format!("row {i} references variable {j}")));
            }
            if !a.is_finite() {
                return Err(LpError::NotFinite(format!("row {i} coefficient")));
            }
        }
    }
    Ok(())
}

struct Tableau {
    n: usize,
    m: usize,
    /// Row-major `m x (n + m)`: `B^-1 [A | -I]`.
    t: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    val: Vec<f64>,
    basis: Vec<usize>,
    /// Row position of a basic column, `usize::MAX` otherwise.
    pos: Vec<usize>,
    a: Vec<f64>,
    /// Set when refactorisation had to replace dependent basis columns.
    repaired: bool,
}

impl Tableau {
    fn width(&self) -> usize {
        self.n + self.m
    }

    fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.t[i * w..(i + 1) * w]
    }

    fn is_basic(&self, j: usize) -> bool {
        self.pos[j] != usize::MAX
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.val[j];
        if v < self.lo[j] - PRIMAL_TOL * (1.0 + self.lo[j].abs()) {
            -1.0
        } else if v > self.hi[j] + PRIMAL_TOL * (1.0 + self.hi[j].abs()) {
            1.0
        } else {
            0.0
        }
    }

    fn any_infeasible(&self) -> bool {
        (0..self.m).any(|r| self.infeasibility(self.basis[r]) != 0.0)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width();
        let piv = self.t[r * w + q];
        {
            let row = &mut self.t[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        let nz: Vec<usize> = (0..w).filter(|&j| prow[j] != 0.0).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            for &j in &nz {
                row[j] -= f * prow[j];
            }
            row[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.pos[leaving] = usize::MAX;
        self.basis[r] = q;
        self.pos[q] = r;
    }

    /// Rebuilds `B^-1 [A | -I]` from the original data and recomputes the
    /// basic values from the nonbasic ones.
    fn refactor(&mut self) -> Result<(), LpError> {
        let (n, m, w) = (self.n, self.m, self.width());
        // Basis matrix columns.
        let mut bmat = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat[i * m + k] = if j < n { self.a[i * n + j] } else if j - n == i { -1.0 } else { 0.0 };
            }
        }
        // Gauss-Jordan on [B | A | -I].
        let mut aug = vec![0.0; m * (m + w)];
        let aw = m + w;
        for i in 0..m {
            aug[i * aw..i * aw + m].copy_from_slice(&bmat[i * m..(i + 1) * m]);
            aug[i * aw + m..i * aw + m + n].copy_from_slice(&self.a[i * n..(i + 1) * n]);
            aug[i * aw + m + n + i] = -1.0;
        }
        for k in 0..m {
            let mut best = k;
            for i in k + 1..m {
                if aug[i * aw + k].abs() > aug[best * aw + k].abs() {
                    best = i;
                }
            }
            if aug[best * aw + k].abs() < SINGULAR_TOL {
                // Column k depends on the earlier ones: swap in the row
                // activity whose transformed column has the largest entry
                // below the finished part.
                let mut pick: Option<(usize, f64)> = None;
                for i in 0..m {
                    if self.is_basic(n + i) {
                        continue;
                    }
                    let c = m + n + i;
                    let size = (k..m).map(|r| aug[r * aw + c].abs()).fold(0.0, f64::max);
                    if size > pick.map_or(SINGULAR_TOL, |p| p.1) {
                        pick = Some((i, size));
                    }
                }
                let Some((i, _)) = pick else {
                    return Err(LpError::Singular);
                };
                for r in 0..m {
                    aug[r * aw + k] = aug[r * aw + m + n + i];
                }
                let old = self.basis[k];
                self.pos[old] = usize::MAX;
                self.basis[k] = n + i;
                self.pos[n + i] = k;
                let (lo, hi) = (self.lo[old], self.hi[old]);
                let v = self.val[old].clamp(lo, hi);
                self.val[old] = if !lo.is_finite() {
                    hi
                } else if !hi.is_finite() || v - lo <= hi - v {
                    lo
                } else {
                    hi
                };
                self.repaired = true;
                best = k;
                for r in k + 1..m {
                    if aug[r * aw + k].abs() > aug[best * aw + k].abs() {
                        best = r;
                    }
                }
            }
            if best != k {
                for c in 0..aw {
                    aug.swap(k * aw + c, best * aw + c);
                }
            }
            let piv = aug[k * aw + k];
            for c in 0..aw {
                aug[k * aw + c] /= piv;
            }
            let prow: Vec<f64> = aug[k * aw..(k + 1) * aw].to_vec();
            let nz: Vec<usize> = (0..aw).filter(|&c| prow[c] != 0.0).collect();
            for i in 0..m {
                if i == k {
                    continue;
                }
                let f = aug[i * aw + k];
                if f != 0.0 {
                    let row = &mut aug[i * aw..(i + 1) * aw];
                    for &c in &nz {
                        row[c] -= f * prow[c];
                    }
                }
            }
        }
        for i in 0..m {
            self.t[i * w..(i + 1) * w].copy_from_slice(&aug[i * aw + m..(i + 1) * aw]);
        }
        for (r, &j) in self.basis.iter().enumerate() {
            self.t[r * w + j] = 1.0;
        }
        self.recompute_basic_values();
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let w = self.width();
        for r in 0..self.m {
            let row = &self.t[r * w..(r + 1) * w];
            let mut s = 0.0;
            for j in 0..w {
                if !self.is_basic(j) && row[j] != 0.0 {
                    s -= row[j] * self.val[j];
                }
            }
            let b = self.basis[r];
            self.val[b] = s;
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let w = self.width();
        let mut d = cost.to_vec();
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            let row = self.row(r);
            for j in 0..w {
                d[j] -= cb * row[j];
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        d
    }

    /// Runs simplex iterations for `cost`. `phase_one` re-derives costs from
    /// the current infeasibilities each iteration. Returns `Ok(true)` at an
    /// optimum for the current cost.
    fn iterate(&mut self, objective: &[f64], phase_one: bool, pivots: &mut usize, limit: usize) -> Result<(), LpError> {
        let w = self.width();
        let mut degenerate = 0usize;
        let mut since_refactor = 0usize;
        loop {
            if *pivots > limit {
                return Err(LpError::PivotLimit(*pivots));
            }
            let cost: Vec<f64> = if phase_one {
                let mut c = vec![0.0; w];
                for &b in &self.basis {
                    c[b] = self.infeasibility(b);
                }
                if c.iter().all(|&v| v == 0.0) {
                    return Ok(());
                }
                c
            } else {
                objective.to_vec()
            };
            let d = self.reduced_costs(&cost);
            let bland = degenerate >= DEGENERATE_BEFORE_BLAND;
            // Entering column and direction (+1 increase, -1 decrease).
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..w {
                if self.is_basic(j) || self.hi[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let at_lo = self.lo[j].is_finite() && self.val[j] <= self.lo[j];
                let at_hi = self.hi[j].is_finite() && self.val[j] >= self.hi[j];
                let dir = if d[j] < -COST_TOL && !at_hi {
                    1.0
                } else if d[j] > COST_TOL && !at_lo {
                    -1.0
                } else {
                    continue;
                };
                let score = d[j].abs();
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if score > best {
                    best = score;
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                return Ok(());
            };
            // Harris ratio test: the largest step allowed with bounds relaxed
            // by a small tolerance, then the largest pivot among rows that
            // block within that step.
            let flip = self.hi[q] - self.lo[q];
            let mut blocking: Vec<(usize, f64, f64, f64)> = Vec::new(); // (row, ratio, target, |alpha|)
            let mut relaxed_max = flip;
            for r in 0..self.m {
                let alpha = self.t[r * w + q];
                if alpha.abs() < PIVOT_TOL {
                    continue;
                }
                let b = self.basis[r];
                let rate = -alpha * dir;
                let v = self.val[b];
                let infeas = if phase_one { self.infeasibility(b) } else { 0.0 };
                let target = if rate > 0.0 {
                    if infeas < 0.0 {
                        self.lo[b]
                    } else if infeas > 0.0 || !self.hi[b].is_finite() {
                        continue;
                    } else {
                        self.hi[b]
                    }
                } else if infeas > 0.0 {
                    self.hi[b]
                } else if infeas < 0.0 || !self.lo[b].is_finite() {
                    continue;
                } else {
                    self.lo[b]
                };
                let slack = HARRIS_TOL * (1.0 + target.abs());
                let relaxed = if rate > 0.0 { (target + slack - v) / rate } else { (target - slack - v) / rate };
                relaxed_max = relaxed_max.min(relaxed.max(0.0));
                blocking.push((r, ((target - v) / rate).max(0.0), target, alpha.abs()));
            }
            let mut leave: Option<(usize, f64)> = None;
            let mut step = flip;
            if relaxed_max < flip {
                let mut best_alpha = 0.0;
                for &(r, ratio, target, alpha) in &blocking {
                    if ratio > relaxed_max {
                        continue;
                    }
                    let better = if bland {
                        leave.map_or(true, |(lr, _): (usize, f64)| self.basis[r] < self.basis[lr])
                    } else {
                        alpha > best_alpha
                    };
                    if better {
                        best_alpha = alpha;
                        leave = Some((r, target));
                        step = ratio;
                    }
                }
            }
            if !step.is_finite() {
                return Err(LpError::NotFinite("unbounded ray with finite bounds".into()));
            }
            // Move.
            self.val[q] += dir * step;
            for r in 0..self.m {
                let alpha = self.t[r * w + q];
                if alpha != 0.0 {
                    let b = self.basis[r];
                    self.val[b] -= alpha * dir * step;
                }
            }
            match leave {
                None => {
                    // Bound flip.
                    self.val[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some((r, target)) => {
                    let b = self.basis[r];
                    self.pivot(r, q);
                    self.val[b] = target;
                    since_refactor += 1;
                }
            }
            *pivots += 1;
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
                if self.repaired && !phase_one {
                    return Ok(());
                }
            }
        }
    }
}

/// Solves `min c.x` over rows and bounds.
pub fn solve_lp(p: &LpProblem) -> Result<LpResult, LpError> {
    check(p)?;
    let n = p.n();
    let m = p.rows.len();
    for j in 0..n {
        if p.lower[j] > p.upper[j] {
            return Ok(LpResult::without_solution(LpStatus::Infeasible, n, m));
        }
    }
    if (0..n).any(|j| p.lower[j] == p.upper[j]) {
        solve_without_fixed(p)
    } else {
        solve_rows(p)
    }
}

/// Moves fixed columns into the row bounds, drops rows left empty, and
/// recovers the multipliers of the fixed columns from their reduced costs.
fn solve_without_fixed(p: &LpProblem) -> Result<LpResult, LpError> {
    let n = p.n();
    let m = p.rows.len();
    let mut col = vec![usize::MAX; n];
    let mut q = LpProblem::default();
    for j in 0..n {
        if p.lower[j] < p.upper[j] {
            col[j] = q.add_var(p.lower[j], p.upper[j], p.objective[j]);
        }
    }
    let mut kept = vec![usize::MAX; m];
    for (i, r) in p.rows.iter().enumerate() {
        let mut rhs = r.rhs;
        let mut terms = Vec::with_capacity(r.terms.len());
        for &(j, a) in &r.terms {
            if col[j] == usize::MAX {
                rhs -= a * p.lower[j];
            } else {
                terms.push((col[j], a));
            }
        }
        if terms.is_empty() {
            if r.sense.violation(0.0, rhs) > PRIMAL_TOL * (1.0 + r.rhs.abs()) {
                return Ok(LpResult::without_solution(LpStatus::Infeasible, n, m));
            }
        } else {
            kept[i] = q.add_row(terms, r.sense, rhs);
        }
    }
    let inner = solve_rows(&q)?;
    if !inner.is_optimal() {
        return Ok(LpResult::without_solution(inner.status, n, m));
    }
    let x: Vec<f64> = (0..n).map(|j| if col[j] == usize::MAX { p.lower[j] } else { inner.x[col[j]] }).collect();
    let row_duals: Vec<f64> = kept.iter().map(|&k| if k == usize::MAX { 0.0 } else { inner.row_duals[k] }).collect();
    let mut d = p.objective.clone();
    for (r, &y) in p.rows.iter().zip(&row_duals) {
        if y != 0.0 {
            for &(j, a) in &r.terms {
                d[j] -= y * a;
            }
        }
    }
    let bound_multipliers = (0..n)
        .map(|j| if col[j] == usize::MAX { ((-d[j]).max(0.0), d[j].max(0.0)) } else { inner.bound_multipliers[col[j]] })
        .collect();
    let objective = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpResult { status: LpStatus::Optimal, x, objective, row_duals, bound_multipliers })
}

/// Inequality rows kept out of the first solve when there are many of
/// them; violated ones are added back until none is left.
fn solve_rows(p: &LpProblem) -> Result<LpResult, LpError> {
    let m = p.rows.len();
    let optional = p.rows.iter().filter(|r| r.sense != Sense::Eq).count();
    if m < LAZY_MIN_ROWS || optional * 2 < m {
        return solve_free(p);
    }
    let mut active: Vec<bool> = p.rows.iter().map(|r| r.sense == Sense::Eq).collect();
    loop {
        let kept: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
        let q = LpProblem {
            objective: p.objective.clone(),
            rows: kept.iter().map(|&i| p.rows[i].clone()).collect(),
            lower: p.lower.clone(),
            upper: p.upper.clone(),
        };
        let r = solve_free(&q)?;
        if !r.is_optimal() {
            return Ok(LpResult::without_solution(r.status, p.n(), m));
        }
        // Most violated rows first, a batch at a time.
        let mut missing: Vec<(f64, usize)> = (0..m)
            .filter(|&i| !active[i])
            .map(|i| (p.rows[i].violation(&r.x) / (1.0 + p.rows[i].rhs.abs()), i))
            .filter(|&(v, _)| v > PRIMAL_TOL)
            .collect();
        missing.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let batch = LAZY_BATCH.max(kept.len() / 4);
        for &(_, i) in missing.iter().take(batch) {
            active[i] = true;
        }
        let added = !missing.is_empty();
        if !added {
            let mut row_duals = vec![0.0; m];
            for (k, &i) in kept.iter().enumerate() {
                row_duals[i] = r.row_duals[k];
            }
            return Ok(LpResult { row_duals, ..r });
        }
    }
}

fn build_tableau(p: &LpProblem) -> Tableau {
    let n = p.n();
    let m = p.rows.len();
    let w = n + m;
    let mut a = vec![0.0; m * n];
    for (i, r) in p.rows.iter().enumerate() {
        for &(j, c) in &r.terms {
            a[i * n + j] += c;
        }
    }
    let mut lo = Vec::with_capacity(w);
    let mut hi = Vec::with_capacity(w);
    lo.extend_from_slice(&p.lower);
    hi.extend_from_slice(&p.upper);
    for r in &p.rows {
        match r.sense {
            Sense::Le => {
                lo.push(f64::NEG_INFINITY);
                hi.push(r.rhs);
            }
            Sense::Ge => {
                lo.push(r.rhs);
                hi.push(f64::INFINITY);
            }
            Sense::Eq => {
                lo.push(r.rhs);
                hi.push(r.rhs);
            }
        }
    }
    let mut val = vec![0.0; w];
    for j in 0..n {
        val[j] = if p.upper[j].abs() < p.lower[j].abs() { p.upper[j] } else { p.lower[j] };
    }
    for i in 0..m {
        val[n + i] = (0..n).map(|j| a[i * n + j] * val[j]).sum();
    }
    // Initial basis: the row activities, B = -I so B^-1 [A | -I] = [-A | I].
    let mut t = vec![0.0; m * w];
    for i in 0..m {
        for j in 0..n {
            t[i * w + j] = -a[i * n + j];
        }
        t[i * w + n + i] = 1.0;
    }
    let mut pos = vec![usize::MAX; w];
    let basis: Vec<usize> = (n..w).collect();
    for (r, &b) in basis.iter().enumerate() {
        pos[b] = r;
    }
    Tableau { n, m, t, lo, hi, val, basis, pos, a, repaired: false }
}

impl Tableau {
    /// Runs both phases for `objective` from the current basis. Returns
    /// `Ok(false)` when the rows and bounds admit no point.
    fn optimize(&mut self, objective: &[f64]) -> Result<bool, LpError> {
        let (n, m, w) = (self.n, self.m, self.width());
        let mut cost = objective.to_vec();
        cost.resize(w, 0.0);
        let limit = 200 * (m + n) + 5_000;
        let mut pivots = 0usize;
        let mut round = 0;
        loop {
            round += 1;
            self.iterate(&cost, true, &mut pivots, limit)?;
            if self.any_infeasible() {
                if pivots > 0 {
                    self.refactor()?;
                    self.iterate(&cost, true, &mut pivots, limit)?;
                }
                if self.any_infeasible() {
                    return Ok(false);
                }
            }
            self.repaired = false;
            self.iterate(&cost, false, &mut pivots, limit)?;
            if self.repaired || self.any_infeasible() {
                // Phase 2 stopped after a basis repair, or steps along columns
                // with negligible entries left small violations behind.
                self.repaired = false;
                if round < MAX_ROUNDS {
                    continue;
                }
            }
            // Long runs get refactorised and re-checked to shed drift.
            if pivots < 40 || round >= MAX_ROUNDS {
                break;
            }
            self.refactor()?;
            self.repaired = false;
            if self.any_infeasible() {
                continue;
            }
            let d = self.reduced_costs(&cost);
            let improvable = (0..w).any(|j| {
                !self.is_basic(j)
                    && self.hi[j] > self.lo[j]
                    && ((d[j] < -COST_TOL && self.val[j] < self.hi[j]) || (d[j] > COST_TOL && self.val[j] > self.lo[j]))
            });
            if !improvable {
                break;
            }
        }
        if self.any_infeasible() {
            return Err(LpError::Singular);
        }
        Ok(true)
    }

    /// Solution, duals and bound multipliers of the current optimal basis.
    fn extract(&self, objective: &[f64]) -> LpResult {
        let (n, m, w) = (self.n, self.m, self.width());
        let mut cost = objective.to_vec();
        cost.resize(w, 0.0);
        let d = self.reduced_costs(&cost);
        let x: Vec<f64> = (0..n).map(|j| self.val[j].clamp(self.lo[j], self.hi[j])).collect();
        let row_duals: Vec<f64> = (0..m).map(|i| if self.is_basic(n + i) { 0.0 } else { d[n + i] }).collect();
        let bound_multipliers: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                if self.is_basic(j) {
                    (0.0, 0.0)
                } else if self.hi[j] == self.lo[j] {
                    ((-d[j]).max(0.0), d[j].max(0.0))
                } else if self.val[j] >= self.hi[j] {
                    ((-d[j]).max(0.0), 0.0)
                } else {
                    (0.0, d[j].max(0.0))
                }
            })
            .collect();
        let objective = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpResult { status: LpStatus::Optimal, x, objective, row_duals, bound_multipliers }
    }

    /// Replaces the bounds of structural `j`, keeping basic values in step.
    fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.is_basic(j) {
            return;
        }
        let old = self.val[j];
        let v = if (old - lo).abs() <= (hi - old).abs() { lo } else { hi };
        let delta = v - old;
        if delta == 0.0 {
            return;
        }
        self.val[j] = v;
        let w = self.width();
        for r in 0..self.m {
            let alpha = self.t[r * w + j];
            if alpha != 0.0 {
                let b = self.basis[r];
                self.val[b] -= alpha * delta;
            }
        }
    }
}

fn solve_free(p: &LpProblem) -> Result<LpResult, LpError> {
    let mut tab = build_tableau(p);
    if !tab.optimize(&p.objective)? {
        return Ok(LpResult::without_solution(LpStatus::Infeasible, p.n(), p.rows.len()));
    }
    Ok(tab.extract(&p.objective))
}

/// A fixed set of rows optimised for a sequence of objectives and variable
/// bounds; every solve starts from the basis the previous one ended in.
pub struct LpSession {
    n: usize,
    m: usize,
    tab: Option<Tableau>,
}

impl LpSession {
    pub fn new(p: &LpProblem) -> Result<Self, LpError> {
        check(p)?;
        let empty = (0..p.n()).any(|j| p.lower[j] > p.upper[j]);
        let tab = (!empty).then(|| build_tableau(p));
        Ok(LpSession { n: p.n(), m: p.rows.len(), tab })
    }

    pub fn solve(&mut self, objective: &[f64]) -> Result<LpResult, LpError> {
        if objective.len() != self.n || objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Dimension(format!("objective of length {} for {} variables", objective.len(), self.n)));
        }
        let Some(tab) = self.tab.as_mut() else {
            return Ok(LpResult::without_solution(LpStatus::Infeasible, self.n, self.m));
        };
        if !tab.optimize(objective)? {
            return Ok(LpResult::without_solution(LpStatus::Infeasible, self.n, self.m));
        }
        Ok(tab.extract(objective))
    }

    /// Changes the box of variable `j` for later solves.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) -> Result<(), LpError> {
        if j >= self.n || !lo.is_finite() || !hi.is_finite() {
            return Err(LpError::Dimension(format!("bounds of variable {j}")));
        }
        if lo > hi {
            self.tab = None;
        } else if let Some(tab) = self.tab.as_mut() {
            tab.set_bounds(j, lo, hi);
        }
        Ok(())
    }
}

/// Dual objective `sum_i dual_i * rhs_i + sum_j (v_j lo_j - u_j hi_j)`.
pub fn dual_objective(p: &LpProblem, r: &LpResult) -> f64 {
    let rows: f64 = p.rows.iter().zip(&r.row_duals).map(|(row, y)| y * row.rhs).sum();
    let bounds: f64 = r
        .bound_multipliers
        .iter()
        .enumerate()
        .map(|(j, &(u, v))| v * p.lower[j] - u * p.upper[j])
        .sum();
    rows + bounds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(obj: Vec<f64>, bounds: Vec<(f64, f64)>, rows: Vec<LpRow>) -> LpProblem {
        LpProblem {
            objective: obj,
            rows,
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
        }
    }

    #[test]
    fn single_variable_at_lower_bound() {
        let p = lp(vec![1.0], vec![(1.0, 5.0)], vec![]);
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_eq!(r.x, vec![1.0]);
        assert_eq!(r.objective, 1.0);
        assert_eq!(r.bound_multipliers[0], (0.0, 1.0));
    }

    #[test]
    fn contradictory_rows_infeasible() {
        let p = lp(
            vec![0.0],
            vec![(-10.0, 10.0)],
            vec![LpRow::new(vec![(0, 1.0)], Sense::Ge, 1.0), LpRow::new(vec![(0, 1.0)], Sense::Le, 0.0)],
        );
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn triangle_vertex_and_dual() {
        let p = lp(vec![-1.0, -1.0], vec![(0.0, 1.0), (0.0, 1.0)], vec![LpRow::new(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.0)]);
        let r = solve_lp(&p).unwrap();
        // Vertex enumeration of the polygon {x+y<=1} in the unit box.
        let verts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let best = verts.iter().map(|(a, b)| -a - b).fold(f64::INFINITY, f64::min);
        assert!((r.objective - best).abs() < 1e-12);
        assert!((r.row_duals[0] + 1.0).abs() < 1e-12);
        assert!((dual_objective(&p, &r) - r.objective).abs() < 1e-12);
    }

    #[test]
    fn equality_rows_and_negative_bounds() {
        // min x - y  s.t. x + y = 2, x - y >= -3, x in [-5, 5], y in [-1, 4]
        let p = lp(
            vec![1.0, -1.0],
            vec![(-5.0, 5.0), (-1.0, 4.0)],
            vec![LpRow::new(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 2.0), LpRow::new(vec![(0, 1.0), (1, -1.0)], Sense::Ge, -3.0)],
        );
        let r = solve_lp(&p).unwrap();
        assert!((r.objective + 3.0).abs() < 1e-9, "{r:?}");
        assert!((dual_objective(&p, &r) - r.objective).abs() < 1e-9);
    }

    #[test]
    fn empty_rows() {
        let p = lp(vec![-2.0, 3.0, 0.0], vec![(0.0, 4.0), (-1.0, 2.0), (0.5, 0.5)], vec![]);
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.x, vec![4.0, -1.0, 0.5]);
        assert!((dual_objective(&p, &r) - r.objective).abs() < 1e-12);
    }
}
