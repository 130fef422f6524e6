//! Joint decomposition: Lagrangian iterations (primal problem, restricted
//! primal master, Lagrangian subproblems) interleaved with Benders
//! iterations on a master carrying both Benders and Lagrangian cuts. The
//! enhanced variant adds bound tightening and a relaxed master solved first.

pub mod pools;
pub mod sub;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flat::{full_problem, Layout};
use crate::global::{solve_global_with, GlobalError, GlobalOptions, GlobalResult, GlobalStatus};
use crate::lp::LpError;
use crate::model::{evaluate, Solution, Status, StructuredProblem, FEAS_TOL};
use crate::relax::BoundsState;

pub use pools::{BendersCut, Column, ColumnPool, ColumnSource, CutKind, CutPool, LagrangianCut};
use sub::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Jd1,
    Jd2,
    Monolith,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JdConfig {
    pub eps: f64,
    pub max_iters: usize,
    pub max_gbd_iters: usize,
    pub odr_enabled: bool,
    pub mdr_enabled: bool,
    pub jrmpr_first: bool,
    /// Tolerance for the global subproblems; `eps / 10` when unset.
    pub sub_tol: Option<f64>,
    pub max_nodes: usize,
    /// Scenario-batch threads; one per scenario when unset.
    pub threads: Option<usize>,
    /// When false, every recorded wall time is zero so traces are
    /// reproducible byte for byte.
    pub include_timing: bool,
}

impl Default for JdConfig {
    fn default() -> Self {
        JdConfig {
            eps: 1e-3,
            max_iters: 200,
            max_gbd_iters: 200,
            odr_enabled: false,
            mdr_enabled: false,
            jrmpr_first: false,
            sub_tol: None,
            max_nodes: 1_000_000,
            threads: None,
            include_timing: true,
        }
    }
}

impl JdConfig {
    pub fn jd1() -> Self {
        JdConfig::default()
    }

    pub fn jd2() -> Self {
        JdConfig { odr_enabled: true, mdr_enabled: true, jrmpr_first: true, ..JdConfig::default() }
    }

    pub fn for_algorithm(alg: Algorithm) -> Self {
        match alg {
            Algorithm::Jd2 => JdConfig::jd2(),
            _ => JdConfig::jd1(),
        }
    }

    fn sub_options(&self) -> GlobalOptions {
        let t = self.sub_tol.unwrap_or(self.eps / 10.0);
        GlobalOptions { abs_tol: t, rel_tol: t, max_nodes: self.max_nodes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Ld,
    Gbd,
    Monolith,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub phase: Phase,
    pub subproblem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<usize>,
    pub status: String,
    pub objective: Option<f64>,
    pub wall_ms: f64,
    pub ubd: Option<f64>,
    pub lbd: Option<f64>,
}

/// Boxes right after a domain-reduction pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSnapshot {
    pub iter: usize,
    pub source: String,
    pub x0: Vec<(f64, f64)>,
    pub y: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsLedger {
    pub ubd: f64,
    pub lbd: f64,
    pub incumbent: Option<Solution>,
    pub trace: Vec<TraceRecord>,
    pub boxes: Vec<BoxSnapshot>,
}

impl Default for BoundsLedger {
    fn default() -> Self {
        BoundsLedger { ubd: f64::INFINITY, lbd: f64::NEG_INFINITY, incumbent: None, trace: vec![], boxes: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: Status,
    pub objective: Option<f64>,
    pub ubd: Option<f64>,
    pub lbd: Option<f64>,
    pub iters: usize,
    pub gbd_iters: usize,
    pub jrmp_count: usize,
    pub jrmpr_count: usize,
    pub columns: usize,
    pub benders_cuts: usize,
    pub lagrangian_cuts: usize,
    pub odr_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct JdRun {
    pub solution: Solution,
    pub ledger: BoundsLedger,
    pub cuts: CutPool,
    pub columns: ColumnPool,
    pub summary: Summary,
}

impl JdRun {
    pub fn trace_jsonl(&self) -> String {
        trace_jsonl(&self.ledger.trace)
    }
}

pub fn trace_jsonl(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Error)]
pub enum JdError {
    #[error(transparent)]
    Global(#[from] GlobalError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("restricted primal master has no feasible column combination")]
    NoColumn,
}

/// Terminal states of the iteration.
enum Stop {
    Optimal,
    Infeasible,
    IterationLimit,
}

struct Driver<'a> {
    p: &'a StructuredProblem,
    cfg: &'a JdConfig,
    sub: GlobalOptions,
    ledger: BoundsLedger,
    cuts: CutPool,
    columns: ColumnPool,
    bounds: BoundsState,
    threads: rayon::ThreadPool,
    iter: usize,
    phase: Phase,
    gbd_iters: usize,
    jrmp_count: usize,
    jrmpr_count: usize,
    odr_ms: f64,
    /// Primal-problem results already computed for the initial point.
    cached_pp: Option<(Vec<f64>, Vec<ScenarioSolve>)>,
}

fn status_name(r: &GlobalResult) -> String {
    match r.status {
        GlobalStatus::Optimal => "optimal",
        GlobalStatus::Infeasible => "infeasible",
        GlobalStatus::GapLimit => "gap-limit",
    }
    .to_string()
}

/// `x0` lies in the linking box, is integral on binaries and satisfies the
/// linking rows.
fn linking_feasible(p: &StructuredProblem, x0: &[f64]) -> bool {
    let l = &p.linking;
    x0.len() == l.dim()
        && x0.iter().zip(l.relaxed_bounds()).all(|(&v, (lo, hi))| v >= lo - FEAS_TOL && v <= hi + FEAS_TOL)
        && x0.iter().zip(&l.binary).all(|(&v, &b)| !b || (v - v.round()).abs() <= FEAS_TOL)
        && l.rows.iter().all(|r| r.violation(|v| x0[v.index]) <= FEAS_TOL)
}

impl<'a> Driver<'a> {
    fn new(p: &'a StructuredProblem, cfg: &'a JdConfig) -> Result<Self, JdError> {
        if !(cfg.eps > 0.0) {
            return Err(JdError::Config("eps must be positive".into()));
        }
        let n = cfg.threads.unwrap_or(p.scenarios.len()).max(1);
        let threads = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| JdError::Config(e.to_string()))?;
        Ok(Driver {
            p,
            cfg,
            sub: cfg.sub_options(),
            ledger: BoundsLedger::default(),
            cuts: CutPool::default(),
            columns: ColumnPool::default(),
            bounds: BoundsState::from_problem(p),
            threads,
            iter: 0,
            phase: Phase::Init,
            gbd_iters: 0,
            jrmp_count: 0,
            jrmpr_count: 0,
            odr_ms: 0.0,
            cached_pp: None,
        })
    }

    fn ms(&self, t0: Instant) -> f64 {
        if self.cfg.include_timing {
            t0.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    }

    fn record(&mut self, sub: &str, omega: Option<usize>, status: &str, objective: f64, wall_ms: f64) {
        let r = TraceRecord {
            iter: self.iter,
            phase: self.phase,
            subproblem: sub.to_string(),
            omega,
            status: status.to_string(),
            objective: finite(objective),
            wall_ms,
            ubd: finite(self.ledger.ubd),
            lbd: finite(self.ledger.lbd),
        };
        self.ledger.trace.push(r);
    }

    fn snapshot(&mut self, source: &str) {
        self.ledger.boxes.push(BoxSnapshot {
            iter: self.iter,
            source: source.into(),
            x0: self.bounds.x0.clone(),
            y: self.bounds.y.clone(),
        });
    }

    fn eps_now(&self) -> f64 {
        let u = self.ledger.ubd;
        if u.is_finite() {
            self.cfg.eps.max(self.cfg.eps * u.abs())
        } else {
            self.cfg.eps
        }
    }

    fn converged(&self) -> bool {
        self.ledger.ubd.is_finite() && self.ledger.ubd <= self.ledger.lbd + self.eps_now()
    }

    fn raise_lbd(&mut self, v: f64) {
        if v > self.ledger.lbd {
            self.ledger.lbd = v;
        }
    }

    fn batch<R: Send>(&self, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
        let s = self.p.scenarios.len();
        self.threads.install(|| (0..s).into_par_iter().map(f).collect())
    }

    /// Initial linking point with a feasible completion.
    fn initial_point(&mut self) -> Result<Option<(Vec<f64>, Vec<Vec<f64>>)>, JdError> {
        let p = self.p;
        if let Some(x0) = p.meta.initial_x0.clone().filter(|x0| linking_feasible(p, x0)) {
            let t0 = Instant::now();
            let sub = self.sub;
            let res = self.batch(|w| solve_pp(p, w, &x0, &sub));
            let ms = self.ms(t0);
            let mut parts = Vec::new();
            for (w, r) in res.into_iter().enumerate() {
                let r = r?;
                self.record("pp", Some(w), &status_name(&r.result), r.result.objective, ms);
                parts.push(r);
            }
            if parts.iter().all(ScenarioSolve::feasible) {
                let y = parts.iter().map(|s| s.y.clone()).collect();
                self.cached_pp = Some((x0.clone(), parts));
                return Ok(Some((x0, y)));
            }
        }
        let t0 = Instant::now();
        let r = solve_ifp(p, self.cfg.max_nodes)?;
        let ms = self.ms(t0);
        self.record("ifp", None, &status_name(&r.result), r.result.objective, ms);
        if r.feasible() {
            Ok(Some((snap_binaries(p, r.x0), r.y)))
        } else if r.proves_infeasible() {
            Ok(None)
        } else {
            Err(JdError::NoColumn)
        }
    }

    /// Primal problems at `x0`, with feasibility problems where they fail.
    fn pp_step(&mut self, x0: &[f64]) -> Result<Option<Vec<Vec<f64>>>, JdError> {
        let p = self.p;
        let sub = self.sub;
        let parts = match self.cached_pp.take() {
            Some((cx, parts)) if cx == x0 => parts,
            _ => {
                let t0 = Instant::now();
                let res = self.batch(|w| solve_pp(p, w, x0, &sub));
                let ms = self.ms(t0);
                let mut parts = Vec::new();
                for (w, r) in res.into_iter().enumerate() {
                    let r = r?;
                    self.record("pp", Some(w), &status_name(&r.result), r.result.objective, ms);
                    parts.push(r);
                }
                parts
            }
        };
        let failed: Vec<usize> = (0..parts.len()).filter(|&w| !parts[w].feasible()).collect();
        let mut ys: Vec<Vec<f64>> = parts.iter().map(|s| s.y.clone()).collect();
        if failed.is_empty() {
            self.columns.push(ColumnSource::Pp, ys.clone());
            return Ok(Some(ys));
        }
        let t0 = Instant::now();
        let res: Vec<_> = self.threads.install(|| failed.par_iter().map(|&w| solve_fp(p, w, x0, &sub)).collect());
        let ms = self.ms(t0);
        for (&w, r) in failed.iter().zip(res) {
            let r = r?;
            self.record("fp", Some(w), &status_name(&r.result), r.result.objective, ms);
            if !r.feasible() {
                return Ok(None);
            }
            ys[w] = r.y;
        }
        self.columns.push(ColumnSource::Fp, ys.clone());
        Ok(Some(ys))
    }

    /// Benders primal problems at `(x0, y)`; cuts for every scenario and an
    /// upper bound when the point is feasible. `Ok(false)` if a feasibility
    /// problem itself fails, which proves infeasibility.
    fn bpp_step(&mut self, x0: &[f64], ys: &[Vec<f64>]) -> Result<bool, JdError> {
        let p = self.p;
        let t0 = Instant::now();
        let res = self.batch(|w| solve_bpp(p, w, x0, &ys[w]));
        let ms = self.ms(t0);
        let mut all_ok = true;
        let mut total = 0.0;
        let mut xs = Vec::new();
        for (w, r) in res.into_iter().enumerate() {
            let r = r?;
            if r.is_optimal() {
                self.record("bpp", Some(w), "optimal", r.objective, ms);
                let cut = benders_cut(p, w, CutKind::Optimality, self.iter, x0, &ys[w], &r);
                self.cuts.benders.push(cut);
                total += r.objective;
                xs.push(r.x[..p.scenarios[w].nx()].to_vec());
                continue;
            }
            self.record("bpp", Some(w), "infeasible", f64::INFINITY, ms);
            all_ok = false;
            let t1 = Instant::now();
            let f = solve_bfp(p, w, x0, &ys[w])?;
            let ms1 = self.ms(t1);
            if !f.is_optimal() {
                self.record("bfp", Some(w), "infeasible", f64::INFINITY, ms1);
                return Ok(false);
            }
            self.record("bfp", Some(w), "optimal", f.objective, ms1);
            if f.objective > 1e-9 {
                let cut = benders_cut(p, w, CutKind::Feasibility, self.iter, x0, &ys[w], &f);
                self.cuts.benders.push(cut);
            }
        }
        if all_ok && total < self.ledger.ubd {
            let sol = Solution { x0: x0.to_vec(), x: xs, y: ys.to_vec(), objective: total, status: Status::Feasible };
            let ok = evaluate(p, &sol).map(|r| r.max_violation <= FEAS_TOL).unwrap_or(false);
            if ok {
                self.ledger.ubd = total;
                self.ledger.incumbent = Some(sol);
            }
        }
        Ok(true)
    }

    /// `Ok(false)` when the relaxation is infeasible before any upper bound
    /// exists.
    fn odr_step(&mut self) -> Result<bool, JdError> {
        let t0 = Instant::now();
        let (u, l) = (self.ledger.ubd, self.ledger.lbd);
        let r = apply_odr(self.p, &self.cuts, u, l, &mut self.bounds)?;
        let ms = self.ms(t0);
        self.odr_ms += ms;
        match r {
            Some(moved) => {
                self.record("odr", None, "optimal", moved as f64, ms);
                self.snapshot("odr");
                Ok(true)
            }
            None => {
                self.record("odr", None, "infeasible", f64::INFINITY, ms);
                Ok(self.ledger.ubd.is_finite())
            }
        }
    }

    /// Multipliers from the restricted primal master; `None` once a
    /// feasibility problem proves there is no feasible point.
    fn rpmp_step(&mut self) -> Result<Option<Vec<Vec<f64>>>, JdError> {
        for attempt in 0..2 {
            let t0 = Instant::now();
            let r = solve_rpmp(self.p, &self.columns, &self.cuts, self.ledger.ubd)?;
            let ms = self.ms(t0);
            match r {
                Some(r) => {
                    self.record("rpmp", None, "optimal", r.objective, ms);
                    return Ok(Some(r.pi));
                }
                None => {
                    self.record("rpmp", None, "infeasible", f64::INFINITY, ms);
                    if attempt == 0 {
                        let t1 = Instant::now();
                        let f = solve_ifp(self.p, self.cfg.max_nodes)?;
                        let ms1 = self.ms(t1);
                        self.record("ifp", None, &status_name(&f.result), f.result.objective, ms1);
                        if f.proves_infeasible() {
                            return Ok(None);
                        }
                        if !f.feasible() {
                            break;
                        }
                        self.columns.push(ColumnSource::Ifp, f.y);
                    }
                }
            }
        }
        Err(JdError::NoColumn)
    }

    /// Lagrangian subproblems; returns the bound and the linking point.
    fn ls_step(&mut self, pi: &[Vec<f64>]) -> Result<Option<(f64, Vec<f64>)>, JdError> {
        let p = self.p;
        let sub = self.sub;
        let bounds = &self.bounds;
        let t0 = Instant::now();
        let res = self.threads.install(|| (0..p.scenarios.len()).into_par_iter().map(|w| solve_lsw(p, w, &pi[w], bounds, &sub)).collect::<Vec<_>>());
        let ms = self.ms(t0);
        let mut parts = Vec::new();
        for (w, r) in res.into_iter().enumerate() {
            let r = r?;
            self.record("ls", Some(w), &status_name(&r.result), r.result.lower_bound, ms);
            if r.result.status == GlobalStatus::Infeasible {
                return Ok(None);
            }
            parts.push(r);
        }
        let t1 = Instant::now();
        let ls0 = solve_ls0(p, pi, &self.cuts, self.ledger.ubd, &self.bounds)?;
        let ms1 = self.ms(t1);
        let Some(ls0) = ls0 else {
            self.record("ls0", None, "infeasible", f64::INFINITY, ms1);
            return Ok(None);
        };
        self.record("ls0", None, "optimal", ls0.objective, ms1);
        let cut = lagrangian_cut_from(self.iter, &parts, pi);
        let bound = cut.obj.iter().sum::<f64>() + ls0.objective;
        self.cuts.lagrangian.push(cut);
        self.raise_lbd(bound);
        if parts.iter().all(ScenarioSolve::feasible) {
            self.columns.push(ColumnSource::Ls, parts.iter().map(|s| s.y.clone()).collect());
        }
        Ok(Some((bound, ls0.x0)))
    }

    /// Master step; returns the anchor for the next Benders primal problem,
    /// or `None` when the master shows no point beats the incumbent.
    fn master_step(&mut self) -> Result<Option<(Vec<f64>, Vec<Vec<f64>>)>, JdError> {
        let p = self.p;
        let ubd = self.ledger.ubd;
        if self.cfg.jrmpr_first {
            let (g, m) = build_jrmp(p, &self.cuts, ubd, self.ledger.lbd, &self.bounds);
            let t0 = Instant::now();
            let r = solve_jrmpr(&g)?;
            let ms = self.ms(t0);
            self.jrmpr_count += 1;
            if !r.is_optimal() {
                self.record("jrmpr", None, "infeasible", f64::INFINITY, ms);
                return Ok(None);
            }
            self.record("jrmpr", None, "optimal", r.objective, ms);
            if self.cfg.mdr_enabled {
                let t1 = Instant::now();
                let moved = apply_mdr(p, &r, &m, ubd, &mut self.bounds);
                let ms1 = self.ms(t1);
                self.record("mdr", None, "optimal", moved as f64, ms1);
                self.snapshot("mdr");
            }
            if r.objective >= self.ledger.lbd + self.eps_now() {
                self.raise_lbd(r.objective);
                let (x0, y) = m.split(p, &r.x);
                self.columns.push(ColumnSource::Jrmpr, y.clone());
                return Ok(Some((snap_binaries(p, x0), y)));
            }
        }
        let (g, m) = build_jrmp(p, &self.cuts, ubd, self.ledger.lbd, &self.bounds);
        let t0 = Instant::now();
        let r = solve_global_with(&g, &self.sub)?;
        let ms = self.ms(t0);
        self.jrmp_count += 1;
        if r.status == GlobalStatus::Infeasible {
            self.record("jrmp", None, "infeasible", f64::INFINITY, ms);
            return Ok(None);
        }
        self.raise_lbd(r.lower_bound.min(r.objective));
        self.record("jrmp", None, &status_name(&r), r.lower_bound, ms);
        if !r.has_solution() {
            return Ok(None);
        }
        let (x0, y) = m.split(p, &r.x);
        self.columns.push(ColumnSource::Jrmp, y.clone());
        Ok(Some((snap_binaries(p, x0), y)))
    }

    fn run(&mut self) -> Result<Stop, JdError> {
        let Some((x0_init, y_init)) = self.initial_point()? else {
            return Ok(Stop::Infeasible);
        };
        self.columns.push(ColumnSource::Initial, y_init);
        if self.cfg.odr_enabled && !self.odr_step()? {
            return Ok(Stop::Infeasible);
        }
        let mut x0 = x0_init;
        let mut prev_ls = f64::NEG_INFINITY;
        loop {
            if self.iter >= self.cfg.max_iters {
                return Ok(Stop::IterationLimit);
            }
            self.iter += 1;
            self.phase = Phase::Ld;
            let Some(ys) = self.pp_step(&x0)? else {
                return Ok(Stop::Infeasible);
            };
            if !self.bpp_step(&x0, &ys)? {
                return Ok(Stop::Infeasible);
            }
            if self.cfg.odr_enabled && !self.odr_step()? {
                return Ok(Stop::Infeasible);
            }
            let Some(pi) = self.rpmp_step()? else {
                return Ok(Stop::Infeasible);
            };
            let Some((bound, next)) = self.ls_step(&pi)? else {
                return Ok(Stop::Infeasible);
            };
            x0 = next;
            if self.converged() {
                return Ok(Stop::Optimal);
            }
            let improved = bound >= prev_ls + self.eps_now();
            prev_ls = bound;
            if improved || self.gbd_iters >= self.cfg.max_gbd_iters || !self.ledger.ubd.is_finite() {
                continue;
            }
            self.phase = Phase::Gbd;
            self.gbd_iters += 1;
            match self.master_step()? {
                Some((mx0, my)) => {
                    if !self.bpp_step(&mx0, &my)? {
                        return Ok(Stop::Infeasible);
                    }
                }
                None => {
                    // No point of the master beats the incumbent.
                    let u = self.ledger.ubd;
                    self.raise_lbd(u);
                }
            }
            if self.converged() {
                return Ok(Stop::Optimal);
            }
        }
    }
}

/// Runs joint decomposition with the given configuration (`JdConfig::jd1`
/// or `JdConfig::jd2` select the two variants).
pub fn jd_solve(p: &StructuredProblem, cfg: &JdConfig) -> Result<JdRun, JdError> {
    let start = Instant::now();
    let mut d = Driver::new(p, cfg)?;
    let status = match d.run()? {
        Stop::Optimal => Status::Optimal,
        Stop::Infeasible => Status::Infeasible,
        Stop::IterationLimit => Status::IterationLimit,
    };
    let solution = match (&d.ledger.incumbent, status) {
        (_, Status::Infeasible) | (None, _) => Solution { status, ..Solution::infeasible() },
        (Some(inc), _) => Solution { status, ..inc.clone() },
    };
    let total_ms = if cfg.include_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    let summary = Summary {
        status,
        objective: finite(solution.objective).filter(|_| status != Status::Infeasible),
        ubd: finite(d.ledger.ubd),
        lbd: finite(d.ledger.lbd),
        iters: d.iter,
        gbd_iters: d.gbd_iters,
        jrmp_count: d.jrmp_count,
        jrmpr_count: d.jrmpr_count,
        columns: d.columns.len(),
        benders_cuts: d.cuts.benders.len(),
        lagrangian_cuts: d.cuts.lagrangian.len(),
        odr_ms: d.odr_ms,
        total_ms,
    };
    Ok(JdRun { solution, ledger: d.ledger, cuts: d.cuts, columns: d.columns, summary })
}

pub fn jd1_solve(p: &StructuredProblem, cfg: &JdConfig) -> Result<JdRun, JdError> {
    jd_solve(p, &JdConfig { odr_enabled: false, mdr_enabled: false, jrmpr_first: false, ..cfg.clone() })
}

pub fn jd2_solve(p: &StructuredProblem, cfg: &JdConfig) -> Result<JdRun, JdError> {
    jd_solve(p, &JdConfig { odr_enabled: true, mdr_enabled: true, jrmpr_first: true, ..cfg.clone() })
}

#[derive(Debug, Clone)]
pub struct MonolithRun {
    pub solution: Solution,
    pub result: GlobalResult,
    pub summary: Summary,
    pub trace: Vec<TraceRecord>,
}

/// Spatial branch-and-bound on the undecomposed problem.
pub fn monolith_solve(p: &StructuredProblem, cfg: &JdConfig) -> Result<MonolithRun, JdError> {
    monolith_with(p, &GlobalOptions { abs_tol: cfg.eps, rel_tol: cfg.eps, max_nodes: cfg.max_nodes }, cfg.include_timing)
}

pub fn monolith_with(p: &StructuredProblem, opts: &GlobalOptions, include_timing: bool) -> Result<MonolithRun, JdError> {
    let start = Instant::now();
    let layout = Layout::new(p);
    let g = full_problem(p, &BoundsState::from_problem(p), &layout);
    let result = solve_global_with(&g, opts)?;
    let status = match result.status {
        GlobalStatus::Optimal => Status::Optimal,
        GlobalStatus::Infeasible => Status::Infeasible,
        GlobalStatus::GapLimit => Status::IterationLimit,
    };
    let solution = if result.has_solution() {
        let (x0, x, y) = layout.split(p, &result.x);
        Solution { x0, x, y, objective: result.objective, status }
    } else {
        Solution { status, ..Solution::infeasible() }
    };
    let ms = if include_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    let trace = vec![TraceRecord {
        iter: 0,
        phase: Phase::Monolith,
        subproblem: "monolith".into(),
        omega: None,
        status: status_name(&result),
        objective: finite(result.objective),
        wall_ms: ms,
        ubd: finite(result.objective),
        lbd: finite(result.lower_bound),
    }];
    let summary = Summary {
        status,
        objective: finite(result.objective),
        ubd: finite(result.objective),
        lbd: finite(result.lower_bound),
        iters: result.node_count,
        gbd_iters: 0,
        jrmp_count: 0,
        jrmpr_count: 0,
        columns: 0,
        benders_cuts: 0,
        lagrangian_cuts: 0,
        odr_ms: 0.0,
        total_ms: ms,
    };
    Ok(MonolithRun { solution, result, summary, trace })
}
