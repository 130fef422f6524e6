//! Independent oracles and invariant checks shared by the integration and
//! acceptance targets. Checks return `Err(description)` instead of
//! panicking so the acceptance runner can report them.
#![allow(dead_code)]

use jointdec::global::{GlobalOptions, GlobalProblem};
use jointdec::jd::{monolith_with, BoxSnapshot, CutPool, JdConfig, TraceRecord};
use jointdec::lp::{dual_objective, solve_lp, LpProblem, LpResult, LpRow, LpStatus};
use jointdec::milp::MilpProblem;
use jointdec::model::{evaluate, Sense, Solution, StructuredProblem};
use jointdec::relax::Bilinear;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- LP

/// Random rows through an integer point; each variable is fixed at the
/// point with probability `fixed`.
pub fn lp_through_point(rng: &mut ChaCha8Rng, n: usize, m: usize, fixed: f64) -> LpProblem {
    let point: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=10) as f64).collect();
    let mut p = LpProblem::default();
    for &v in &point {
        if rng.gen_bool(fixed) {
            p.add_var(v, v, rng.gen_range(-5..=5) as f64);
        } else {
            p.add_var(0.0, 10.0, rng.gen_range(-5..=5) as f64);
        }
    }
    for _ in 0..m {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                terms.push((j, rng.gen_range(-5..=5) as f64));
            }
        }
        let lhs: f64 = terms.iter().map(|&(j, a)| a * point[j]).sum();
        let slack = rng.gen_range(0..=3) as f64;
        let (sense, rhs) = match rng.gen_range(0..3) {
            0 => (Sense::Le, lhs + slack),
            1 => (Sense::Ge, lhs - slack),
            _ => (Sense::Eq, lhs),
        };
        p.rows.push(LpRow::new(terms, sense, rhs));
    }
    p
}

pub fn random_feasible_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let n = rng.gen_range(1..=12);
    let m = rng.gen_range(0..=10);
    lp_through_point(rng, n, m, 0.0)
}

/// Primal feasibility, dual sign conditions, reduced-cost consistency,
/// complementary slackness and strong duality within `gap_tol`.
pub fn certificate_error(p: &LpProblem, r: &LpResult, gap_tol: f64) -> Option<String> {
    if r.status != LpStatus::Optimal {
        return Some(format!("status {:?} on a feasible bounded LP", r.status));
    }
    let pv = p.max_violation(&r.x);
    if pv > 1e-8 {
        return Some(format!("primal violation {pv}"));
    }
    let gap = (dual_objective(p, r) - r.objective).abs();
    if gap > gap_tol {
        return Some(format!("duality gap {gap}"));
    }
    for (row, &y) in p.rows.iter().zip(&r.row_duals) {
        let bad = match row.sense {
            Sense::Le => y > 1e-9,
            Sense::Ge => y < -1e-9,
            Sense::Eq => false,
        };
        if bad {
            return Some(format!("row dual {y} has the wrong sign for {:?}", row.sense));
        }
    }
    for j in 0..p.n() {
        let mut d = p.objective[j];
        for (row, &y) in p.rows.iter().zip(&r.row_duals) {
            for &(k, a) in &row.terms {
                if k == j {
                    d -= y * a;
                }
            }
        }
        let (u, v) = r.bound_multipliers[j];
        if u < 0.0 || v < 0.0 {
            return Some(format!("negative bound multiplier on column {j}"));
        }
        if (d - (v - u)).abs() > 1e-7 {
            return Some(format!("reduced cost {d} vs multipliers {}", v - u));
        }
        if u * (p.upper[j] - r.x[j]) > 1e-6 || v * (r.x[j] - p.lower[j]) > 1e-6 {
            return Some(format!("complementary slackness fails on column {j}"));
        }
    }
    None
}

// ---------------------------------------------------------------- MILP

/// Pure-binary program with integer data; the all-zero point or a random
/// binary point is kept feasible with probability about 3/4.
pub fn random_binary_program(rng: &mut ChaCha8Rng, n: usize) -> MilpProblem {
    let point: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=1) as f64).collect();
    let mut lp = LpProblem::default();
    for _ in 0..n {
        lp.add_var(0.0, 1.0, rng.gen_range(-9..=9) as f64);
    }
    let keep_feasible = rng.gen_bool(0.75);
    for _ in 0..rng.gen_range(1..=6) {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.5) {
                terms.push((j, rng.gen_range(-6..=6) as f64));
            }
        }
        let at: f64 = terms.iter().map(|&(j, a)| a * point[j]).sum();
        let shift = if keep_feasible { rng.gen_range(0..=4) } else { rng.gen_range(-3..=4) } as f64;
        if rng.gen_bool(0.5) {
            lp.add_row(terms, Sense::Le, at + shift);
        } else {
            lp.add_row(terms, Sense::Ge, at - shift);
        }
    }
    MilpProblem { binary: vec![true; n], lp }
}

/// Minimum over all `2^n` binary points; `None` if none is feasible.
pub fn enumerate_binary(p: &MilpProblem) -> Option<f64> {
    let n = p.lp.n();
    let mut best: Option<f64> = None;
    let mut x = vec![0.0; n];
    for mask in 0u32..(1u32 << n) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = ((mask >> j) & 1) as f64;
        }
        if p.lp.rows.iter().all(|r| r.violation(&x) == 0.0) {
            let f: f64 = p.lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

// ---------------------------------------------------------------- McCormick

/// Bound on `w` implied by one envelope row at `(u, v)`.
pub fn envelope_bound(row: &LpRow, w: usize, u: (usize, f64), v: (usize, f64)) -> f64 {
    let mut rest = 0.0;
    let mut cw = 0.0;
    for &(k, a) in &row.terms {
        if k == w {
            cw += a;
        } else if k == u.0 {
            rest += a * u.1;
        } else if k == v.0 {
            rest += a * v.1;
        }
    }
    (row.rhs - rest) / cw
}

/// `(lower, upper)` envelope values at `(u, v)`.
pub fn envelope_at(rows: &[LpRow; 4], w: usize, u: (usize, f64), v: (usize, f64)) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for r in rows {
        let b = envelope_bound(r, w, u, v);
        match r.sense {
            Sense::Ge => lo = lo.max(b),
            Sense::Le => hi = hi.min(b),
            Sense::Eq => unreachable!(),
        }
    }
    (lo, hi)
}

pub fn random_interval(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a = rng.gen_range(-10.0..10.0);
    let width = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..8.0) };
    (a, a + width)
}

// ---------------------------------------------------------------- spatial B&B

/// Small bilinear program with a grid oracle: every product shares the left
/// factor `u` (column 0), so fixing `u` leaves an LP.
pub struct BilinearCase {
    pub problem: GlobalProblem,
    pub u_range: (f64, f64),
}

pub fn random_bilinear(rng: &mut ChaCha8Rng) -> BilinearCase {
    let k = rng.gen_range(1..=2);
    let n_extra = rng.gen_range(1..=3);
    let with_binary = rng.gen_bool(0.5);
    let u_range = (rng.gen_range(-3..=0) as f64, rng.gen_range(1..=3) as f64);
    let mut lp = LpProblem::default();
    let mut point = Vec::new();
    let u = lp.add_var(u_range.0, u_range.1, rng.gen_range(-3..=3) as f64);
    point.push(rng.gen_range(u_range.0..u_range.1));
    let mut bil = Vec::new();
    for _ in 0..k {
        let (vl, vu) = (rng.gen_range(-2..=0) as f64, rng.gen_range(1..=4) as f64);
        let v = lp.add_var(vl, vu, rng.gen_range(-3..=3) as f64);
        point.push(rng.gen_range(vl..vu));
        let c = [u_range.0 * vl, u_range.0 * vu, u_range.1 * vl, u_range.1 * vu];
        let (wl, wu) = (c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let w = lp.add_var(wl, wu, rng.gen_range(-3..=3) as f64);
        point.push(point[u] * point[v]);
        bil.push(Bilinear { product: w, left: u, right: v });
    }
    for _ in 0..n_extra {
        lp.add_var(0.0, 4.0, rng.gen_range(-3..=3) as f64);
        point.push(rng.gen_range(0.0..4.0));
    }
    let mut binary = vec![false; lp.n()];
    if with_binary {
        let b = lp.add_var(0.0, 1.0, rng.gen_range(-3..=3) as f64);
        point.push(rng.gen_range(0..=1) as f64);
        binary.push(true);
        binary[b] = true;
    }
    let n = lp.n();
    for _ in 0..rng.gen_range(1..=4) {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                terms.push((j, rng.gen_range(-3..=3) as f64));
            }
        }
        let at: f64 = terms.iter().map(|&(j, a)| a * point[j]).sum();
        let slack = rng.gen_range(0.0..1.5);
        if rng.gen_bool(0.5) {
            lp.add_row(terms, Sense::Le, at + slack);
        } else {
            lp.add_row(terms, Sense::Ge, at - slack);
        }
    }
    let mut problem = GlobalProblem::new(lp);
    problem.binary = binary;
    problem.bilinear = bil;
    BilinearCase { problem, u_range }
}

/// LP value with `u` and every binary fixed, products made linear.
fn fixed_u_value(case: &BilinearCase, u: f64, bits: &[(usize, f64)]) -> Option<f64> {
    let mut lp = case.problem.lp.clone();
    lp.lower[0] = u;
    lp.upper[0] = u;
    for &(j, b) in bits {
        lp.lower[j] = b;
        lp.upper[j] = b;
    }
    for t in &case.problem.bilinear {
        lp.add_row(vec![(t.product, 1.0), (t.right, -u)], Sense::Eq, 0.0);
    }
    let r = solve_lp(&lp).ok()?;
    r.is_optimal().then_some(r.objective)
}

/// Grid search over `u` (and enumeration of binaries), refined around the
/// best coarse points.
pub fn grid_oracle(case: &BilinearCase) -> Option<f64> {
    let bins: Vec<usize> = (0..case.problem.n()).filter(|&j| case.problem.binary[j]).collect();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << bins.len()) {
        let bits: Vec<(usize, f64)> = bins.iter().enumerate().map(|(i, &j)| (j, ((mask >> i) & 1) as f64)).collect();
        let (a, b) = case.u_range;
        let coarse = 200;
        let mut samples: Vec<(f64, f64)> = (0..=coarse)
            .filter_map(|i| {
                let u = a + (b - a) * i as f64 / coarse as f64;
                fixed_u_value(case, u, &bits).map(|f| (u, f))
            })
            .collect();
        samples.sort_by(|x, y| x.1.total_cmp(&y.1));
        let mut local_best = samples.first().map(|s| s.1);
        for &(u0, _) in samples.iter().take(4) {
            let mut center = u0;
            let mut half = (b - a) / coarse as f64;
            for _ in 0..5 {
                let lo = (center - half).max(a);
                let hi = (center + half).min(b);
                let mut round_best: Option<(f64, f64)> = None;
                for i in 0..=40 {
                    let u = lo + (hi - lo) * i as f64 / 40.0;
                    if let Some(f) = fixed_u_value(case, u, &bits) {
                        if round_best.map_or(true, |(_, g)| f < g) {
                            round_best = Some((u, f));
                        }
                    }
                }
                if let Some((u, f)) = round_best {
                    center = u;
                    local_best = Some(local_best.map_or(f, |g: f64| g.min(f)));
                }
                half /= 10.0;
            }
        }
        if let Some(f) = local_best {
            best = Some(best.map_or(f, |g: f64| g.min(f)));
        }
    }
    best
}

// ---------------------------------------------------------------- JD runs

/// Reference optimum from branch-and-bound at a tight tolerance: the point,
/// its value, and a certified lower bound.
pub struct Oracle {
    pub solution: Option<Solution>,
    pub upper: f64,
    pub lower: f64,
}

pub fn oracle(p: &StructuredProblem, abs_tol: f64, rel_tol: f64) -> Oracle {
    let run = monolith_with(p, &GlobalOptions { abs_tol, rel_tol, max_nodes: 1_000_000 }, false).expect("oracle solve");
    let upper = run.result.objective;
    let lower = run.result.lower_bound;
    Oracle { solution: run.result.has_solution().then_some(run.solution), upper, lower }
}

/// Bounds never move the wrong way and always bracket the oracle interval.
pub fn check_ledger(trace: &[TraceRecord], o: &Oracle) -> Result<(), String> {
    let mut prev_u = f64::INFINITY;
    let mut prev_l = f64::NEG_INFINITY;
    for (k, r) in trace.iter().enumerate() {
        let u = r.ubd.unwrap_or(f64::INFINITY);
        let l = r.lbd.unwrap_or(f64::NEG_INFINITY);
        if u > prev_u {
            return Err(format!("record {k}: UBD rose from {prev_u} to {u}"));
        }
        if l < prev_l {
            return Err(format!("record {k}: LBD fell from {prev_l} to {l}"));
        }
        if l > o.upper + 1e-6 {
            return Err(format!("record {k}: LBD {l} above the optimum {}", o.upper));
        }
        if o.lower > u + 1e-6 {
            return Err(format!("record {k}: UBD {u} below the optimum {}", o.lower));
        }
        prev_u = u;
        prev_l = l;
    }
    Ok(())
}

/// Largest violation of any stored cut at the given point.
pub fn worst_cut_violation(p: &StructuredProblem, cuts: &CutPool, sol: &Solution) -> f64 {
    let res = evaluate(p, sol).expect("oracle point evaluates");
    let eta = &res.scenario_objectives;
    let mut worst: f64 = f64::NEG_INFINITY;
    for c in &cuts.benders {
        worst = worst.max(c.violation(&sol.x0, &sol.y[c.omega], eta[c.omega]));
    }
    for c in &cuts.lagrangian {
        for (w, e) in eta.iter().enumerate() {
            worst = worst.max(c.eval(w, &sol.x0) - e);
        }
    }
    worst
}

/// Smallest slack of the point inside any recorded box.
pub fn worst_box_slack(boxes: &[BoxSnapshot], sol: &Solution) -> f64 {
    let mut worst = f64::INFINITY;
    for b in boxes {
        for (&(lo, hi), &v) in b.x0.iter().zip(&sol.x0) {
            worst = worst.min(v - lo).min(hi - v);
        }
        for (bw, yw) in b.y.iter().zip(&sol.y) {
            for (&(lo, hi), &v) in bw.iter().zip(yw) {
                worst = worst.min(v - lo).min(hi - v);
            }
        }
    }
    worst
}

/// JRMP never outnumbers JRMPR, and each JRMP follows a JRMPR whose value
/// failed to clear `LBD + eps`.
pub fn check_jd2_structure(trace: &[TraceRecord], cfg: &JdConfig) -> Result<(), String> {
    let count = |name: &str| trace.iter().filter(|r| r.subproblem == name).count();
    let (jrmp, jrmpr) = (count("jrmp"), count("jrmpr"));
    if jrmp > jrmpr {
        return Err(format!("{jrmp} JRMP solves but only {jrmpr} JRMPR solves"));
    }
    for (k, r) in trace.iter().enumerate() {
        if r.subproblem != "jrmp" {
            continue;
        }
        let prev = trace[..k].iter().rev().find(|q| q.subproblem != "mdr");
        let Some(q) = prev.filter(|q| q.subproblem == "jrmpr") else {
            return Err(format!("record {k}: JRMP without a preceding JRMPR"));
        };
        let (Some(obj), Some(lbd)) = (q.objective, q.lbd) else {
            return Err(format!("record {k}: JRMP after a JRMPR without a value to test"));
        };
        let eps = match q.ubd {
            Some(u) => cfg.eps.max(cfg.eps * u.abs()),
            None => cfg.eps,
        };
        if obj >= lbd + eps {
            return Err(format!("record {k}: JRMP although JRMPR value {obj} cleared {lbd} + {eps}"));
        }
    }
    Ok(())
}

/// Tolerance used by the acceptance comparisons against the monolith.
pub fn objective_tol(opt: f64) -> f64 {
    1e-3f64.max(1e-3 * opt.abs())
}

pub fn same_objective(a: f64, b: f64, tol: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum()) || (a - b).abs() <= tol
}
