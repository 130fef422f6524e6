//! Acceptance runner: every criterion at its stated tolerance, one
//! PASS/FAIL line each. Exits nonzero if any criterion fails.

mod common;

use std::time::Instant;

use common::*;
use jointdec::global::{solve_global_with, GlobalOptions, GlobalStatus};
use jointdec::jd::{jd1_solve, jd2_solve, monolith_solve, JdConfig, JdRun};
use jointdec::lp::solve_lp;
use jointdec::milp::{solve_milp, MilpStatus};
use jointdec::model::{Status, StructuredProblem};
use jointdec::pooling::haverly_instance;
use jointdec::relax::{mccormick, Bilinear};
use jointdec::synth::{generate, random_instance};
use rand::Rng;

const RANDOM_SUITE: u64 = 30;
const ITER_CAP: usize = 200;

struct Criterion {
    failures: Vec<String>,
    detail: String,
}

impl Criterion {
    fn new() -> Self {
        Criterion { failures: vec![], detail: String::new() }
    }

    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }
}

/// One decomposition run with what the checks need.
struct Logged {
    label: String,
    run: JdRun,
    secs: f64,
    is_jd2: bool,
}

fn timed_run(p: &StructuredProblem, jd2: bool, label: String) -> Result<Logged, String> {
    let start = Instant::now();
    let cfg = JdConfig { include_timing: false, ..if jd2 { JdConfig::jd2() } else { JdConfig::jd1() } };
    let run = if jd2 { jd2_solve(p, &cfg) } else { jd1_solve(p, &cfg) }.map_err(|e| format!("{label}: {e}"))?;
    Ok(Logged { label, run, secs: start.elapsed().as_secs_f64(), is_jd2: jd2 })
}

fn main() {
    let mut results: Vec<(&str, Criterion)> = Vec::new();
    let mut logged: Vec<(Logged, usize)> = Vec::new();
    let mut oracles: Vec<(StructuredProblem, Oracle)> = Vec::new();

    // 1. Random suite against the monolith.
    let mut c1 = Criterion::new();
    let mut slowest: f64 = 0.0;
    for seed in 0..RANDOM_SUITE {
        let g = generate(seed);
        let b = &g.blocks;
        let shape_ok = (2..=4).contains(&b.scenarios.len())
            && b.linking_bounds.len() <= 3
            && b.linking_binary.iter().any(|&x| x)
            && b.scenarios.iter().all(|s| s.bilinear.len() <= 2);
        if !shape_ok {
            c1.fail(format!("seed {seed}: generated instance outside the suite's shape"));
        }
        let p = random_instance(seed);
        let m = monolith_solve(&p, &JdConfig::default()).expect("monolith solves");
        let opt = m.solution.objective;
        let tol = objective_tol(opt);
        let k = oracles.len();
        oracles.push((p.clone(), oracle(&p, 1e-7, 1e-9)));
        for jd2 in [false, true] {
            let name = format!("random {seed} {}", if jd2 { "jd2" } else { "jd1" });
            match timed_run(&p, jd2, name.clone()) {
                Ok(l) => {
                    slowest = slowest.max(l.secs);
                    if l.run.solution.status != Status::Optimal {
                        c1.fail(format!("{name}: status {}", l.run.solution.status));
                    } else if !same_objective(l.run.solution.objective, opt, tol) {
                        c1.fail(format!("{name}: {} vs monolith {opt}", l.run.solution.objective));
                    }
                    if l.secs >= 10.0 {
                        c1.fail(format!("{name}: took {:.2} s", l.secs));
                    }
                    logged.push((l, k));
                }
                Err(e) => c1.fail(e),
            }
        }
    }
    c1.detail = format!("{RANDOM_SUITE} instances, jd1 and jd2, slowest {slowest:.2} s");
    results.push(("1 random suite matches monolith", c1));

    // 2. Pooling surrogate, 2x2 scenarios.
    let mut c2 = Criterion::new();
    let pool = haverly_instance(&[2, 2]).expect("surrogate builds");
    let m = monolith_solve(&pool, &JdConfig::default()).expect("monolith solves");
    let opt = m.solution.objective;
    let k = oracles.len();
    oracles.push((pool.clone(), oracle(&pool, 1e-6, 1e-9)));
    match timed_run(&pool, true, "pooling 2x2 jd2".into()) {
        Ok(l) => {
            let obj = l.run.solution.objective;
            if l.run.solution.status != Status::Optimal {
                c2.fail(format!("status {}", l.run.solution.status));
            }
            if (obj - opt).abs() > 1e-3 * opt.abs() {
                c2.fail(format!("jd2 {obj} vs monolith {opt}"));
            }
            if l.secs >= 120.0 {
                c2.fail(format!("took {:.1} s", l.secs));
            }
            c2.detail = format!("jd2 {obj:.4}, monolith {opt:.4}, {:.1} s", l.secs);
            logged.push((l, k));
        }
        Err(e) => c2.fail(e),
    }
    results.push(("2 pooling 2x2 jd2 matches monolith", c2));

    // 3. Bound ledger on every logged run.
    let mut c3 = Criterion::new();
    for (l, k) in &logged {
        if let Err(e) = check_ledger(&l.run.ledger.trace, &oracles[*k].1) {
            c3.fail(format!("{}: {e}", l.label));
        }
    }
    c3.detail = format!("{} runs", logged.len());
    results.push(("3 bound ledger monotone and bracketing", c3));

    // 4. Cut validity over the random suite.
    let mut c4 = Criterion::new();
    let mut cuts = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for (l, k) in logged.iter().filter(|(l, _)| l.label.starts_with("random")) {
        let (p, o) = &oracles[*k];
        let sol = o.solution.as_ref().expect("random instances are feasible");
        cuts += l.run.cuts.benders.len() + l.run.cuts.lagrangian.len();
        let v = worst_cut_violation(p, &l.run.cuts, sol);
        worst = worst.max(v);
        if v > 1e-6 {
            c4.fail(format!("{}: violation {v:e}", l.label));
        }
    }
    c4.detail = format!("{cuts} cuts, worst violation {worst:.1e}");
    results.push(("4 stored cuts valid at the optimum", c4));

    // 5. Domain reduction keeps the optimum.
    let mut c5 = Criterion::new();
    let mut boxes = 0;
    for (l, k) in &logged {
        let Some(sol) = oracles[*k].1.solution.as_ref() else { continue };
        boxes += l.run.ledger.boxes.len();
        let s = worst_box_slack(&l.run.ledger.boxes, sol);
        if s < -1e-9 {
            c5.fail(format!("{}: slack {s:e}", l.label));
        }
    }
    c5.detail = format!("{boxes} reduced boxes");
    results.push(("5 domain reduction keeps the optimum", c5));

    // 6. JD2 trace structure.
    let mut c6 = Criterion::new();
    let (mut jrmp, mut jrmpr) = (0, 0);
    for (l, _) in logged.iter().filter(|(l, _)| l.is_jd2) {
        jrmp += l.run.summary.jrmp_count;
        jrmpr += l.run.summary.jrmpr_count;
        if let Err(e) = check_jd2_structure(&l.run.ledger.trace, &JdConfig::jd2()) {
            c6.fail(format!("{}: {e}", l.label));
        }
    }
    c6.detail = format!("{jrmpr} JRMPR, {jrmp} JRMP");
    results.push(("6 jd2 tries JRMPR before JRMP", c6));

    // 7. Solver-stack suites.
    let mut c7 = Criterion::new();
    let mut r = rng(7);
    for k in 0..500 {
        let p = random_feasible_lp(&mut r);
        match solve_lp(&p) {
            Ok(res) => {
                if let Some(e) = certificate_error(&p, &res, 1e-7) {
                    c7.fail(format!("lp {k}: {e}"));
                }
            }
            Err(e) => c7.fail(format!("lp {k}: {e}")),
        }
    }
    let mut r = rng(101);
    for k in 0..240 {
        let p = random_binary_program(&mut r, 1 + k % 12);
        let res = solve_milp(&p).expect("milp solves");
        let ok = match enumerate_binary(&p) {
            Some(best) => res.status == MilpStatus::Optimal && res.objective == best,
            None => res.status == MilpStatus::Infeasible,
        };
        if !ok {
            c7.fail(format!("milp {k}: {:?} {} disagrees with enumeration", res.status, res.objective));
        }
    }
    let t = Bilinear { product: 0, left: 1, right: 2 };
    let mut r = rng(202);
    for k in 0..1000 {
        let (ub, vb) = (random_interval(&mut r), random_interval(&mut r));
        let rows = mccormick(&t, ub, vb).expect("finite box");
        let (u, v) = (r.gen_range(ub.0..=ub.1), r.gen_range(vb.0..=vb.1));
        let (lo, hi) = envelope_at(&rows, 0, (1, u), (2, v));
        let scale = 1.0 + (u * v).abs();
        if lo > u * v + 1e-12 * scale || u * v > hi + 1e-12 * scale {
            c7.fail(format!("mccormick {k}: {u}*{v} outside [{lo}, {hi}]"));
        }
        for cu in [ub.0, ub.1] {
            for cv in [vb.0, vb.1] {
                let (lo, hi) = envelope_at(&rows, 0, (1, cu), (2, cv));
                let s = 1.0 + (cu * cv).abs();
                if (lo - cu * cv).abs() > 1e-12 * s || (hi - cu * cv).abs() > 1e-12 * s {
                    c7.fail(format!("mccormick {k}: not tight at corner ({cu}, {cv})"));
                }
            }
        }
    }
    let tol = 1e-4;
    let opts = GlobalOptions { abs_tol: tol, rel_tol: 1e-9, max_nodes: 200_000 };
    let mut r = rng(303);
    for k in 0..50 {
        let case = random_bilinear(&mut r);
        let res = solve_global_with(&case.problem, &opts).expect("b&b solves");
        let ok = match grid_oracle(&case) {
            Some(g) => res.status == GlobalStatus::Optimal && (res.objective - g).abs() <= 2.0 * tol,
            None => res.status == GlobalStatus::Infeasible,
        };
        if !ok {
            c7.fail(format!("b&b {k}: {:?} {}", res.status, res.objective));
        }
    }
    c7.detail = "500 LPs, 240 binary programs, 1000 envelopes, 50 bilinear programs".into();
    results.push(("7 solver stack suites", c7));

    // 8. Finite termination and reproducibility.
    let mut c8 = Criterion::new();
    let mut max_iters = 0;
    for (l, _) in &logged {
        max_iters = max_iters.max(l.run.summary.iters);
        if l.run.summary.iters >= ITER_CAP || l.run.solution.status == Status::IterationLimit {
            c8.fail(format!("{}: hit the iteration cap", l.label));
        }
    }
    let mut reruns = 0;
    for (l, k) in &logged {
        // The 2x2 pooling rerun is replaced by the smaller 2x1 instance below.
        if !l.label.starts_with("random") {
            continue;
        }
        let again = timed_run(&oracles[*k].0, l.is_jd2, l.label.clone()).expect("rerun solves");
        reruns += 1;
        if again.run.trace_jsonl() != l.run.trace_jsonl() {
            c8.fail(format!("{}: rerun trace differs", l.label));
        }
    }
    let small = haverly_instance(&[2, 1]).expect("surrogate builds");
    for jd2 in [false, true] {
        let a = timed_run(&small, jd2, "pooling 2x1".into()).expect("solves");
        let b = timed_run(&small, jd2, "pooling 2x1".into()).expect("solves");
        reruns += 1;
        max_iters = max_iters.max(a.run.summary.iters);
        if a.run.trace_jsonl() != b.run.trace_jsonl() {
            c8.fail(format!("pooling 2x1 jd2={jd2}: rerun trace differs"));
        }
        if a.run.summary.iters >= ITER_CAP {
            c8.fail(format!("pooling 2x1 jd2={jd2}: hit the iteration cap"));
        }
    }
    c8.detail = format!("max {max_iters} iterations, {reruns} byte-identical reruns");
    results.push(("8 finite termination and deterministic traces", c8));

    let mut all = true;
    for (name, c) in &results {
        let pass = c.failures.is_empty();
        all &= pass;
        println!("{} criterion {name} ({})", if pass { "PASS" } else { "FAIL" }, c.detail);
        for f in c.failures.iter().take(10) {
            println!("    {f}");
        }
    }
    if !all {
        std::process::exit(1);
    }
}
