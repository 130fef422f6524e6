use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jointdec::jd::{jd1_solve, JdConfig};
use jointdec::model::{LinearConstraint, Sense, Status, StructuredProblem, VarRef};
use jointdec::synth::random_instance;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_jointdec"));
    c.env_remove("JD_THREADS");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("jointdec-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn solve(instance: &Path, extra: &[&str]) -> Output {
    run(bin().arg("solve").args(extra).arg(instance))
}

fn write_instance(name: &str, p: &StructuredProblem) -> PathBuf {
    let path = scratch(name);
    std::fs::write(&path, p.to_json()).unwrap();
    path
}

#[test]
fn trace_lines_follow_the_schema() {
    let inst = scratch("r5.json");
    assert!(run(bin().args(["gen-random", "--seed", "5", "--out"]).arg(&inst)).status.success());
    let trace = scratch("r5.trace");
    let summary = scratch("r5.summary");
    let out = solve(&inst, &["--alg", "jd2", "--trace", trace.to_str().unwrap(), "--summary", summary.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let (last, records) = lines.split_last().unwrap();
    for r in records {
        for key in ["iter", "phase", "subproblem", "status", "objective", "wall_ms"] {
            assert!(r.get(key).is_some(), "record without {key}: {r}");
        }
    }
    let s = &last["summary"];
    for key in ["status", "objective", "ubd", "lbd", "iters", "jrmp_count", "jrmpr_count", "odr_ms", "total_ms"] {
        assert!(s.get(key).is_some(), "summary without {key}");
    }
    let count = |name: &str| records.iter().filter(|r| r["subproblem"] == name).count() as u64;
    assert_eq!(s["jrmp_count"].as_u64(), Some(count("jrmp")));
    assert_eq!(s["jrmpr_count"].as_u64(), Some(count("jrmpr")));
    assert_eq!(s["status"], "optimal");
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(&file, s);
    // Scenario records carry their index.
    assert!(records.iter().any(|r| r["subproblem"] == "pp" && r.get("omega").is_some()));
}

#[test]
fn outputs_are_byte_deterministic() {
    let (a, b) = (scratch("p22a.json"), scratch("p22b.json"));
    for path in [&a, &b] {
        assert!(run(bin().args(["gen-pooling", "--scenarios", "2x2", "--out"]).arg(path)).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let inst = write_instance("r7.json", &random_instance(7));
    let (t1, t2) = (scratch("r7a.trace"), scratch("r7b.trace"));
    for (t, threads) in [(&t1, None), (&t2, Some("1"))] {
        let mut c = bin();
        if let Some(n) = threads {
            c.env("JD_THREADS", n);
        }
        let out = run(c.args(["solve", "--alg", "jd2", "--no-timing", "--quiet", "--trace", t.to_str().unwrap()]).arg(&inst));
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap());
}

#[test]
fn pooling_scenario_counts() {
    for (counts, expected) in [("1x1", 1), ("2x2", 4), ("5x5", 25)] {
        let path = scratch(&format!("pool-{counts}.json"));
        assert!(run(bin().args(["gen-pooling", "--scenarios", counts, "--out"]).arg(&path)).status.success());
        let p = StructuredProblem::load(&path).unwrap();
        assert_eq!(p.scenarios.len(), expected);
        assert_eq!(p.meta.s, expected);
    }
    let bad = run(bin().args(["gen-pooling", "--scenarios", "2x0", "--out"]).arg(scratch("never.json")));
    assert_eq!(bad.status.code(), Some(1));
    let bad = run(bin().args(["gen-pooling", "--topology", "nowhere", "--out"]).arg(scratch("never.json")));
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn malformed_instances_exit_with_one() {
    let garbage = scratch("garbage.json");
    std::fs::write(&garbage, "{\"not\": \"an instance\"}").unwrap();
    let out = solve(&garbage, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let mut p = random_instance(1);
    p.scenarios[0].x_bounds[0] = (3.0, 1.0);
    let inst = write_instance("invalid.json", &p);
    let out = solve(&inst, &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("exceeds upper bound"), "{err}");

    let missing = solve(&scratch("does-not-exist.json"), &[]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn bad_options_exit_with_one() {
    let inst = write_instance("r0.json", &random_instance(0));
    assert_eq!(solve(&inst, &["--eps", "0"]).status.code(), Some(1));
    assert_eq!(solve(&inst, &["--alg", "simplex"]).status.code(), Some(1));
    assert_eq!(run(bin().env("JD_THREADS", "zero").arg("solve").arg(&inst)).status.code(), Some(1));
}

#[test]
fn iteration_limit_exits_with_two() {
    let seed = (0..40)
        .find(|&s| jd1_solve(&random_instance(s), &JdConfig { max_iters: 1, ..JdConfig::jd1() }).unwrap().solution.status == Status::IterationLimit)
        .expect("some instance needs a second iteration");
    let inst = write_instance("limit.json", &random_instance(seed));
    let out = solve(&inst, &["--alg", "jd1", "--max-iters", "1", "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_and_monolith_exit_with_zero() {
    let mut p = random_instance(2);
    p.linking.rows.push(LinearConstraint::new(vec![(VarRef::linking(0), 1.0)], Sense::Ge, 2.0));
    let inst = write_instance("infeasible.json", &p);
    let summary = scratch("infeasible.summary");
    let out = solve(&inst, &["--alg", "jd2", "--quiet", "--summary", summary.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["status"], "infeasible");

    let inst = write_instance("r4.json", &random_instance(4));
    let out = solve(&inst, &["--alg", "monolith"]);
    assert_eq!(out.status.code(), Some(0));
    let first = String::from_utf8_lossy(&out.stdout).lines().next().unwrap().to_string();
    let s: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(s["status"], "optimal");
}
