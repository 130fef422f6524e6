//! Small random instances built around a known feasible point: a few
//! scenarios sharing one to three linking variables (at least one binary),
//! with at most two bilinear terms per scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Sense, StructuredProblem};
use crate::relax::product_range;
use crate::standardize::{standardize, BlockProblem, RawRef, RawRow, RawScenario};

/// Generated instance in block form with the point it was built around.
#[derive(Debug, Clone)]
pub struct Generated {
    pub blocks: BlockProblem,
    pub x0: Vec<f64>,
    pub locals: Vec<Vec<f64>>,
}

fn coef(rng: &mut ChaCha8Rng) -> f64 {
    let c = rng.gen_range(-3..=3);
    if c == 0 {
        1.0
    } else {
        c as f64
    }
}

/// Value rounded to a quarter so instances print exactly.
fn quarter(v: f64) -> f64 {
    (v * 4.0).round() / 4.0
}

fn row_through(rng: &mut ChaCha8Rng, vars: &[(RawRef, f64)], sense: Sense) -> RawRow {
    let terms: Vec<(RawRef, f64)> = vars.iter().map(|&(r, _)| (r, coef(rng))).collect();
    let at: f64 = terms.iter().zip(vars).map(|((_, a), (_, v))| a * v).sum();
    let slack = quarter(rng.gen_range(0.0..2.0));
    let rhs = match sense {
        Sense::Le => at + slack,
        Sense::Ge => at - slack,
        Sense::Eq => at,
    };
    RawRow::new(terms, sense, rhs)
}

pub fn generate(seed: u64) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.gen_range(2..=4);
    let n0 = rng.gen_range(1..=3);
    let n_bin = rng.gen_range(1..=n0);
    let linking_binary: Vec<bool> = (0..n0).map(|i| i < n_bin).collect();
    let linking_bounds: Vec<(f64, f64)> = linking_binary.iter().map(|&b| if b { (0.0, 1.0) } else { (0.0, 4.0) }).collect();
    let x0: Vec<f64> = linking_binary
        .iter()
        .zip(&linking_bounds)
        .map(|(&b, &(lo, hi))| if b { rng.gen_range(0..=1) as f64 } else { quarter(rng.gen_range(lo..hi)) })
        .collect();
    let linking_rows = if n0 > 1 {
        let vars: Vec<(RawRef, f64)> = (0..n0).map(|i| (RawRef::Linking(i), x0[i])).collect();
        vec![row_through(&mut rng, &vars, Sense::Le)]
    } else {
        vec![]
    };

    let mut scenarios = Vec::new();
    let mut locals = Vec::new();
    for _ in 0..s {
        let n_convex = rng.gen_range(1..=3);
        let n_bil = rng.gen_range(0..=2);
        let mut bounds = Vec::new();
        let mut point = Vec::new();
        for _ in 0..n_convex {
            bounds.push((0.0, 4.0));
            point.push(quarter(rng.gen_range(0.0..4.0)));
        }
        let mut bilinear = Vec::new();
        for _ in 0..n_bil {
            let l = bounds.len();
            let (lb, rb) = ((-2.0, 2.0), (0.0, 3.0));
            let (lv, rv) = (quarter(rng.gen_range(-2.0..2.0)), quarter(rng.gen_range(0.0..3.0)));
            bounds.push(lb);
            point.push(lv);
            bounds.push(rb);
            point.push(rv);
            bounds.push(product_range(lb, rb));
            point.push(lv * rv);
            bilinear.push((l + 2, l, l + 1));
        }
        let nl = bounds.len();
        let cost: Vec<f64> = (0..nl).map(|_| rng.gen_range(-4..=4) as f64).collect();
        let linking_cost: Vec<f64> = (0..n0).map(|_| rng.gen_range(-2..=2) as f64).collect();
        let mut rows = Vec::new();
        // Rows tying the scenario to the linking variables.
        for _ in 0..rng.gen_range(1..=2) {
            let i = rng.gen_range(0..n0);
            let mut vars = vec![(RawRef::Linking(i), x0[i])];
            for _ in 0..2 {
                let j = rng.gen_range(0..nl);
                if !vars.iter().any(|(r, _)| *r == RawRef::Local(j)) {
                    vars.push((RawRef::Local(j), point[j]));
                }
            }
            let sense = if rng.gen_bool(0.5) { Sense::Le } else { Sense::Ge };
            rows.push(row_through(&mut rng, &vars, sense));
        }
        // Rows among the locals; products appear so the bilinear terms matter.
        for _ in 0..rng.gen_range(1..=3) {
            let mut vars: Vec<(RawRef, f64)> = Vec::new();
            for _ in 0..3 {
                let j = rng.gen_range(0..nl);
                if !vars.iter().any(|(r, _)| *r == RawRef::Local(j)) {
                    vars.push((RawRef::Local(j), point[j]));
                }
            }
            let sense = if rng.gen_bool(0.5) { Sense::Le } else { Sense::Ge };
            rows.push(row_through(&mut rng, &vars, sense));
        }
        scenarios.push(RawScenario { linking_cost, bounds, cost, nonconvex: vec![false; nl], rows, bilinear });
        locals.push(point);
    }
    let blocks = BlockProblem {
        name: format!("random-{seed}"),
        linking_bounds,
        linking_binary,
        linking_rows,
        scenarios,
        initial_x0: Some(x0.clone()),
    };
    Generated { blocks, x0, locals }
}

pub fn random_instance(seed: u64) -> StructuredProblem {
    standardize(&generate(seed).blocks).expect("generated instances are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_point_satisfies_rows() {
        for seed in 0..50 {
            let g = generate(seed);
            let b = &g.blocks;
            assert!((2..=4).contains(&b.scenarios.len()));
            assert!((1..=3).contains(&b.linking_bounds.len()));
            assert!(b.linking_binary.iter().any(|&x| x));
            for (w, sc) in b.scenarios.iter().enumerate() {
                assert!(sc.bilinear.len() <= 2);
                let val = |r: RawRef| match r {
                    RawRef::Linking(i) => g.x0[i],
                    RawRef::Local(j) => g.locals[w][j],
                };
                for row in &sc.rows {
                    let lhs: f64 = row.terms.iter().map(|&(r, a)| a * val(r)).sum();
                    assert!(row.sense.violation(lhs, row.rhs) < 1e-9, "seed {seed}");
                }
                for &(p, l, r) in &sc.bilinear {
                    assert!((g.locals[w][p] - g.locals[w][l] * g.locals[w][r]).abs() < 1e-12);
                }
            }
            random_instance(seed);
        }
    }

    #[test]
    fn same_seed_same_instance() {
        assert_eq!(generate(7).blocks, generate(7).blocks);
        assert_ne!(generate(7).blocks, generate(8).blocks);
    }
}
