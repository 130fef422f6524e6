//! Flat indexing of the whole problem: linking variables first, then each
//! scenario's convex block followed by its nonconvex block.

use crate::global::GlobalProblem;
use crate::lp::{LpProblem, LpRow};
use crate::model::{Block, LinearConstraint, StructuredProblem, VarRef};
use crate::relax::{Bilinear, BoundsState};

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub n0: usize,
    /// Flat column of each convex variable; copies of linking variables
    /// share the linking column.
    pub x_col: Vec<Vec<usize>>,
    pub y_off: Vec<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(p: &StructuredProblem) -> Self {
        let n0 = p.n0();
        let mut off = n0;
        let mut x_col = Vec::new();
        let mut y_off = Vec::new();
        for s in &p.scenarios {
            let mut copy_of = vec![None; s.nx()];
            for (i, &j) in s.nac.iter().enumerate() {
                copy_of[j] = Some(i);
            }
            let cols = copy_of
                .into_iter()
                .map(|c| {
                    c.unwrap_or_else(|| {
                        off += 1;
                        off - 1
                    })
                })
                .collect();
            x_col.push(cols);
            y_off.push(off);
            off += s.ny();
        }
        Layout { n0, x_col, y_off, total: off }
    }

    pub fn index(&self, w: usize, r: VarRef) -> usize {
        match r.block {
            Block::Linking => r.index,
            Block::Convex => self.x_col[w][r.index],
            Block::Nonconvex => self.y_off[w] + r.index,
        }
    }

    /// Splits a flat vector into `(x0, x, y)`.
    pub fn split(&self, p: &StructuredProblem, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let x0 = z[..self.n0].to_vec();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (w, s) in p.scenarios.iter().enumerate() {
            x.push(self.x_col[w].iter().map(|&c| z[c]).collect());
            y.push(z[self.y_off[w]..self.y_off[w] + s.ny()].to_vec());
        }
        (x0, x, y)
    }
}

/// Maps a model row onto flat indices using `index`.
pub fn flat_row(row: &LinearConstraint, index: impl Fn(VarRef) -> usize) -> LpRow {
    LpRow::new(row.terms.iter().map(|t| (index(t.var), t.coef)).collect(), row.sense, row.rhs)
}

/// The undecomposed problem over the boxes in `b`. Scenario copies of the
/// linking variables are substituted by the linking columns themselves.
pub fn full_problem(p: &StructuredProblem, b: &BoundsState, layout: &Layout) -> GlobalProblem {
    let mut lp = LpProblem::default();
    let mut binary = Vec::with_capacity(layout.total);
    for (i, &(lo, hi)) in b.x0.iter().enumerate() {
        lp.add_var(lo, hi, 0.0);
        binary.push(p.linking.binary[i]);
    }
    for (w, s) in p.scenarios.iter().enumerate() {
        for (j, &(lo, hi)) in s.x_bounds.iter().enumerate() {
            let c = layout.x_col[w][j];
            if c < layout.n0 {
                lp.lower[c] = lp.lower[c].max(lo);
                lp.upper[c] = lp.upper[c].min(hi);
                lp.objective[c] += s.cost[j];
            } else {
                lp.add_var(lo, hi, s.cost[j]);
                binary.push(false);
            }
        }
        for &(lo, hi) in &b.y[w] {
            lp.add_var(lo, hi, 0.0);
            binary.push(false);
        }
    }
    for row in &p.linking.rows {
        lp.rows.push(flat_row(row, |r| r.index));
    }
    let mut bilinear = Vec::new();
    for (w, s) in p.scenarios.iter().enumerate() {
        for row in s.all_rows() {
            lp.rows.push(flat_row(row, |r| layout.index(w, r)));
        }
        for eq in &s.bilinear {
            bilinear.push(Bilinear {
                product: layout.index(w, eq.product),
                left: layout.index(w, eq.left),
                right: layout.index(w, eq.right),
            });
        }
    }
    let mut repair_fix = vec![false; layout.total];
    repair_fix[..layout.n0].iter_mut().for_each(|f| *f = true);
    GlobalProblem { lp, binary, bilinear, repair_fix }
}
