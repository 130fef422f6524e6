//! Polyhedral relaxations: McCormick envelopes for bilinear equations and the
//! continuous relaxation of binaries, built from the current variable boxes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flat::{full_problem, Layout};
use crate::lp::{LpProblem, LpRow};
use crate::model::{Sense, StructuredProblem};

/// `product = left * right` over flat variable indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bilinear {
    pub product: usize,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("bilinear factor {0} has an infinite bound")]
    Unbounded(usize),
}

/// The four envelope rows for `w = u * v` with `u in [ul, uu]`, `v in [vl, vu]`:
///
/// ```text
/// w >= ul*v + vl*u - ul*vl      w >= uu*v + vu*u - uu*vu
/// w <= uu*v + vl*u - uu*vl      w <= ul*v + vu*u - ul*vu
/// ```
pub fn mccormick(t: &Bilinear, (ul, uu): (f64, f64), (vl, vu): (f64, f64)) -> Result<[LpRow; 4], RelaxError> {
    if !ul.is_finite() || !uu.is_finite() {
        return Err(RelaxError::Unbounded(t.left));
    }
    if !vl.is_finite() || !vu.is_finite() {
        return Err(RelaxError::Unbounded(t.right));
    }
    let (w, u, v) = (t.product, t.left, t.right);
    let row = |a: f64, b: f64, sense: Sense, rhs: f64| {
        // w - a*v - b*u (sense) rhs
        let mut terms = vec![(w, 1.0), (v, -a), (u, -b)];
        if u == v {
            terms = vec![(w, 1.0), (u, -a - b)];
        }
        LpRow::new(terms, sense, rhs)
    };
    Ok([
        row(ul, vl, Sense::Ge, -ul * vl),
        row(uu, vu, Sense::Ge, -uu * vu),
        row(uu, vl, Sense::Le, -uu * vl),
        row(ul, vu, Sense::Le, -ul * vu),
    ])
}

/// Interval hull of `u * v` over the box.
pub fn product_range((ul, uu): (f64, f64), (vl, vu): (f64, f64)) -> (f64, f64) {
    let c = [ul * vl, ul * vu, uu * vl, uu * vu];
    (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Copies `base` with the given bounds and appends envelope rows for every
/// bilinear term.
pub fn relax_with_bounds(
    base: &LpProblem,
    bilinear: &[Bilinear],
    lower: &[f64],
    upper: &[f64],
) -> Result<LpProblem, RelaxError> {
    let mut lp = base.clone();
    lp.lower = lower.to_vec();
    lp.upper = upper.to_vec();
    for t in bilinear {
        let rows = mccormick(t, (lower[t.left], upper[t.left]), (lower[t.right], upper[t.right]))?;
        lp.rows.extend(rows);
    }
    Ok(lp)
}

/// Current boxes of the linking and nonconvex variables. Never looser than
/// the model bounds; `generation` changes whenever a box shrinks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsState {
    pub x0: Vec<(f64, f64)>,
    pub y: Vec<Vec<(f64, f64)>>,
    pub generation: u64,
}

impl BoundsState {
    pub fn from_problem(p: &StructuredProblem) -> Self {
        BoundsState {
            x0: p.linking.relaxed_bounds(),
            y: p.scenarios.iter().map(|s| s.y_bounds.clone()).collect(),
            generation: 0,
        }
    }

    /// Smallest slack of the point with respect to the boxes (negative when
    /// outside).
    pub fn min_slack(&self, x0: &[f64], y: &[Vec<f64>]) -> f64 {
        let mut s = f64::INFINITY;
        for (&(lo, hi), &v) in self.x0.iter().zip(x0) {
            s = s.min(v - lo).min(hi - v);
        }
        for (bw, yw) in self.y.iter().zip(y) {
            for (&(lo, hi), &v) in bw.iter().zip(yw) {
                s = s.min(v - lo).min(hi - v);
            }
        }
        s
    }

    /// Intersects a linking box with `[lo, hi]`; binaries snap inward to
    /// integers. Returns true when something shrank.
    pub fn tighten_x0(&mut self, i: usize, lo: f64, hi: f64, binary: bool) -> bool {
        let (mut l, mut h) = self.x0[i];
        let (mut nl, mut nh) = (l.max(lo), h.min(hi));
        if binary {
            nl = (nl - 1e-9).ceil().max(l);
            nh = (nh + 1e-9).floor().min(h);
        }
        let changed = nl > l || nh < h;
        if changed {
            l = nl;
            h = nh;
            if l > h {
                // Only reachable through numerical noise; keep the box valid.
                let mid = 0.5 * (l + h);
                l = mid;
                h = mid;
            }
            self.x0[i] = (l, h);
            self.generation += 1;
        }
        changed
    }

    pub fn tighten_y(&mut self, w: usize, j: usize, lo: f64, hi: f64) -> bool {
        let (l, h) = self.y[w][j];
        let (mut nl, mut nh) = (l.max(lo), h.min(hi));
        let changed = nl > l || nh < h;
        if changed {
            if nl > nh {
                let mid = 0.5 * (nl + nh);
                nl = mid;
                nh = mid;
            }
            self.y[w][j] = (nl, nh);
            self.generation += 1;
        }
        changed
    }
}

/// LP relaxation of the whole problem at the boxes in `b`: all linear rows,
/// nonanticipativity rows, envelope rows, binaries relaxed.
pub fn relax(p: &StructuredProblem, b: &BoundsState) -> Result<LpProblem, RelaxError> {
    let layout = Layout::new(p);
    full_problem(p, b, &layout).relaxation()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn holds(rows: &[LpRow], x: &[f64]) -> bool {
        rows.iter().all(|r| r.violation(x) <= 1e-9)
    }

    const T: Bilinear = Bilinear { product: 0, left: 1, right: 2 };

    #[test]
    fn tight_at_corner() {
        let rows = mccormick(&T, (0.0, 1.0), (0.0, 1.0)).unwrap();
        assert!(holds(&rows, &[1.0, 1.0, 1.0]));
        assert!(!holds(&rows, &[1.0 - 1e-6, 1.0, 1.0]));
        assert!(!holds(&rows, &[1.0 + 1e-6, 1.0, 1.0]));
    }

    #[test]
    fn centre_interval() {
        let rows = mccormick(&T, (0.0, 1.0), (0.0, 1.0)).unwrap();
        assert!(holds(&rows, &[0.0, 0.5, 0.5]));
        assert!(holds(&rows, &[0.5, 0.5, 0.5]));
        assert!(!holds(&rows, &[-0.01, 0.5, 0.5]));
        assert!(!holds(&rows, &[0.51, 0.5, 0.5]));
    }

    #[test]
    fn collapses_when_factor_fixed() {
        let rows = mccormick(&T, (1.5, 1.5), (-1.0, 3.0)).unwrap();
        for v in [-1.0, 0.0, 2.0, 3.0] {
            assert!(holds(&rows, &[1.5 * v, 1.5, v]));
            assert!(!holds(&rows, &[1.5 * v + 1e-6, 1.5, v]));
            assert!(!holds(&rows, &[1.5 * v - 1e-6, 1.5, v]));
        }
    }

    #[test]
    fn infinite_bound_rejected() {
        assert!(mccormick(&T, (0.0, f64::INFINITY), (0.0, 1.0)).is_err());
    }

    #[test]
    fn square_term() {
        let sq = Bilinear { product: 0, left: 1, right: 1 };
        let rows = mccormick(&sq, (-1.0, 2.0), (-1.0, 2.0)).unwrap();
        for u in [-1.0, -0.3, 0.0, 0.7, 2.0] {
            assert!(holds(&rows, &[u * u, u]));
        }
    }
}
