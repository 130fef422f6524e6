//! Cut and column storage.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutKind {
    Optimality,
    Feasibility,
}

/// `eta_w >= value + y_coef.(y - anchor_y) + mu.(x0 - anchor_x0)` for
/// optimality cuts, `0 >= ...` for feasibility cuts.
///
/// `lambda` holds the coupling-row multipliers in the nonnegative convention
/// (the negated LP sensitivities), `y_coef` is `lambda` pushed through the
/// rows' nonconvex coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendersCut {
    pub omega: usize,
    pub kind: CutKind,
    pub iter: usize,
    pub value: f64,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub anchor_x0: Vec<f64>,
    pub anchor_y: Vec<f64>,
    pub y_coef: Vec<f64>,
}

impl BendersCut {
    /// Right-hand side of the cut at `(x0, y)`.
    pub fn eval(&self, x0: &[f64], y: &[f64]) -> f64 {
        let mut v = self.value;
        for (j, c) in self.y_coef.iter().enumerate() {
            v += c * (y[j] - self.anchor_y[j]);
        }
        for (i, m) in self.mu.iter().enumerate() {
            v += m * (x0[i] - self.anchor_x0[i]);
        }
        v
    }

    /// Constant term once the anchors are expanded.
    pub fn constant(&self) -> f64 {
        self.value
            - self.y_coef.iter().zip(&self.anchor_y).map(|(c, a)| c * a).sum::<f64>()
            - self.mu.iter().zip(&self.anchor_x0).map(|(m, a)| m * a).sum::<f64>()
    }

    /// Amount by which the cut is violated at the point (positive when cut off).
    pub fn violation(&self, x0: &[f64], y: &[f64], eta: f64) -> f64 {
        match self.kind {
            CutKind::Optimality => self.eval(x0, y) - eta,
            CutKind::Feasibility => self.eval(x0, y),
        }
    }
}

/// Per-scenario Lagrangian cuts `eta_w >= obj[w] + pi[w].x0` from one
/// Lagrangian subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianCut {
    pub iter: usize,
    pub obj: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
}

impl LagrangianCut {
    pub fn eval(&self, omega: usize, x0: &[f64]) -> f64 {
        self.obj[omega] + self.pi[omega].iter().zip(x0).map(|(p, x)| p * x).sum::<f64>()
    }

    /// Summed cut as `(constant, coefficients on x0)`.
    pub fn aggregate(&self) -> (f64, Vec<f64>) {
        let n0 = self.pi.first().map_or(0, Vec::len);
        let mut coef = vec![0.0; n0];
        for p in &self.pi {
            for (c, v) in coef.iter_mut().zip(p) {
                *c += v;
            }
        }
        (self.obj.iter().sum(), coef)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CutPool {
    pub benders: Vec<BendersCut>,
    pub lagrangian: Vec<LagrangianCut>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnSource {
    Initial,
    Pp,
    Fp,
    Ls,
    Jrmp,
    Jrmpr,
    Ifp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub source: ColumnSource,
    pub y: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ColumnPool {
    pub columns: Vec<Column>,
}

impl ColumnPool {
    pub fn push(&mut self, source: ColumnSource, y: Vec<Vec<f64>>) {
        self.columns.push(Column { source, y });
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Distinct columns of scenario `omega`, first occurrence order.
    pub fn distinct(&self, omega: usize) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for c in &self.columns {
            let y = c.y[omega].as_slice();
            if !out.contains(&y) {
                out.push(y);
            }
        }
        out
    }
}
