//! Standard-form model: linking variables shared by all scenarios, and per
//! scenario a polyhedral convex block plus a bilinear nonconvex block.
//!
//! The objective is always `sum_w cost_w . x_w`; linking variables enter a
//! scenario only through their copies selected by `nac`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute feasibility tolerance used throughout the crate.
pub const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "le")]
    Le,
    #[serde(rename = "eq")]
    Eq,
    #[serde(rename = "ge")]
    Ge,
}

impl Sense {
    /// Amount by which `lhs` violates `lhs (sense) rhs`; zero when satisfied.
    pub fn violation(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => (lhs - rhs).max(0.0),
            Sense::Ge => (rhs - lhs).max(0.0),
            Sense::Eq => (lhs - rhs).abs(),
        }
    }
}

/// Which variable block a reference points into. Scenario blocks are implied
/// by the scenario that owns the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Block {
    #[serde(rename = "l")]
    Linking,
    #[serde(rename = "x")]
    Convex,
    #[serde(rename = "y")]
    Nonconvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(Block, usize)", into = "(Block, usize)")]
pub struct VarRef {
    pub block: Block,
    pub index: usize,
}

impl VarRef {
    pub fn linking(index: usize) -> Self {
        VarRef { block: Block::Linking, index }
    }
    pub fn x(index: usize) -> Self {
        VarRef { block: Block::Convex, index }
    }
    pub fn y(index: usize) -> Self {
        VarRef { block: Block::Nonconvex, index }
    }
}

impl From<(Block, usize)> for VarRef {
    fn from((block, index): (Block, usize)) -> Self {
        VarRef { block, index }
    }
}

impl From<VarRef> for (Block, usize) {
    fn from(v: VarRef) -> Self {
        (v.block, v.index)
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.block {
            Block::Linking => "x0",
            Block::Convex => "x",
            Block::Nonconvex => "y",
        };
        write!(f, "{tag}[{}]", self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(Block, usize, f64)", into = "(Block, usize, f64)")]
pub struct Term {
    pub var: VarRef,
    pub coef: f64,
}

impl From<(Block, usize, f64)> for Term {
    fn from((block, index, coef): (Block, usize, f64)) -> Self {
        Term { var: VarRef { block, index }, coef }
    }
}

impl From<Term> for (Block, usize, f64) {
    fn from(t: Term) -> Self {
        (t.var.block, t.var.index, t.coef)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<Term>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(terms: Vec<(VarRef, f64)>, sense: Sense, rhs: f64) -> Self {
        LinearConstraint {
            terms: terms.into_iter().map(|(var, coef)| Term { var, coef }).collect(),
            sense,
            rhs,
        }
    }

    pub fn lhs(&self, value: impl Fn(VarRef) -> f64) -> f64 {
        self.terms.iter().map(|t| t.coef * value(t.var)).sum()
    }

    pub fn violation(&self, value: impl Fn(VarRef) -> f64) -> f64 {
        self.sense.violation(self.lhs(value), self.rhs)
    }

    pub fn touches(&self, block: Block) -> bool {
        self.terms.iter().any(|t| t.var.block == block)
    }
}

/// `product = left * right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilinearEquation {
    pub product: VarRef,
    pub left: VarRef,
    pub right: VarRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingSet {
    pub bounds: Vec<(f64, f64)>,
    pub binary: Vec<bool>,
    #[serde(default)]
    pub rows: Vec<LinearConstraint>,
}

impl LinkingSet {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Bounds of the continuous relaxation.
    pub fn relaxed_bounds(&self) -> Vec<(f64, f64)> {
        self.bounds
            .iter()
            .zip(&self.binary)
            .map(|(&(lo, hi), &b)| if b { (lo.max(0.0), hi.min(1.0)) } else { (lo, hi) })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBlock {
    /// Objective coefficients over the convex block.
    pub cost: Vec<f64>,
    /// `nac[i]` is the convex-block variable duplicating linking variable `i`.
    #[serde(rename = "H")]
    pub nac: Vec<usize>,
    /// Rows coupling the convex and nonconvex blocks.
    #[serde(rename = "rows", default)]
    pub coupling_rows: Vec<LinearConstraint>,
    #[serde(default)]
    pub x_rows: Vec<LinearConstraint>,
    #[serde(default)]
    pub y_rows: Vec<LinearConstraint>,
    pub x_bounds: Vec<(f64, f64)>,
    #[serde(default)]
    pub y_bounds: Vec<(f64, f64)>,
    #[serde(default)]
    pub bilinear: Vec<BilinearEquation>,
}

impl ScenarioBlock {
    pub fn nx(&self) -> usize {
        self.x_bounds.len()
    }
    pub fn ny(&self) -> usize {
        self.y_bounds.len()
    }
    /// Every row of the block, convex rows first.
    pub fn all_rows(&self) -> impl Iterator<Item = &LinearConstraint> {
        self.x_rows.iter().chain(&self.coupling_rows).chain(&self.y_rows)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub s: usize,
    /// Optional linking point known to admit a feasible completion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredProblem {
    pub meta: Meta,
    pub linking: LinkingSet,
    pub scenarios: Vec<ScenarioBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Feasible,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::IterationLimit => "iteration-limit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x0: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub objective: f64,
    pub status: Status,
}

impl Solution {
    pub fn infeasible() -> Self {
        Solution { x0: vec![], x: vec![], y: vec![], objective: f64::INFINITY, status: Status::Infeasible }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("instance parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub max_violation: f64,
    pub objective: f64,
    /// Per-scenario `cost_w . x_w`.
    pub scenario_objectives: Vec<f64>,
}

fn check_bounds(out: &mut Vec<Violation>, loc: &str, bounds: &[(f64, f64)]) {
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() {
            out.push(Violation { location: format!("{loc}[{i}]"), message: "bound is not finite".into() });
        } else if lo > hi {
            out.push(Violation {
                location: format!("{loc}[{i}]"),
                message: format!("lower bound {lo} exceeds upper bound {hi}"),
            });
        }
    }
}

fn check_row(
    out: &mut Vec<Violation>,
    loc: &str,
    row: &LinearConstraint,
    allowed: &[Block],
    dims: [usize; 3],
) {
    let mut seen = BTreeSet::new();
    if !row.rhs.is_finite() {
        out.push(Violation { location: loc.into(), message: "right-hand side is not finite".into() });
    }
    for t in &row.terms {
        if !allowed.contains(&t.var.block) {
            out.push(Violation { location: loc.into(), message: format!("{} is not allowed in this row", t.var) });
            continue;
        }
        let dim = match t.var.block {
            Block::Linking => dims[0],
            Block::Convex => dims[1],
            Block::Nonconvex => dims[2],
        };
        if t.var.index >= dim {
            out.push(Violation { location: loc.into(), message: format!("{} out of range (dimension {dim})", t.var) });
        }
        if !t.coef.is_finite() {
            out.push(Violation { location: loc.into(), message: format!("coefficient of {} is not finite", t.var) });
        }
        if !seen.insert(t.var) {
            out.push(Violation { location: loc.into(), message: format!("{} appears twice", t.var) });
        }
    }
}

/// Structural checks; an empty list means the instance is well formed.
pub fn validate(p: &StructuredProblem) -> Vec<Violation> {
    let mut out = Vec::new();
    let n0 = p.linking.dim();
    if p.scenarios.is_empty() {
        out.push(Violation { location: "scenarios".into(), message: "at least one scenario is required".into() });
    }
    if p.meta.s != p.scenarios.len() {
        out.push(Violation {
            location: "meta.s".into(),
            message: format!("declares {} scenarios but {} are present", p.meta.s, p.scenarios.len()),
        });
    }
    if p.linking.binary.len() != n0 {
        out.push(Violation { location: "linking.binary".into(), message: "length differs from linking.bounds".into() });
    }
    check_bounds(&mut out, "linking.bounds", &p.linking.bounds);
    for (i, (&(lo, hi), &b)) in p.linking.bounds.iter().zip(&p.linking.binary).enumerate() {
        if b && (lo < 0.0 || hi > 1.0) {
            out.push(Violation {
                location: format!("linking.bounds[{i}]"),
                message: "binary variable bounds must lie within [0, 1]".into(),
            });
        }
    }
    for (r, row) in p.linking.rows.iter().enumerate() {
        check_row(&mut out, &format!("linking.rows[{r}]"), row, &[Block::Linking], [n0, 0, 0]);
    }
    if let Some(x0) = &p.meta.initial_x0 {
        if x0.len() != n0 {
            out.push(Violation { location: "meta.initial_x0".into(), message: "length differs from linking dimension".into() });
        }
    }
    for (w, sc) in p.scenarios.iter().enumerate() {
        let (nx, ny) = (sc.nx(), sc.ny());
        let loc = |s: &str| format!("scenarios[{w}].{s}");
        if sc.cost.len() != nx {
            out.push(Violation { location: loc("cost"), message: format!("length {} but block has {nx} variables", sc.cost.len()) });
        }
        if sc.cost.iter().any(|c| !c.is_finite()) {
            out.push(Violation { location: loc("cost"), message: "coefficient is not finite".into() });
        }
        if sc.nac.len() != n0 {
            out.push(Violation { location: loc("H"), message: format!("maps {} linking variables, expected {n0}", sc.nac.len()) });
        }
        let mut targets = BTreeSet::new();
        for (i, &j) in sc.nac.iter().enumerate() {
            if j >= nx {
                out.push(Violation { location: loc("H"), message: format!("linking variable {i} maps to x[{j}] out of range") });
            } else if !targets.insert(j) {
                out.push(Violation { location: loc("H"), message: format!("x[{j}] duplicates two linking variables") });
            }
        }
        check_bounds(&mut out, &loc("x_bounds"), &sc.x_bounds);
        check_bounds(&mut out, &loc("y_bounds"), &sc.y_bounds);
        let dims = [n0, nx, ny];
        for (r, row) in sc.coupling_rows.iter().enumerate() {
            check_row(&mut out, &loc(&format!("rows[{r}]")), row, &[Block::Convex, Block::Nonconvex], dims);
        }
        for (r, row) in sc.x_rows.iter().enumerate() {
            check_row(&mut out, &loc(&format!("x_rows[{r}]")), row, &[Block::Convex], dims);
        }
        for (r, row) in sc.y_rows.iter().enumerate() {
            check_row(&mut out, &loc(&format!("y_rows[{r}]")), row, &[Block::Nonconvex], dims);
        }
        for (b, eq) in sc.bilinear.iter().enumerate() {
            let l = loc(&format!("bilinear[{b}]"));
            let refs = [eq.product, eq.left, eq.right];
            if refs.iter().any(|v| v.block != Block::Nonconvex) {
                out.push(Violation {
                    location: l.clone(),
                    message: "bilinear equation touches a non-nonconvex block; the convex block must stay polyhedral".into(),
                });
            }
            if refs.iter().any(|v| v.block == Block::Nonconvex && v.index >= ny) {
                out.push(Violation { location: l.clone(), message: "variable index out of range".into() });
            }
            if eq.left == eq.product || eq.right == eq.product {
                out.push(Violation { location: l, message: "product variable also appears as a factor".into() });
            }
        }
    }
    out
}

/// Max violation over nonanticipativity rows, linear rows, bilinear
/// equations and bounds, plus the recomputed objective.
pub fn evaluate(p: &StructuredProblem, s: &Solution) -> Result<Residuals, ModelError> {
    let n0 = p.linking.dim();
    if s.x0.len() != n0 || s.x.len() != p.scenarios.len() || s.y.len() != p.scenarios.len() {
        return Err(ModelError::Dimension("solution does not match problem shape".into()));
    }
    let mut worst = 0.0f64;
    let bound_viol = |v: f64, (lo, hi): (f64, f64)| (lo - v).max(v - hi).max(0.0);
    for (i, &v) in s.x0.iter().enumerate() {
        worst = worst.max(bound_viol(v, p.linking.bounds[i]));
        if p.linking.binary[i] {
            worst = worst.max((v - v.round()).abs());
        }
    }
    let lval = |r: VarRef| s.x0[r.index];
    for row in &p.linking.rows {
        worst = worst.max(row.violation(lval));
    }
    let mut scen_obj = Vec::with_capacity(p.scenarios.len());
    for (w, sc) in p.scenarios.iter().enumerate() {
        let (x, y) = (&s.x[w], &s.y[w]);
        if x.len() != sc.nx() || y.len() != sc.ny() {
            return Err(ModelError::Dimension(format!("scenario {w} block sizes differ")));
        }
        for (i, &j) in sc.nac.iter().enumerate() {
            worst = worst.max((s.x0[i] - x[j]).abs());
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(bound_viol(v, sc.x_bounds[j]));
        }
        for (j, &v) in y.iter().enumerate() {
            worst = worst.max(bound_viol(v, sc.y_bounds[j]));
        }
        let val = |r: VarRef| match r.block {
            Block::Linking => s.x0[r.index],
            Block::Convex => x[r.index],
            Block::Nonconvex => y[r.index],
        };
        for row in sc.all_rows() {
            worst = worst.max(row.violation(val));
        }
        for eq in &sc.bilinear {
            worst = worst.max((val(eq.product) - val(eq.left) * val(eq.right)).abs());
        }
        scen_obj.push(sc.cost.iter().zip(x).map(|(c, v)| c * v).sum::<f64>());
    }
    Ok(Residuals { max_violation: worst, objective: scen_obj.iter().sum(), scenario_objectives: scen_obj })
}

impl StructuredProblem {
    pub fn n0(&self) -> usize {
        self.linking.dim()
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
