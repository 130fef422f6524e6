//! Conversion of a raw multiscenario block problem into the structured form:
//! linking variables duplicated per scenario, an epigraph variable carrying
//! each scenario's cost, and every variable touched by a bilinear equation
//! moved into the nonconvex block.

use serde::{Deserialize, Serialize};

use crate::model::{
    validate, BilinearEquation, LinearConstraint, LinkingSet, Meta, ModelError, ScenarioBlock, Sense,
    StructuredProblem, VarRef,
};
use crate::relax::product_range;

/// Variable reference inside a raw scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawRef {
    Linking(usize),
    Local(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub terms: Vec<(RawRef, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl RawRow {
    pub fn new(terms: Vec<(RawRef, f64)>, sense: Sense, rhs: f64) -> Self {
        RawRow { terms, sense, rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawScenario {
    /// Cost on this scenario's view of the linking variables.
    pub linking_cost: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub cost: Vec<f64>,
    /// Local variables declared nonconvex even if no bilinear term uses them.
    pub nonconvex: Vec<bool>,
    pub rows: Vec<RawRow>,
    /// `(product, left, right)` over local indices.
    pub bilinear: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockProblem {
    pub name: String,
    pub linking_bounds: Vec<(f64, f64)>,
    pub linking_binary: Vec<bool>,
    /// Rows over linking variables only.
    pub linking_rows: Vec<RawRow>,
    pub scenarios: Vec<RawScenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_x0: Option<Vec<f64>>,
}

/// Where a raw scenario's variables ended up.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMap {
    pub local: Vec<VarRef>,
    pub epigraph: usize,
}

fn invalid(msg: String) -> ModelError {
    ModelError::Invalid(msg)
}

fn check_box(what: &str, b: &[(f64, f64)]) -> Result<(), ModelError> {
    for (j, &(lo, hi)) in b.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!("{what}[{j}] is unbounded")));
        }
        if lo > hi {
            return Err(invalid(format!("{what}[{j}] lower bound {lo} exceeds upper bound {hi}")));
        }
    }
    Ok(())
}

pub fn standardize(raw: &BlockProblem) -> Result<StructuredProblem, ModelError> {
    standardize_with_map(raw).map(|(p, _)| p)
}

pub fn standardize_with_map(raw: &BlockProblem) -> Result<(StructuredProblem, Vec<ScenarioMap>), ModelError> {
    let n0 = raw.linking_bounds.len();
    if raw.linking_binary.len() != n0 {
        return Err(ModelError::Dimension("linking_binary length differs from linking_bounds".into()));
    }
    if raw.scenarios.is_empty() {
        return Err(invalid("no scenarios".into()));
    }
    check_box("linking_bounds", &raw.linking_bounds)?;
    let linking = LinkingSet {
        bounds: raw.linking_bounds.clone(),
        binary: raw.linking_binary.clone(),
        rows: raw
            .linking_rows
            .iter()
            .map(|r| {
                let terms = r
                    .terms
                    .iter()
                    .map(|&(v, a)| match v {
                        RawRef::Linking(i) if i < n0 => Ok((VarRef::linking(i), a)),
                        _ => Err(invalid(format!("linking row references {v:?}"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(LinearConstraint::new(terms, r.sense, r.rhs))
            })
            .collect::<Result<Vec<_>, ModelError>>()?,
    };
    let copy_bounds = linking.relaxed_bounds();
    let mut scenarios = Vec::new();
    let mut maps = Vec::new();
    for (w, rs) in raw.scenarios.iter().enumerate() {
        let (block, map) = standardize_scenario(w, rs, n0, &copy_bounds)?;
        scenarios.push(block);
        maps.push(map);
    }
    let p = StructuredProblem {
        meta: Meta { name: raw.name.clone(), s: scenarios.len(), initial_x0: raw.initial_x0.clone() },
        linking,
        scenarios,
    };
    if let Some(v) = validate(&p).first() {
        return Err(invalid(v.to_string()));
    }
    Ok((p, maps))
}

fn standardize_scenario(
    w: usize,
    rs: &RawScenario,
    n0: usize,
    copy_bounds: &[(f64, f64)],
) -> Result<(ScenarioBlock, ScenarioMap), ModelError> {
    let nl = rs.bounds.len();
    if rs.cost.len() != nl || rs.nonconvex.len() != nl {
        return Err(ModelError::Dimension(format!("scenario {w}: cost/nonconvex length differs from bounds")));
    }
    if rs.linking_cost.len() != n0 {
        return Err(ModelError::Dimension(format!("scenario {w}: linking_cost length {} != {n0}", rs.linking_cost.len())));
    }
    check_box(&format!("scenario {w} bounds"), &rs.bounds)?;
    let mut nonconvex = rs.nonconvex.clone();
    for &(a, b, c) in &rs.bilinear {
        if a >= nl || b >= nl || c >= nl {
            return Err(invalid(format!("scenario {w}: bilinear index out of range")));
        }
        if a == b || a == c {
            return Err(invalid(format!("scenario {w}: product variable {a} is also a factor")));
        }
        nonconvex[a] = true;
        nonconvex[b] = true;
        nonconvex[c] = true;
    }
    // Convex block: linking copies, convex locals, epigraph.
    let mut x_bounds: Vec<(f64, f64)> = copy_bounds.to_vec();
    let mut y_bounds = Vec::new();
    let mut local = Vec::with_capacity(nl);
    for j in 0..nl {
        if nonconvex[j] {
            local.push(VarRef::y(y_bounds.len()));
            y_bounds.push(rs.bounds[j]);
        } else {
            local.push(VarRef::x(x_bounds.len()));
            x_bounds.push(rs.bounds[j]);
        }
    }
    let map_ref = |v: RawRef| -> Result<VarRef, ModelError> {
        match v {
            RawRef::Linking(i) if i < n0 => Ok(VarRef::x(i)),
            RawRef::Local(j) if j < nl => Ok(local[j]),
            _ => Err(invalid(format!("scenario {w}: reference {v:?} out of range"))),
        }
    };
    for &(a, b, c) in &rs.bilinear {
        let (lo, hi) = product_range(rs.bounds[b], rs.bounds[c]);
        let (plo, phi) = rs.bounds[a];
        if plo > hi || phi < lo {
            return Err(invalid(format!("scenario {w}: product {a} cannot reach the range of its factors")));
        }
    }
    // Epigraph row: cost terms minus t <= 0, t bounded by the cost range.
    let mut cost_terms: Vec<(VarRef, f64)> = Vec::new();
    let (mut tlo, mut thi) = (0.0, 0.0);
    let mut add_cost = |v: VarRef, c: f64, (lo, hi): (f64, f64)| {
        if c != 0.0 {
            cost_terms.push((v, c));
            tlo += (c * lo).min(c * hi);
            thi += (c * lo).max(c * hi);
        }
    };
    for i in 0..n0 {
        add_cost(VarRef::x(i), rs.linking_cost[i], copy_bounds[i]);
    }
    for j in 0..nl {
        add_cost(local[j], rs.cost[j], rs.bounds[j]);
    }
    if rs.linking_cost.iter().chain(&rs.cost).any(|c| !c.is_finite()) {
        return Err(invalid(format!("scenario {w}: cost is not finite")));
    }
    let t = x_bounds.len();
    x_bounds.push((tlo, thi));
    cost_terms.push((VarRef::x(t), -1.0));
    let epigraph = LinearConstraint::new(cost_terms, Sense::Le, 0.0);

    let mut block = ScenarioBlock {
        cost: {
            let mut c = vec![0.0; x_bounds.len()];
            c[t] = 1.0;
            c
        },
        nac: (0..n0).collect(),
        coupling_rows: vec![],
        x_rows: vec![],
        y_rows: vec![],
        x_bounds,
        y_bounds,
        bilinear: rs
            .bilinear
            .iter()
            .map(|&(a, b, c)| BilinearEquation { product: local[a], left: local[b], right: local[c] })
            .collect(),
    };
    let mut place = |row: LinearConstraint| {
        let has_x = row.terms.iter().any(|t| t.var.block == crate::model::Block::Convex);
        let has_y = row.terms.iter().any(|t| t.var.block == crate::model::Block::Nonconvex);
        match (has_x, has_y) {
            (true, true) => block.coupling_rows.push(row),
            (false, true) => block.y_rows.push(row),
            _ => block.x_rows.push(row),
        }
    };
    place(epigraph);
    for (r, row) in rs.rows.iter().enumerate() {
        if row.terms.iter().any(|&(_, a)| !a.is_finite()) || !row.rhs.is_finite() {
            return Err(invalid(format!("scenario {w} row {r}: coefficient is not finite")));
        }
        let terms = row.terms.iter().map(|&(v, a)| Ok((map_ref(v)?, a))).collect::<Result<Vec<_>, ModelError>>()?;
        place(LinearConstraint::new(terms, row.sense, row.rhs));
    }
    Ok((block, ScenarioMap { local, epigraph: t }))
}
