//! Stochastic pooling network design: sources, pools and terminals joined by
//! pipelines, with first-stage unit and capacity designs and second-stage
//! flows per scenario. Component flows are tracked per quality, so the
//! contents of each source must partition its flow.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::model::{ModelError, Sense, StructuredProblem};
use crate::standardize::{standardize, BlockProblem, RawRef, RawRow, RawScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    /// Build or not; the unit has its full capacity when built.
    Binary,
    /// Fraction of the maximum capacity, in `[0, 1]`.
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub name: String,
    pub capacity: f64,
    /// Fraction of each quality component in the supplied material.
    pub content: Vec<f64>,
    /// Cost per unit of material supplied.
    pub unit_cost: f64,
    /// Cost of the full design (scaled by the design variable).
    pub capital_cost: f64,
    pub design: DesignKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub name: String,
    pub capacity: f64,
    pub capital_cost: f64,
    pub design: DesignKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub name: String,
    /// Nominal demand limit, also used to size the terminal design.
    pub demand: f64,
    /// Upper limit on the fraction of each quality component.
    pub caps: Vec<f64>,
    pub price: f64,
    pub capital_cost: f64,
    pub design: DesignKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Source(usize),
    Pool(usize),
    Terminal(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: Node,
    pub to: Node,
    pub capacity: f64,
    pub capital_cost: f64,
}

/// Parameter a scenario may override.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Content of one quality at a source; `complement`, when set, receives
    /// whatever keeps the source's contents summing to one.
    SourceContent { source: usize, quality: usize, complement: Option<usize> },
    Demand { terminal: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertainParam {
    pub target: Target,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingNetwork {
    pub name: String,
    pub qualities: Vec<String>,
    pub sources: Vec<Source>,
    pub pools: Vec<Pool>,
    pub terminals: Vec<Terminal>,
    pub arcs: Vec<Arc>,
    #[serde(default)]
    pub uncertain: Vec<UncertainParam>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub target: Target,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub probability: f64,
    pub overrides: Vec<Override>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Error)]
pub enum PoolingError {
    #[error("pool graph has a cycle through pool {0}")]
    Cycle(usize),
    #[error("quality dimension mismatch: {0}")]
    Quality(String),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("invalid scenarios: {0}")]
    Scenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

const PARTITION_TOL: f64 = 1e-9;

impl PoolingNetwork {
    pub fn validate(&self) -> Result<(), PoolingError> {
        let l = self.qualities.len();
        if l == 0 {
            return Err(PoolingError::Quality("no qualities".into()));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if s.content.len() != l {
                return Err(PoolingError::Quality(format!("source {i} has {} contents for {l} qualities", s.content.len())));
            }
            check_partition(i, &s.content)?;
            positive(&format!("source {i} capacity"), s.capacity)?;
        }
        for (j, p) in self.pools.iter().enumerate() {
            positive(&format!("pool {j} capacity"), p.capacity)?;
        }
        for (k, t) in self.terminals.iter().enumerate() {
            if t.caps.len() != l {
                return Err(PoolingError::Quality(format!("terminal {k} has {} caps for {l} qualities", t.caps.len())));
            }
            positive(&format!("terminal {k} demand"), t.demand)?;
        }
        for (a, arc) in self.arcs.iter().enumerate() {
            positive(&format!("arc {a} capacity"), arc.capacity)?;
            let ok_end = |n: Node| match n {
                Node::Source(i) => i < self.sources.len(),
                Node::Pool(j) => j < self.pools.len(),
                Node::Terminal(k) => k < self.terminals.len(),
            };
            if !ok_end(arc.from) || !ok_end(arc.to) {
                return Err(PoolingError::Invalid(format!("arc {a} references a missing node")));
            }
            match (arc.from, arc.to) {
                (Node::Source(_), Node::Pool(_) | Node::Terminal(_)) | (Node::Pool(_), Node::Pool(_) | Node::Terminal(_)) => {}
                _ => return Err(PoolingError::Invalid(format!("arc {a} has an unsupported direction"))),
            }
            if arc.from == arc.to {
                return Err(PoolingError::Cycle(match arc.from {
                    Node::Pool(j) => j,
                    _ => unreachable!(),
                }));
            }
        }
        self.pool_order().map(|_| ())
    }

    /// Pools in an order where every pool-to-pool arc points forward.
    pub fn pool_order(&self) -> Result<Vec<usize>, PoolingError> {
        let r = self.pools.len();
        let mut indeg = vec![0usize; r];
        for arc in &self.arcs {
            if let (Node::Pool(_), Node::Pool(b)) = (arc.from, arc.to) {
                indeg[b] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..r).filter(|&j| indeg[j] == 0).collect();
        let mut order = Vec::with_capacity(r);
        while let Some(j) = ready.pop() {
            order.push(j);
            for arc in &self.arcs {
                if let (Node::Pool(a), Node::Pool(b)) = (arc.from, arc.to) {
                    if a == j {
                        indeg[b] -= 1;
                        if indeg[b] == 0 {
                            ready.push(b);
                        }
                    }
                }
            }
        }
        match (0..r).find(|&j| indeg[j] > 0) {
            Some(j) => Err(PoolingError::Cycle(j)),
            None => Ok(order),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PoolingError> {
        serde_json::from_str(text).map_err(|e| PoolingError::Model(ModelError::Parse(e)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }
}

fn positive(what: &str, v: f64) -> Result<(), PoolingError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PoolingError::Invalid(format!("{what} must be positive and finite, got {v}")))
    }
}

fn check_partition(i: usize, content: &[f64]) -> Result<(), PoolingError> {
    let sum: f64 = content.iter().sum();
    if content.iter().any(|&c| !(0.0..=1.0).contains(&c)) || (sum - 1.0).abs() > PARTITION_TOL {
        return Err(PoolingError::Quality(format!("contents of source {i} do not partition its flow: {content:?}")));
    }
    Ok(())
}

impl ScenarioSet {
    pub fn deterministic() -> Self {
        ScenarioSet { scenarios: vec![Scenario { probability: 1.0, overrides: vec![] }] }
    }

    pub fn validate(&self) -> Result<(), PoolingError> {
        if self.scenarios.is_empty() {
            return Err(PoolingError::Scenario("no scenarios".into()));
        }
        if self.scenarios.iter().any(|s| !(s.probability > 0.0)) {
            return Err(PoolingError::Scenario("probabilities must be positive".into()));
        }
        let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(PoolingError::Scenario(format!("probabilities sum to {total}")));
        }
        Ok(())
    }
}

/// Equal-probability quantile midpoints of each normal parameter, combined as
/// a cross product (first parameter varies slowest).
pub fn sample_scenarios(params: &[UncertainParam], counts: &[usize]) -> Result<ScenarioSet, PoolingError> {
    if params.len() != counts.len() {
        return Err(PoolingError::Scenario(format!("{} parameters but {} counts", params.len(), counts.len())));
    }
    let mut values = Vec::new();
    for (p, &n) in params.iter().zip(counts) {
        if n == 0 {
            return Err(PoolingError::Scenario("scenario count must be at least 1".into()));
        }
        if !(p.std > 0.0) {
            return Err(PoolingError::Scenario(format!("standard deviation must be positive, got {}", p.std)));
        }
        let law = Normal::new(p.mean, p.std).map_err(|e| PoolingError::Scenario(e.to_string()))?;
        values.push((1..=n).map(|t| law.inverse_cdf((2 * t - 1) as f64 / (2 * n) as f64)).collect::<Vec<_>>());
    }
    let mut scenarios = vec![Scenario { probability: 1.0, overrides: vec![] }];
    for (p, vals) in params.iter().zip(&values) {
        let w = 1.0 / vals.len() as f64;
        scenarios = scenarios
            .iter()
            .flat_map(|s| {
                vals.iter().map(move |&v| {
                    let mut o = s.overrides.clone();
                    o.push(Override { target: p.target, value: v });
                    Scenario { probability: s.probability * w, overrides: o }
                })
            })
            .collect();
    }
    Ok(ScenarioSet { scenarios })
}

/// Scenario-specific contents and demands.
struct Realized {
    content: Vec<Vec<f64>>,
    demand: Vec<f64>,
}

fn realize(net: &PoolingNetwork, sc: &Scenario) -> Result<Realized, PoolingError> {
    let mut content: Vec<Vec<f64>> = net.sources.iter().map(|s| s.content.clone()).collect();
    let mut demand: Vec<f64> = net.terminals.iter().map(|t| t.demand).collect();
    let l = net.qualities.len();
    for o in &sc.overrides {
        match o.target {
            Target::SourceContent { source, quality, complement } => {
                if source >= content.len() || quality >= l || complement.is_some_and(|c| c >= l || c == quality) {
                    return Err(PoolingError::Quality(format!("override {:?} out of range", o.target)));
                }
                content[source][quality] = o.value;
                if let Some(c) = complement {
                    let rest: f64 = (0..l).filter(|&w| w != c).map(|w| content[source][w]).sum();
                    content[source][c] = 1.0 - rest;
                }
            }
            Target::Demand { terminal } => {
                if terminal >= demand.len() {
                    return Err(PoolingError::Scenario(format!("override {:?} out of range", o.target)));
                }
                if !(o.value > 0.0) {
                    return Err(PoolingError::Scenario(format!("demand override {} is not positive", o.value)));
                }
                demand[terminal] = o.value;
            }
        }
    }
    for (i, c) in content.iter().enumerate() {
        check_partition(i, c)?;
    }
    Ok(Realized { content, demand })
}

/// Position of every design variable among the linking variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignIndex {
    pub source: Vec<usize>,
    pub pool: Vec<usize>,
    pub terminal: Vec<usize>,
    pub arc: Vec<usize>,
}

impl DesignIndex {
    pub fn new(net: &PoolingNetwork) -> Self {
        let ns = net.sources.len();
        let np = net.pools.len();
        let nt = net.terminals.len();
        DesignIndex {
            source: (0..ns).collect(),
            pool: (ns..ns + np).collect(),
            terminal: (ns + np..ns + np + nt).collect(),
            arc: (ns + np + nt..ns + np + nt + net.arcs.len()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.source.len() + self.pool.len() + self.terminal.len() + self.arc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Positions of one scenario's local variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowIndex {
    /// Flow on each arc leaving a source (source-to-pool and
    /// source-to-terminal arcs); `None` for pool arcs.
    pub source_flow: Vec<Option<usize>>,
    /// Per pool: total inflow and inflow of each quality.
    pub pool_total: Vec<usize>,
    pub pool_quality: Vec<Vec<usize>>,
    /// Per arc leaving a pool: split fraction, total flow, flow per quality.
    pub split: Vec<Option<usize>>,
    pub arc_total: Vec<Option<usize>>,
    pub arc_quality: Vec<Option<Vec<usize>>>,
    /// Per arc leaving a pool, per arc entering that pool: the part of the
    /// inflow routed along it (one entry for a source inflow, one per
    /// quality for a pool inflow).
    pub path: Vec<Option<Vec<Vec<usize>>>>,
    /// Per terminal: total delivered.
    pub delivered: Vec<usize>,
    pub len: usize,
}

/// Arcs entering pool `j`, in arc order.
fn pool_inflows(net: &PoolingNetwork, j: usize) -> Vec<usize> {
    (0..net.arcs.len()).filter(|&a| net.arcs[a].to == Node::Pool(j)).collect()
}

/// Local variable layout shared by all scenarios.
pub fn flow_index(net: &PoolingNetwork) -> FlowIndex {
    let l = net.qualities.len();
    let mut f = FlowIndex::default();
    let mut next = 0;
    let mut take = || {
        next += 1;
        next - 1
    };
    for arc in &net.arcs {
        f.source_flow.push(matches!(arc.from, Node::Source(_)).then(|| take()));
    }
    for _ in &net.pools {
        f.pool_total.push(take());
        f.pool_quality.push((0..l).map(|_| take()).collect());
    }
    for arc in &net.arcs {
        if matches!(arc.from, Node::Pool(_)) {
            f.split.push(Some(take()));
            f.arc_total.push(Some(take()));
            f.arc_quality.push(Some((0..l).map(|_| take()).collect()));
        } else {
            f.split.push(None);
            f.arc_total.push(None);
            f.arc_quality.push(None);
        }
    }
    for arc in &net.arcs {
        let Node::Pool(j) = arc.from else {
            f.path.push(None);
            continue;
        };
        let parts = pool_inflows(net, j)
            .into_iter()
            .map(|e| {
                let k = if matches!(net.arcs[e].from, Node::Pool(_)) { l } else { 1 };
                (0..k).map(|_| take()).collect()
            })
            .collect();
        f.path.push(Some(parts));
    }
    for _ in &net.terminals {
        f.delivered.push(take());
    }
    f.len = next;
    f
}

fn lk(i: usize) -> RawRef {
    RawRef::Linking(i)
}

fn lc(j: usize) -> RawRef {
    RawRef::Local(j)
}

/// Rows over the design variables alone: unit capacities bound the pipelines
/// they touch, and every built unit has enough pipeline capacity attached.
fn design_rows(net: &PoolingNetwork, d: &DesignIndex) -> Vec<RawRow> {
    let mut rows = Vec::new();
    for (i, s) in net.sources.iter().enumerate() {
        let mut out = vec![(lk(d.source[i]), -s.capacity)];
        for (a, arc) in net.arcs.iter().enumerate() {
            if arc.from == Node::Source(i) {
                rows.push(RawRow::new(vec![(lk(d.arc[a]), arc.capacity), (lk(d.source[i]), -s.capacity)], Sense::Le, 0.0));
                out.push((lk(d.arc[a]), arc.capacity));
            }
        }
        rows.push(RawRow::new(out, Sense::Ge, 0.0));
    }
    for (j, p) in net.pools.iter().enumerate() {
        let mut inflow = vec![(lk(d.pool[j]), -p.capacity)];
        let mut outflow = vec![(lk(d.pool[j]), -p.capacity)];
        for (a, arc) in net.arcs.iter().enumerate() {
            let into = arc.to == Node::Pool(j);
            let from = arc.from == Node::Pool(j);
            if into || from {
                rows.push(RawRow::new(vec![(lk(d.arc[a]), arc.capacity), (lk(d.pool[j]), -p.capacity)], Sense::Le, 0.0));
            }
            if into {
                inflow.push((lk(d.arc[a]), arc.capacity));
            }
            if from {
                outflow.push((lk(d.arc[a]), arc.capacity));
            }
        }
        rows.push(RawRow::new(inflow, Sense::Ge, 0.0));
        rows.push(RawRow::new(outflow, Sense::Ge, 0.0));
    }
    for (k, t) in net.terminals.iter().enumerate() {
        let mut inflow = vec![(lk(d.terminal[k]), -t.demand)];
        for (a, arc) in net.arcs.iter().enumerate() {
            if arc.to == Node::Terminal(k) {
                rows.push(RawRow::new(vec![(lk(d.arc[a]), arc.capacity), (lk(d.terminal[k]), -t.demand)], Sense::Le, 0.0));
                inflow.push((lk(d.arc[a]), arc.capacity));
            }
        }
        rows.push(RawRow::new(inflow, Sense::Ge, 0.0));
    }
    rows
}

fn scenario_block(net: &PoolingNetwork, d: &DesignIndex, f: &FlowIndex, prob: f64, real: &Realized) -> RawScenario {
    let l = net.qualities.len();
    let mut bounds = vec![(0.0, 0.0); f.len];
    let mut cost = vec![0.0; f.len];
    let mut nonconvex = vec![false; f.len];
    let mut rows = Vec::new();
    let mut bilinear = Vec::new();

    // Largest possible inflow of each pool, processed in topological order.
    let order = net.pool_order().expect("validated network");
    let mut pool_in = vec![0.0; net.pools.len()];
    for &j in &order {
        pool_in[j] = net
            .arcs
            .iter()
            .filter(|a| a.to == Node::Pool(j))
            .map(|a| match a.from {
                Node::Pool(q) => a.capacity.min(pool_in[q]),
                _ => a.capacity,
            })
            .sum();
    }

    for (a, arc) in net.arcs.iter().enumerate() {
        if let (Some(v), Node::Source(i)) = (f.source_flow[a], arc.from) {
            bounds[v] = (0.0, arc.capacity);
            cost[v] = prob * net.sources[i].unit_cost;
            // Flow within the pipeline design.
            rows.push(RawRow::new(vec![(lc(v), 1.0), (lk(d.arc[a]), -arc.capacity)], Sense::Le, 0.0));
            if matches!(arc.to, Node::Pool(_)) {
                nonconvex[v] = true;
            }
        }
    }
    // Source supply within the source design.
    for (i, s) in net.sources.iter().enumerate() {
        let mut terms: Vec<(RawRef, f64)> =
            (0..net.arcs.len()).filter(|&a| net.arcs[a].from == Node::Source(i)).map(|a| (lc(f.source_flow[a].unwrap()), 1.0)).collect();
        if !terms.is_empty() {
            terms.push((lk(d.source[i]), -s.capacity));
            rows.push(RawRow::new(terms, Sense::Le, 0.0));
        }
    }
    for (j, _) in net.pools.iter().enumerate() {
        let g = f.pool_total[j];
        bounds[g] = (0.0, pool_in[j]);
        nonconvex[g] = true;
        for w in 0..l {
            let gw = f.pool_quality[j][w];
            bounds[gw] = (0.0, pool_in[j]);
            nonconvex[gw] = true;
            // Quality inflow: sources weighted by content, pool arcs by their quality flow.
            let mut terms = vec![(lc(gw), -1.0)];
            for (a, arc) in net.arcs.iter().enumerate() {
                if arc.to != Node::Pool(j) {
                    continue;
                }
                match arc.from {
                    Node::Source(i) => terms.push((lc(f.source_flow[a].unwrap()), real.content[i][w])),
                    Node::Pool(_) => terms.push((lc(f.arc_quality[a].as_ref().unwrap()[w]), 1.0)),
                    Node::Terminal(_) => unreachable!(),
                }
            }
            rows.push(RawRow::new(terms, Sense::Eq, 0.0));
        }
        let mut total = vec![(lc(g), -1.0)];
        total.extend(f.pool_quality[j].iter().map(|&v| (lc(v), 1.0)));
        rows.push(RawRow::new(total, Sense::Eq, 0.0));
        // Split fractions sum to one.
        let splits: Vec<(RawRef, f64)> =
            (0..net.arcs.len()).filter(|&a| net.arcs[a].from == Node::Pool(j)).map(|a| (lc(f.split[a].unwrap()), 1.0)).collect();
        if !splits.is_empty() {
            rows.push(RawRow::new(splits, Sense::Eq, 1.0));
        }
        // Redundant balances per inflow: its parts add up to it.
        let outs: Vec<usize> = (0..net.arcs.len()).filter(|&a| net.arcs[a].from == Node::Pool(j)).collect();
        for (k, &e) in pool_inflows(net, j).iter().enumerate() {
            let whole: Vec<usize> = match net.arcs[e].from {
                Node::Pool(_) => f.arc_quality[e].clone().unwrap(),
                _ => vec![f.source_flow[e].unwrap()],
            };
            for (w, &v) in whole.iter().enumerate() {
                let mut terms = vec![(lc(v), -1.0)];
                terms.extend(outs.iter().map(|&a| (lc(f.path[a].as_ref().unwrap()[k][w]), 1.0)));
                if !outs.is_empty() {
                    rows.push(RawRow::new(terms, Sense::Eq, 0.0));
                }
            }
        }
        // Redundant balances per quality: what leaves equals what enters.
        for w in 0..l {
            let mut terms = vec![(lc(f.pool_quality[j][w]), -1.0)];
            for (a, arc) in net.arcs.iter().enumerate() {
                if arc.from == Node::Pool(j) {
                    terms.push((lc(f.arc_quality[a].as_ref().unwrap()[w]), 1.0));
                }
            }
            if terms.len() > 1 {
                rows.push(RawRow::new(terms, Sense::Eq, 0.0));
            }
        }
    }
    for (a, arc) in net.arcs.iter().enumerate() {
        let Node::Pool(j) = arc.from else { continue };
        let s = f.split[a].unwrap();
        let t = f.arc_total[a].unwrap();
        let q = f.arc_quality[a].as_ref().unwrap();
        let cap = arc.capacity.min(pool_in[j]);
        bounds[s] = (0.0, 1.0);
        bounds[t] = (0.0, cap);
        nonconvex[s] = true;
        nonconvex[t] = true;
        let mut total = vec![(lc(t), -1.0)];
        let mut by_quality: Vec<Vec<(RawRef, f64)>> = (0..l).map(|w| vec![(lc(q[w]), -1.0)]).collect();
        for w in 0..l {
            bounds[q[w]] = (0.0, cap);
            total.push((lc(q[w]), 1.0));
        }
        // Each inflow is split in the same ratio as the pool.
        let parts = f.path[a].as_ref().unwrap();
        for (&e, part) in pool_inflows(net, j).iter().zip(parts) {
            let inflow = &net.arcs[e];
            let reach = cap.min(inflow.capacity);
            match inflow.from {
                Node::Source(i) => {
                    let v = part[0];
                    bounds[v] = (0.0, reach);
                    nonconvex[v] = true;
                    bilinear.push((v, s, f.source_flow[e].unwrap()));
                    for w in 0..l {
                        by_quality[w].push((lc(v), real.content[i][w]));
                    }
                }
                Node::Pool(_) => {
                    let eq = f.arc_quality[e].as_ref().unwrap();
                    for w in 0..l {
                        bounds[part[w]] = (0.0, reach);
                        nonconvex[part[w]] = true;
                        bilinear.push((part[w], s, eq[w]));
                        by_quality[w].push((lc(part[w]), 1.0));
                    }
                }
                Node::Terminal(_) => unreachable!(),
            }
        }
        rows.extend(by_quality.into_iter().map(|terms| RawRow::new(terms, Sense::Eq, 0.0)));
        rows.push(RawRow::new(total, Sense::Eq, 0.0));
        rows.push(RawRow::new(vec![(lc(t), 1.0), (lk(d.arc[a]), -arc.capacity)], Sense::Le, 0.0));
    }
    for (k, term) in net.terminals.iter().enumerate() {
        let dv = f.delivered[k];
        let reach: f64 = net.arcs.iter().filter(|a| a.to == Node::Terminal(k)).map(|a| a.capacity).sum();
        bounds[dv] = (0.0, reach.min(real.demand[k]));
        cost[dv] = -prob * term.price;
        let mut total = vec![(lc(dv), -1.0)];
        let mut quality: Vec<Vec<(RawRef, f64)>> = (0..l).map(|w| vec![(lc(dv), -term.caps[w])]).collect();
        for (a, arc) in net.arcs.iter().enumerate() {
            if arc.to != Node::Terminal(k) {
                continue;
            }
            match arc.from {
                Node::Source(i) => {
                    let v = f.source_flow[a].unwrap();
                    total.push((lc(v), 1.0));
                    for w in 0..l {
                        quality[w].push((lc(v), real.content[i][w]));
                    }
                }
                Node::Pool(_) => {
                    total.push((lc(f.arc_total[a].unwrap()), 1.0));
                    for w in 0..l {
                        quality[w].push((lc(f.arc_quality[a].as_ref().unwrap()[w]), 1.0));
                    }
                }
                Node::Terminal(_) => unreachable!(),
            }
        }
        rows.push(RawRow::new(total, Sense::Eq, 0.0));
        rows.push(RawRow::new(vec![(lc(dv), 1.0), (lk(d.terminal[k]), -real.demand[k])], Sense::Le, 0.0));
        for q in quality {
            rows.push(RawRow::new(q, Sense::Le, 0.0));
        }
    }

    let mut linking_cost = vec![0.0; d.len()];
    for (i, s) in net.sources.iter().enumerate() {
        linking_cost[d.source[i]] = prob * s.capital_cost;
    }
    for (j, p) in net.pools.iter().enumerate() {
        linking_cost[d.pool[j]] = prob * p.capital_cost;
    }
    for (k, t) in net.terminals.iter().enumerate() {
        linking_cost[d.terminal[k]] = prob * t.capital_cost;
    }
    for (a, arc) in net.arcs.iter().enumerate() {
        linking_cost[d.arc[a]] = prob * arc.capital_cost;
    }
    RawScenario { linking_cost, bounds, cost, nonconvex, rows, bilinear }
}

/// Block form of the network before linking variables are copied.
pub fn pooling_blocks(net: &PoolingNetwork, sc: &ScenarioSet) -> Result<BlockProblem, PoolingError> {
    net.validate()?;
    sc.validate()?;
    let d = DesignIndex::new(net);
    let f = flow_index(net);
    let mut binary = vec![false; d.len()];
    for (i, s) in net.sources.iter().enumerate() {
        binary[d.source[i]] = s.design == DesignKind::Binary;
    }
    for (j, p) in net.pools.iter().enumerate() {
        binary[d.pool[j]] = p.design == DesignKind::Binary;
    }
    for (k, t) in net.terminals.iter().enumerate() {
        binary[d.terminal[k]] = t.design == DesignKind::Binary;
    }
    let mut scenarios = Vec::new();
    for s in &sc.scenarios {
        let real = realize(net, s)?;
        scenarios.push(scenario_block(net, &d, &f, s.probability, &real));
    }
    Ok(BlockProblem {
        name: format!("{}-{}", net.name, sc.scenarios.len()),
        linking_bounds: vec![(0.0, 1.0); d.len()],
        linking_binary: binary,
        linking_rows: design_rows(net, &d),
        scenarios,
        // Building nothing is always feasible.
        initial_x0: Some(vec![0.0; d.len()]),
    })
}

pub fn build_pooling_problem(net: &PoolingNetwork, sc: &ScenarioSet) -> Result<StructuredProblem, PoolingError> {
    Ok(standardize(&pooling_blocks(net, sc)?)?)
}

/// Four sources, one pool and two sinks, after the classical Haverly
/// example, with whether to build the pool and the sinks as binary designs
/// and source and pipeline capacities as continuous ones. The fourth
/// source's sulfur content and the first sink's demand are uncertain. The
/// prices, costs and capacities are illustrative values, not a published
/// dataset.
pub fn haverly_surrogate() -> PoolingNetwork {
    let src = |name: &str, sulfur: f64, cost: f64| Source {
        name: name.into(),
        capacity: 300.0,
        content: vec![sulfur, 1.0 - sulfur],
        unit_cost: cost,
        capital_cost: 20.0,
        design: DesignKind::Ratio,
    };
    let arc = |from, to| Arc { from, to, capacity: 300.0, capital_cost: 10.0 };
    use Node::{Pool as P, Source as S, Terminal as T};
    PoolingNetwork {
        name: "haverly-surrogate".into(),
        qualities: vec!["sulfur".into(), "rest".into()],
        sources: vec![src("s1", 0.03, 6.0), src("s2", 0.01, 16.0), src("s3", 0.02, 10.0), src("s4", 0.025, 7.0)],
        pools: vec![Pool { name: "pool".into(), capacity: 300.0, capital_cost: 50.0, design: DesignKind::Binary }],
        terminals: vec![
            Terminal {
                name: "sink1".into(),
                demand: 180.0,
                caps: vec![0.025, 1.0],
                price: 9.0,
                capital_cost: 30.0,
                design: DesignKind::Binary,
            },
            Terminal {
                name: "sink2".into(),
                demand: 200.0,
                caps: vec![0.015, 1.0],
                price: 15.0,
                capital_cost: 30.0,
                design: DesignKind::Binary,
            },
        ],
        arcs: vec![
            arc(S(0), P(0)),
            arc(S(1), P(0)),
            arc(S(3), P(0)),
            arc(S(2), T(0)),
            arc(S(2), T(1)),
            arc(S(3), T(0)),
            arc(S(3), T(1)),
            arc(P(0), T(0)),
            arc(P(0), T(1)),
        ],
        uncertain: vec![
            UncertainParam {
                target: Target::SourceContent { source: 3, quality: 0, complement: Some(1) },
                mean: 0.025,
                std: 0.0008,
            },
            UncertainParam { target: Target::Demand { terminal: 0 }, mean: 180.0, std: 10.0 },
        ],
    }
}

/// Surrogate instance with `counts` samples per uncertain parameter.
pub fn haverly_instance(counts: &[usize]) -> Result<StructuredProblem, PoolingError> {
    let net = haverly_surrogate();
    let sc = sample_scenarios(&net.uncertain, counts)?;
    build_pooling_problem(&net, &sc)
}
