//! Information flow: per-leg capacities log_d(dim), conservation, vertical
//! cuts, net flow, the GNVW log-index, concatenation and cost.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{ExternalKind, Network};
use crate::linalg;
use crate::tensor::Direction;

/// log_d of a dimension: exact when dim and d are powers of a common base.
#[derive(Clone, Copy, Debug)]
pub enum FlowValue {
    Exact(Ratio<i64>),
    Approx(f64),
}

impl FlowValue {
    pub fn zero() -> Self {
        FlowValue::Exact(Ratio::from_integer(0))
    }

    pub fn to_f64(self) -> f64 {
        match self {
            FlowValue::Exact(r) => *r.numer() as f64 / *r.denom() as f64,
            FlowValue::Approx(x) => x,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, FlowValue::Exact(_))
    }

    pub fn neg(self) -> Self {
        match self {
            FlowValue::Exact(r) => FlowValue::Exact(-r),
            FlowValue::Approx(x) => FlowValue::Approx(-x),
        }
    }

    pub fn add(self, other: Self) -> Self {
        match (self, other) {
            (FlowValue::Exact(a), FlowValue::Exact(b)) => FlowValue::Exact(a + b),
            (a, b) => FlowValue::Approx(a.to_f64() + b.to_f64()),
        }
    }

    pub fn sub(self, other: Self) -> Self {
        self.add(other.neg())
    }

    pub fn abs(self) -> Self {
        match self {
            FlowValue::Exact(r) if r < Ratio::from_integer(0) => FlowValue::Exact(-r),
            FlowValue::Approx(x) => FlowValue::Approx(x.abs()),
            v => v,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            FlowValue::Exact(r) => r == Ratio::from_integer(0),
            FlowValue::Approx(x) => x.abs() < 1e-12,
        }
    }
}

/// Exact when both sides are exact, else within 1e-12.
impl PartialEq for FlowValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (FlowValue::Exact(a), FlowValue::Exact(b)) => a == b,
            (a, b) => (a.to_f64() - b.to_f64()).abs() < 1e-12,
        }
    }
}

impl fmt::Display for FlowValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowValue::Exact(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            FlowValue::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            FlowValue::Approx(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for FlowValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

/// Exponent k with n = b^k, if any.
fn int_log(n: u64, b: u64) -> Option<i64> {
    let mut k = 0;
    let mut m = n;
    while m > 1 {
        if m % b != 0 {
            return None;
        }
        m /= b;
        k += 1;
    }
    Some(k)
}

/// f_I = log_d(dim).
pub fn edge_flow(dim: usize, d: usize) -> FlowValue {
    if dim <= 1 {
        return FlowValue::zero();
    }
    let d = d.max(2) as u64;
    for g in 2..=d {
        if let (Some(p), Some(q)) = (int_log(d, g), int_log(dim as u64, g)) {
            return FlowValue::Exact(Ratio::new(q, p));
        }
    }
    FlowValue::Approx((dim as f64).ln() / (d as f64).ln())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexFlowResidual {
    pub vertex: String,
    pub residual: FlowValue,
}

/// |Σ_out − Σ_in| of leg flows at every internal vertex.
pub fn conservation_check(net: &Network) -> Vec<VertexFlowResidual> {
    net.vertices
        .iter()
        .map(|v| {
            let mut acc = FlowValue::zero();
            for l in v.tensor.legs() {
                let f = edge_flow(l.dim, net.d);
                acc = match l.direction {
                    Direction::Outgoing => acc.add(f),
                    Direction::Incoming => acc.sub(f),
                };
            }
            VertexFlowResidual { vertex: v.id.clone(), residual: acc.abs() }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Crossing {
    pub label: String,
    pub dim: usize,
}

/// The vertical surface between sites `left` and `left + 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerticalCut {
    pub position: f64,
    pub rightward: Vec<Crossing>,
    pub leftward: Vec<Crossing>,
    pub flow: FlowValue,
}

struct Geometry {
    lo: i64,
    hi: i64,
    period: Option<i64>,
}

impl Geometry {
    fn of(net: &Network) -> Option<Self> {
        let mut sites: Vec<i64> = net.sites();
        sites.extend(net.vertices.iter().map(|v| v.site));
        let lo = *sites.iter().min()?;
        let hi = *sites.iter().max()?;
        Some(Geometry { lo, hi, period: net.period })
    }

    /// Cut indices c (surface at c + ½) that are reported.
    fn cuts(&self) -> Vec<i64> {
        match self.period {
            Some(p) => (self.lo..self.lo + p).collect(),
            None => (self.lo..self.hi).collect(),
        }
    }

    fn canon(&self, c: i64) -> i64 {
        match self.period {
            Some(p) => self.lo + (c - self.lo).rem_euclid(p),
            None => c,
        }
    }

    /// Cuts crossed by a displacement `hop` starting at `from`.
    fn crossed(&self, from: i64, hop: i64) -> Vec<i64> {
        if hop > 0 {
            (from..from + hop).map(|c| self.canon(c)).collect()
        } else {
            (from + hop..from).map(|c| self.canon(c)).collect()
        }
    }
}

/// Every bond and physical external as (label, from site, hop, dim).
fn crossings(net: &Network) -> Vec<(String, i64, i64, usize)> {
    let mut out = Vec::new();
    for e in &net.edges {
        let (Some(a), Ok(dim)) = (net.vertex(&e.from), net.leg_dim(&e.from, &e.from_leg)) else { continue };
        out.push((format!("{}.{}->{}.{}", e.from, e.from_leg, e.to, e.to_leg), a.site, net.edge_hop(e), dim));
    }
    for s in &net.sources {
        if s.boundary != ExternalKind::Physical {
            continue;
        }
        let (Some(v), Ok(dim)) = (net.vertex(&s.vertex), net.leg_dim(&s.vertex, &s.leg)) else { continue };
        out.push((format!("source {}.{}", s.vertex, s.leg), s.site, v.site - s.site, dim));
    }
    for s in &net.sinks {
        if s.boundary != ExternalKind::Physical {
            continue;
        }
        let (Some(v), Ok(dim)) = (net.vertex(&s.vertex), net.leg_dim(&s.vertex, &s.leg)) else { continue };
        out.push((format!("sink {}.{}", s.vertex, s.leg), v.site, s.site - v.site, dim));
    }
    out
}

/// Signed flow through the surface between site `left` and `left + 1`
/// (rightward minus leftward).
pub fn vertical_cut(net: &Network, left: i64) -> VerticalCut {
    let geo = Geometry::of(net);
    let mut rightward = Vec::new();
    let mut leftward = Vec::new();
    let mut flow = FlowValue::zero();
    if let Some(geo) = geo {
        let target = geo.canon(left);
        for (label, from, hop, dim) in crossings(net) {
            let n = geo.crossed(from, hop).iter().filter(|&&c| c == target).count();
            for _ in 0..n {
                let f = edge_flow(dim, net.d);
                if hop > 0 {
                    flow = flow.add(f);
                    rightward.push(Crossing { label: label.clone(), dim });
                } else {
                    flow = flow.sub(f);
                    leftward.push(Crossing { label: label.clone(), dim });
                }
            }
        }
    }
    VerticalCut { position: left as f64 + 0.5, rightward, leftward, flow }
}

pub fn net_flow_cut(net: &Network, left: i64) -> FlowValue {
    vertical_cut(net, left).flow
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NetFlow {
    Uniform { value: FlowValue },
    /// Two cuts that disagree.
    Undefined { reason: String, cut_a: f64, flow_a: FlowValue, cut_b: f64, flow_b: FlowValue },
    /// No interior cut exists (a single site).
    NoCuts,
}

impl NetFlow {
    pub fn value(&self) -> Option<FlowValue> {
        match self {
            NetFlow::Uniform { value } => Some(*value),
            _ => None,
        }
    }
}

pub fn all_cuts(net: &Network) -> Vec<VerticalCut> {
    match Geometry::of(net) {
        Some(g) => g.cuts().into_iter().map(|c| vertical_cut(net, c)).collect(),
        None => Vec::new(),
    }
}

/// The common flow of all vertical cuts, or the first disagreeing pair.
pub fn net_flow(net: &Network) -> NetFlow {
    let cuts = all_cuts(net);
    let Some(first) = cuts.first() else { return NetFlow::NoCuts };
    for c in &cuts[1..] {
        if c.flow != first.flow {
            return NetFlow::Undefined {
                reason: "non-uniform".into(),
                cut_a: first.position,
                flow_a: first.flow,
                cut_b: c.position,
                flow_b: c.flow,
            };
        }
    }
    NetFlow::Uniform { value: first.flow }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowReport {
    pub base_d: usize,
    pub edge_flows: BTreeMap<String, FlowValue>,
    pub vertex_residuals: BTreeMap<String, FlowValue>,
    pub cut_flows: BTreeMap<String, FlowValue>,
    pub net_flow: NetFlow,
}

pub fn flow_report(net: &Network) -> FlowReport {
    let mut edge_flows = BTreeMap::new();
    for (k, e) in net.edges.iter().enumerate() {
        let dim = net.leg_dim(&e.from, &e.from_leg).unwrap_or(1);
        edge_flows.insert(format!("{k}:{}.{}->{}.{}", e.from, e.from_leg, e.to, e.to_leg), edge_flow(dim, net.d));
    }
    let vertex_residuals = conservation_check(net).into_iter().map(|r| (r.vertex, r.residual)).collect();
    let cut_flows = all_cuts(net).into_iter().map(|c| (format!("{}", c.position), c.flow)).collect();
    FlowReport { base_d: net.d, edge_flows, vertex_residuals, cut_flows, net_flow: net_flow(net) }
}

/// log_d(b_{2m} / a_{2m}) from the Margolus cell dims.
pub fn gnvw_log_index(a_dim: usize, b_dim: usize, d: usize) -> FlowValue {
    edge_flow(b_dim, d).sub(edge_flow(a_dim, d))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeCost {
    pub edge: String,
    pub flow: FlowValue,
    pub length: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub edges: Vec<EdgeCost>,
    pub total: f64,
}

impl CostReport {
    /// Report from (edge name, flow, length) triples.
    pub fn from_edges(items: impl IntoIterator<Item = (String, FlowValue, f64)>) -> Self {
        let edges: Vec<EdgeCost> = items
            .into_iter()
            .map(|(edge, flow, length)| EdgeCost { edge, flow, length, cost: flow.to_f64() * length })
            .collect();
        let total = edges.iter().map(|e| e.cost).sum();
        CostReport { edges, total }
    }
}

/// C_I = Σ_e log_d(dim e)·|e| over internal edges.
pub fn cost_total(net: &Network) -> CostReport {
    CostReport::from_edges(net.edges.iter().enumerate().map(|(k, e)| {
        let dim = net.leg_dim(&e.from, &e.from_leg).unwrap_or(1);
        (format!("{k}:{}.{}->{}.{}", e.from, e.from_leg, e.to, e.to_leg), edge_flow(dim, net.d), e.length)
    }))
}

fn bond_dim(net: &Network, vertex: &str, leg: &str) -> usize {
    net.vertex(vertex).and_then(|v| v.tensor.leg(leg).ok()).map(|l| l.dim).unwrap_or(1)
}

/// Joins the part of `net1` left of `junction` with the part of `net2` right
/// of it. Both must be bilayers as produced by `gallery::build_bilayer`
/// (vertices `B{site}`/`T{site}`, legs s, l, r, v). The junction column is
/// refilled with identity routing when the bonds already match and seeded
/// Haar tensors otherwise. Fails when the two net flows differ, since no
/// middle column can then balance both layers.
pub fn concatenate_crossover(net1: &Network, net2: &Network, junction: i64, seed: u64) -> Result<Network> {
    use crate::gallery::{build_bilayer, routing, Column, ColumnDims};
    if net1.d != net2.d {
        return Err(Error::Invalid("networks use different qudit dims".into()));
    }
    let f1 = net_flow(net1).value().ok_or_else(|| Error::Infeasible("net1 has no uniform net flow".into()))?;
    let f2 = net_flow(net2).value().ok_or_else(|| Error::Infeasible("net2 has no uniform net flow".into()))?;
    if f1 != f2 {
        return Err(Error::Infeasible(format!("net flows differ ({f1} vs {f2}); conservation forbids the junction")));
    }
    let b = |k: i64| format!("B{k}");
    let t = |k: i64| format!("T{k}");
    let left = junction - 1;
    let right = junction + 1;
    for (net, k) in [(net1, left), (net2, right)] {
        if net.vertex(&b(k)).is_none() || net.vertex(&t(k)).is_none() {
            return Err(Error::Structure(format!("column {k} is missing")));
        }
    }
    let s_in = bond_dim(net1, &b(junction), "s").max(bond_dim(net2, &b(junction), "s"));
    let d1b = bond_dim(net1, &b(left), "r");
    let d1t = bond_dim(net1, &t(left), "r");
    let d2b = bond_dim(net2, &b(right), "l");
    let d2t = bond_dim(net2, &t(right), "l");
    if (s_in * d1b) % d2b != 0 || (s_in * d1t) % d2t != 0 || s_in * d1b / d2b != s_in * d1t / d2t {
        return Err(Error::Infeasible(format!(
            "no integer vertical dim balances bonds ({d1b},{d1t}) against ({d2b},{d2t})"
        )));
    }
    let v = s_in * d1b / d2b;
    let dims = ColumnDims { s_in, l_in: d1b, r_out: d2b, v, r_in: d2t, s_out: s_in, l_out: d1t };
    let (bottom, top) = if d1b == d2b && d1t == d2t {
        (
            routing(&[s_in, d1b], &[d2b, v], |x| vec![x[1], x[0]]),
            routing(&[v, d2t], &[s_in, d1t], |x| x.to_vec()),
        )
    } else {
        let mut r = linalg::rng(seed);
        (linalg::haar_unitary(s_in * d1b, &mut r), linalg::haar_unitary(v * d2t, &mut r))
    };
    let mid = build_bilayer(net1.d, &[Column { site: junction, dims, bottom, top }])?;

    let mut out = Network::new(net1.d);
    let keep1 = |id: &str| net1.vertex(id).is_some_and(|x| x.site < junction);
    let keep2 = |id: &str| net2.vertex(id).is_some_and(|x| x.site > junction);
    out.vertices.extend(net1.vertices.iter().filter(|x| x.site < junction).cloned());
    out.vertices.extend(mid.vertices.iter().cloned());
    out.vertices.extend(net2.vertices.iter().filter(|x| x.site > junction).cloned());
    out.edges.extend(net1.edges.iter().filter(|e| keep1(&e.from) && keep1(&e.to)).cloned());
    out.edges.extend(mid.edges.iter().cloned());
    out.edges.extend(net2.edges.iter().filter(|e| keep2(&e.from) && keep2(&e.to)).cloned());
    if d1b > 1 {
        out.connect(&b(left), "r", &b(junction), "l");
    }
    if d1t > 1 {
        out.connect(&t(junction), "l", &t(left), "r");
    }
    if d2b > 1 {
        out.connect(&b(junction), "r", &b(right), "l");
    }
    if d2t > 1 {
        out.connect(&t(right), "l", &t(junction), "r");
    }
    for (net, keep) in [(net1, &keep1 as &dyn Fn(&str) -> bool), (net2, &keep2)] {
        out.sources.extend(net.sources.iter().filter(|s| keep(&s.vertex)).cloned());
        out.sinks.extend(net.sinks.iter().filter(|s| keep(&s.vertex)).cloned());
    }
    out.sources.extend(mid.sources.iter().filter(|s| s.is_physical()).cloned());
    out.sinks.extend(mid.sinks.iter().filter(|s| s.is_physical()).cloned());
    out.sources.sort_by_key(|s| s.site);
    out.sinks.sort_by_key(|s| s.site);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::*;

    fn uniform(net: &Network) -> f64 {
        net_flow(net).value().expect("uniform").to_f64()
    }

    #[test]
    fn log_law() {
        assert_eq!(edge_flow(2, 2), FlowValue::Exact(Ratio::from_integer(1)));
        assert_eq!(edge_flow(1, 2), FlowValue::zero());
        assert_eq!(edge_flow(4, 2), FlowValue::Exact(Ratio::from_integer(2)));
        assert_eq!(edge_flow(2, 4), FlowValue::Exact(Ratio::new(1, 2)));
        assert!(!edge_flow(3, 2).is_exact());
    }

    #[test]
    fn shift_and_staircase_flows() {
        assert_eq!(uniform(&build_shift(5, 2, ShiftVariant::ObcBilayer).unwrap()), 1.0);
        assert_eq!(uniform(&build_shift(5, 2, ShiftVariant::PbcWrapped).unwrap()), 1.0);
        assert_eq!(uniform(&build_shift(5, 2, ShiftVariant::SwapStaircaseSqc).unwrap()), 0.0);
        assert_eq!(uniform(&build_identity_bilayer(3, 2, 2).unwrap()), 0.0);
    }

    #[test]
    fn redundant_identity_and_impurity() {
        assert_eq!(uniform(&build_redundant_identity(4, 2, 2).unwrap()), 1.0);
        assert_eq!(uniform(&build_redundant_identity(4, 2, 1).unwrap()), 0.0);
        match net_flow(&build_nonuniform_impurity().unwrap()) {
            NetFlow::Undefined { flow_a, flow_b, .. } => assert_ne!(flow_a, flow_b),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_vertex_residual() {
        let mut net = Network::new(2);
        let t = crate::tensor::Tensor::new(
            vec![crate::tensor::LegSpec::incoming("a", 4), crate::tensor::LegSpec::outgoing("b", 2)],
            vec![linalg::ZERO; 8],
            "x",
        )
        .unwrap();
        net.add_vertex("X", t, 0, 0);
        assert_eq!(conservation_check(&net)[0].residual, FlowValue::Exact(Ratio::from_integer(1)));
    }

    #[test]
    fn bilayer_cost_is_sum_of_logs() {
        let cols: Vec<Column> = [(1, 1, 2), (2, 2, 4), (3, 4, 2), (4, 2, 1)]
            .iter()
            .map(|&(site, l, r)| Column {
                site,
                dims: ColumnDims { s_in: 2, l_in: l, r_out: r, v: 2 * l / r, r_in: 1, s_out: 2 * l / r, l_out: 1 },
                bottom: linalg::CMat::identity(2 * l, 2 * l),
                top: linalg::CMat::identity(2 * l / r, 2 * l / r),
            })
            .collect();
        let net = build_bilayer(2, &cols).unwrap();
        assert_eq!(cost_total(&net).total, 4.0);
        assert_eq!(cost_total(&build_identity_bilayer(3, 2, 1).unwrap()).total, 0.0);
        assert!(cost_total(&build_identity_bilayer(3, 2, 2).unwrap()).total > 0.0);
    }

    #[test]
    fn crossover_feasibility() {
        let shift = build_shift(6, 2, ShiftVariant::ObcBilayer).unwrap();
        let id = build_identity_bilayer(6, 2, 2).unwrap();
        assert!(matches!(concatenate_crossover(&shift, &id, 3, 0), Err(Error::Infeasible(_))));
        let a = build_haar_bilayer(6, 2, 2, 2, 1).unwrap();
        let b = build_haar_bilayer(6, 2, 4, 4, 2).unwrap();
        let c = concatenate_crossover(&a, &b, 3, 7).unwrap();
        let diag = crate::graph::validate(&c);
        assert!(diag.is_valid_unitary_network(), "{diag:?}");
        let m = crate::eval::evaluate_matrix(&c).unwrap();
        assert!(linalg::unitarity_residual(&m) < 1e-8);
    }
}
