//! Network assembly and graph queries: validation, topological order, causal
//! cones, distances, sub-networks and canonical-form checks.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use petgraph::algo::{dijkstra, tarjan_scc};
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::{Bfs, EdgeRef, Reversed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{local_unitarity_residual, Direction, Tensor, DEFAULT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// What an external leg is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExternalKind {
    /// A physical site of the lattice.
    #[default]
    Physical,
    /// A dangling horizontal bond at the open left/right end of a layer.
    Horizontal { side: Side, row: usize },
    /// A parent bond cut open when extracting a sub-network.
    Bond,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct External {
    pub vertex: String,
    pub leg: String,
    pub site: i64,
    #[serde(default, skip_serializing_if = "is_physical")]
    pub boundary: ExternalKind,
}

fn is_physical(k: &ExternalKind) -> bool {
    *k == ExternalKind::Physical
}

impl External {
    pub fn physical(vertex: &str, leg: &str, site: i64) -> Self {
        External { vertex: vertex.into(), leg: leg.into(), site, boundary: ExternalKind::Physical }
    }

    pub fn is_physical(&self) -> bool {
        self.boundary == ExternalKind::Physical
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub id: String,
    pub tensor: Tensor,
    pub site: i64,
    pub layer: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub from_leg: String,
    pub to: String,
    pub to_leg: String,
    pub length: f64,
    /// Signed lattice displacement when it differs from the site difference
    /// (bonds that wrap around a periodic lattice).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Network {
    pub d: usize,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub sources: Vec<External>,
    pub sinks: Vec<External>,
    /// Lattice period for networks wrapped onto a ring.
    pub period: Option<i64>,
}

/// Node of the full graph: internal vertices plus explicit sources and sinks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Vertex(usize),
    Source(usize),
    Sink(usize),
}

impl Network {
    pub fn new(d: usize) -> Self {
        Network { d, ..Default::default() }
    }

    pub fn add_vertex(&mut self, id: impl Into<String>, tensor: Tensor, site: i64, layer: i64) -> &mut Self {
        self.vertices.push(Vertex { id: id.into(), tensor, site, layer });
        self
    }

    /// Connects `from.from_leg → to.to_leg` with the bilayer default length
    /// (|Δsite| for horizontal bonds, 0 for vertical ones).
    pub fn connect(&mut self, from: &str, from_leg: &str, to: &str, to_leg: &str) -> &mut Self {
        let length = match (self.vertex(from), self.vertex(to)) {
            (Some(a), Some(b)) => (a.site - b.site).abs() as f64,
            _ => 0.0,
        };
        self.edges.push(Edge {
            from: from.into(),
            from_leg: from_leg.into(),
            to: to.into(),
            to_leg: to_leg.into(),
            length,
            hop: None,
        });
        self
    }

    pub fn source(&mut self, vertex: &str, leg: &str, site: i64) -> &mut Self {
        self.sources.push(External::physical(vertex, leg, site));
        self
    }

    pub fn sink(&mut self, vertex: &str, leg: &str, site: i64) -> &mut Self {
        self.sinks.push(External::physical(vertex, leg, site));
        self
    }

    pub fn horizontal_source(&mut self, vertex: &str, leg: &str, side: Side, row: usize) -> &mut Self {
        let site = self.vertex(vertex).map(|v| v.site).unwrap_or(0);
        self.sources.push(External {
            vertex: vertex.into(),
            leg: leg.into(),
            site,
            boundary: ExternalKind::Horizontal { side, row },
        });
        self
    }

    pub fn horizontal_sink(&mut self, vertex: &str, leg: &str, side: Side, row: usize) -> &mut Self {
        let site = self.vertex(vertex).map(|v| v.site).unwrap_or(0);
        self.sinks.push(External {
            vertex: vertex.into(),
            leg: leg.into(),
            site,
            boundary: ExternalKind::Horizontal { side, row },
        });
        self
    }

    pub fn vertex(&self, id: &str) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.id == id)
    }

    pub fn vertex_index(&self, id: &str) -> Result<usize> {
        self.vertices
            .iter()
            .position(|v| v.id == id)
            .ok_or_else(|| Error::UnknownVertex(id.to_string()))
    }

    pub fn index_map(&self) -> HashMap<&str, usize> {
        self.vertices.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect()
    }

    pub fn leg_dim(&self, vertex: &str, leg: &str) -> Result<usize> {
        let v = self.vertex(vertex).ok_or_else(|| Error::UnknownVertex(vertex.into()))?;
        Ok(v.tensor.leg(leg)?.dim)
    }

    pub fn source_dims(&self) -> Vec<usize> {
        self.sources.iter().map(|e| self.leg_dim(&e.vertex, &e.leg).unwrap_or(0)).collect()
    }

    pub fn sink_dims(&self) -> Vec<usize> {
        self.sinks.iter().map(|e| self.leg_dim(&e.vertex, &e.leg).unwrap_or(0)).collect()
    }

    pub fn has_horizontal_externals(&self) -> bool {
        self.sources.iter().chain(&self.sinks).any(|e| matches!(e.boundary, ExternalKind::Horizontal { .. }))
    }

    /// Signed lattice displacement of an edge.
    pub fn edge_hop(&self, e: &Edge) -> i64 {
        if let Some(h) = e.hop {
            return h;
        }
        match (self.vertex(&e.from), self.vertex(&e.to)) {
            (Some(a), Some(b)) => b.site - a.site,
            _ => 0,
        }
    }

    /// Physical sites touched by sources or sinks, sorted.
    pub fn sites(&self) -> Vec<i64> {
        let s: BTreeSet<i64> =
            self.sources.iter().chain(&self.sinks).filter(|e| e.is_physical()).map(|e| e.site).collect();
        s.into_iter().collect()
    }

    /// The full graph with explicit source and sink nodes. Edge weights are
    /// edge lengths; external edges have length 0.
    pub fn digraph(&self) -> (DiGraph<Node, f64>, Vec<NodeIndex>, Vec<NodeIndex>, Vec<NodeIndex>) {
        let mut g = DiGraph::new();
        let vs: Vec<NodeIndex> = (0..self.vertices.len()).map(|i| g.add_node(Node::Vertex(i))).collect();
        let srcs: Vec<NodeIndex> = (0..self.sources.len()).map(|i| g.add_node(Node::Source(i))).collect();
        let snks: Vec<NodeIndex> = (0..self.sinks.len()).map(|i| g.add_node(Node::Sink(i))).collect();
        let idx = self.index_map();
        for e in &self.edges {
            if let (Some(&a), Some(&b)) = (idx.get(e.from.as_str()), idx.get(e.to.as_str())) {
                g.add_edge(vs[a], vs[b], e.length);
            }
        }
        for (k, s) in self.sources.iter().enumerate() {
            if let Some(&v) = idx.get(s.vertex.as_str()) {
                g.add_edge(srcs[k], vs[v], 0.0);
            }
        }
        for (k, s) in self.sinks.iter().enumerate() {
            if let Some(&v) = idx.get(s.vertex.as_str()) {
                g.add_edge(vs[v], snks[k], 0.0);
            }
        }
        (g, vs, srcs, snks)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexResidual {
    pub vertex: String,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub structural: Vec<String>,
    pub residuals: Vec<VertexResidual>,
    pub non_unitary: Vec<String>,
    pub dag: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle: Option<Vec<String>>,
}

impl Diagnostics {
    pub fn is_structurally_valid(&self) -> bool {
        self.structural.is_empty()
    }

    pub fn is_valid_unitary_network(&self) -> bool {
        self.structural.is_empty() && self.non_unitary.is_empty() && self.dag
    }
}

/// Lists every violated structural invariant, per-vertex unitarity residuals
/// and whether the graph is acyclic. Never fails.
pub fn validate(net: &Network) -> Diagnostics {
    validate_with_tol(net, DEFAULT_TOL)
}

pub fn validate_with_tol(net: &Network, tol: f64) -> Diagnostics {
    let mut structural = Vec::new();
    let mut seen_ids = HashSet::new();
    for v in &net.vertices {
        if !seen_ids.insert(v.id.as_str()) {
            structural.push(format!("duplicate vertex id `{}`", v.id));
        }
    }
    let mut bound: HashMap<(String, String), usize> = HashMap::new();
    let mut check_leg = |vertex: &str, leg: &str, want: Direction, what: &str, structural: &mut Vec<String>| -> Option<usize> {
        let Some(v) = net.vertex(vertex) else {
            structural.push(format!("{what}: unknown vertex `{vertex}`"));
            return None;
        };
        let Ok(l) = v.tensor.leg(leg) else {
            structural.push(format!("{what}: vertex `{vertex}` has no leg `{leg}`"));
            return None;
        };
        if l.direction != want {
            structural.push(format!(
                "{what}: leg `{vertex}.{leg}` is {:?}, expected {:?}",
                l.direction, want
            ));
        }
        *bound.entry((vertex.to_string(), leg.to_string())).or_insert(0) += 1;
        Some(l.dim)
    };
    for e in &net.edges {
        let what = format!("edge {}.{} -> {}.{}", e.from, e.from_leg, e.to, e.to_leg);
        let a = check_leg(&e.from, &e.from_leg, Direction::Outgoing, &what, &mut structural);
        let b = check_leg(&e.to, &e.to_leg, Direction::Incoming, &what, &mut structural);
        if let (Some(a), Some(b)) = (a, b) {
            if a != b {
                structural.push(format!(
                    "{what}: dim mismatch between `{}.{}` (dim {a}) and `{}.{}` (dim {b})",
                    e.from, e.from_leg, e.to, e.to_leg
                ));
            }
        }
        if e.length < 0.0 || e.length.is_nan() {
            structural.push(format!("{what}: negative length"));
        }
    }
    for s in &net.sources {
        let what = format!("source {}.{}", s.vertex, s.leg);
        check_leg(&s.vertex, &s.leg, Direction::Incoming, &what, &mut structural);
    }
    for s in &net.sinks {
        let what = format!("sink {}.{}", s.vertex, s.leg);
        check_leg(&s.vertex, &s.leg, Direction::Outgoing, &what, &mut structural);
    }
    for v in &net.vertices {
        for l in v.tensor.legs() {
            match bound.get(&(v.id.clone(), l.id.clone())) {
                None => structural.push(format!("leg `{}.{}` is not bound", v.id, l.id)),
                Some(&n) if n > 1 => structural.push(format!("leg `{}.{}` is bound {n} times", v.id, l.id)),
                _ => {}
            }
        }
    }
    let mut residuals = Vec::new();
    let mut non_unitary = Vec::new();
    for v in &net.vertices {
        let r = local_unitarity_residual(&v.tensor);
        if !(r <= tol) {
            non_unitary.push(v.id.clone());
        }
        residuals.push(VertexResidual { vertex: v.id.clone(), residual: r });
    }
    let (dag, cycle) = match topological_sort(net) {
        TopoResult::Order(_) => (true, None),
        TopoResult::Cycle(c) => (false, Some(c)),
    };
    Diagnostics { structural, residuals, non_unitary, dag, cycle }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TopoResult {
    Order(Vec<String>),
    /// One explicit directed cycle, listed along its edges.
    Cycle(Vec<String>),
}

/// Kahn's algorithm, always releasing the earliest-declared ready vertex, so
/// the order is deterministic and follows declaration order where possible.
pub fn topological_sort(net: &Network) -> TopoResult {
    let n = net.vertices.len();
    let idx = net.index_map();
    let mut indeg = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &net.edges {
        if let (Some(&a), Some(&b)) = (idx.get(e.from.as_str()), idx.get(e.to.as_str())) {
            succ[a].push(b);
            indeg[b] += 1;
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                heap.push(Reverse(w));
            }
        }
    }
    if order.len() == n {
        return TopoResult::Order(order.into_iter().map(|i| net.vertices[i].id.clone()).collect());
    }
    TopoResult::Cycle(find_cycle(net, &succ).into_iter().map(|i| net.vertices[i].id.clone()).collect())
}

fn find_cycle(net: &Network, succ: &[Vec<usize>]) -> Vec<usize> {
    let mut g: DiGraph<usize, ()> = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..net.vertices.len()).map(|i| g.add_node(i)).collect();
    for (a, ws) in succ.iter().enumerate() {
        for &b in ws {
            g.add_edge(nodes[a], nodes[b], ());
        }
    }
    for comp in tarjan_scc(&g) {
        let members: HashSet<usize> = comp.iter().map(|n| g[*n]).collect();
        let start = *members.iter().min().unwrap();
        if members.len() == 1 && !succ[start].contains(&start) {
            continue;
        }
        // Walk inside the component until a vertex repeats.
        let mut path = vec![start];
        let mut pos: HashMap<usize, usize> = HashMap::from([(start, 0)]);
        let mut cur = start;
        loop {
            let next = *succ[cur].iter().filter(|w| members.contains(w)).min().unwrap();
            if let Some(&p) = pos.get(&next) {
                return path[p..].to_vec();
            }
            pos.insert(next, path.len());
            path.push(next);
            cur = next;
        }
    }
    Vec::new()
}

/// A sub-network plus its provenance in the parent.
#[derive(Clone, Debug, PartialEq)]
pub struct SubNetwork {
    pub net: Network,
    pub parent_vertices: Vec<String>,
    /// Indices of parent edges cut open into external legs.
    pub promoted_edges: Vec<usize>,
}

/// Keeps `vertex_set` (in parent declaration order); bonds leaving the set
/// become sources/sinks tagged [`ExternalKind::Bond`].
pub fn extract_subnetwork(net: &Network, vertex_set: &[&str]) -> Result<SubNetwork> {
    for id in vertex_set {
        net.vertex_index(id)?;
    }
    let keep: HashSet<&str> = vertex_set.iter().copied().collect();
    let mut sub = Network::new(net.d);
    for v in &net.vertices {
        if keep.contains(v.id.as_str()) {
            sub.vertices.push(v.clone());
        }
    }
    let mut promoted = Vec::new();
    for (k, e) in net.edges.iter().enumerate() {
        let a = keep.contains(e.from.as_str());
        let b = keep.contains(e.to.as_str());
        if a && b {
            sub.edges.push(e.clone());
        } else if b {
            let site = net.vertex(&e.to).map(|v| v.site).unwrap_or(0);
            sub.sources.push(External { vertex: e.to.clone(), leg: e.to_leg.clone(), site, boundary: ExternalKind::Bond });
            promoted.push(k);
        } else if a {
            let site = net.vertex(&e.from).map(|v| v.site).unwrap_or(0);
            sub.sinks.push(External { vertex: e.from.clone(), leg: e.from_leg.clone(), site, boundary: ExternalKind::Bond });
            promoted.push(k);
        }
    }
    for s in &net.sources {
        if keep.contains(s.vertex.as_str()) {
            sub.sources.push(s.clone());
        }
    }
    for s in &net.sinks {
        if keep.contains(s.vertex.as_str()) {
            sub.sinks.push(s.clone());
        }
    }
    let parent_vertices = sub.vertices.iter().map(|v| v.id.clone()).collect();
    Ok(SubNetwork { net: sub, parent_vertices, promoted_edges: promoted })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CausalCone {
    pub cone: SubNetwork,
    pub base: BTreeSet<i64>,
    /// Sinks (by index in the parent) reached from the apex.
    pub sinks: Vec<usize>,
}

/// Forward-reachable sub-network from `apex`; the base is the set of sink
/// sites inside it.
pub fn causal_cone(net: &Network, apex: Node) -> Result<CausalCone> {
    let (g, vs, srcs, snks) = net.digraph();
    let start = match apex {
        Node::Vertex(i) => *vs.get(i).ok_or_else(|| Error::UnknownVertex(format!("#{i}")))?,
        Node::Source(i) => *srcs.get(i).ok_or_else(|| Error::UnknownVertex(format!("source #{i}")))?,
        Node::Sink(i) => *snks.get(i).ok_or_else(|| Error::UnknownVertex(format!("sink #{i}")))?,
    };
    let mut reached = HashSet::new();
    let mut bfs = Bfs::new(&g, start);
    while let Some(n) = bfs.next(&g) {
        reached.insert(g[n]);
    }
    let ids: Vec<&str> = net
        .vertices
        .iter()
        .enumerate()
        .filter(|(i, _)| reached.contains(&Node::Vertex(*i)))
        .map(|(_, v)| v.id.as_str())
        .collect();
    let cone = extract_subnetwork(net, &ids)?;
    let sinks: Vec<usize> = (0..net.sinks.len()).filter(|k| reached.contains(&Node::Sink(*k))).collect();
    let base = sinks.iter().map(|&k| net.sinks[k].site).collect();
    Ok(CausalCone { cone, base, sinks })
}

pub fn causal_cone_of_vertex(net: &Network, id: &str) -> Result<CausalCone> {
    causal_cone(net, Node::Vertex(net.vertex_index(id)?))
}

/// Weighted shortest directed path length; +∞ when `t` is unreachable.
pub fn network_distance(net: &Network, s: &str, t: &str) -> Result<f64> {
    let a = net.vertex_index(s)?;
    let b = net.vertex_index(t)?;
    let (g, vs, _, _) = net.digraph();
    let dist = dijkstra(&g, vs[a], Some(vs[b]), |e| *e.weight());
    Ok(dist.get(&vs[b]).copied().unwrap_or(f64::INFINITY))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalCheck {
    pub canonical: bool,
    pub witness: Option<String>,
}

/// True iff the network is a DAG and no vertex outside the center lies on a
/// directed path between two center vertices.
pub fn canonical_form_check(net: &Network, center: &[&str]) -> Result<CanonicalCheck> {
    let center_idx: Vec<usize> = center.iter().map(|c| net.vertex_index(c)).collect::<Result<_>>()?;
    if let TopoResult::Cycle(c) = topological_sort(net) {
        return Ok(CanonicalCheck { canonical: false, witness: c.first().cloned() });
    }
    let (g, vs, _, _) = net.digraph();
    let mut down = HashSet::new();
    let mut up = HashSet::new();
    for &c in &center_idx {
        let mut bfs = Bfs::new(&g, vs[c]);
        while let Some(n) = bfs.next(&g) {
            down.insert(n);
        }
        let rg = Reversed(&g);
        let mut bfs = Bfs::new(rg, vs[c]);
        while let Some(n) = bfs.next(rg) {
            up.insert(n);
        }
    }
    let inside: HashSet<usize> = center_idx.iter().copied().collect();
    for (i, v) in net.vertices.iter().enumerate() {
        if !inside.contains(&i) && down.contains(&vs[i]) && up.contains(&vs[i]) {
            return Ok(CanonicalCheck { canonical: false, witness: Some(v.id.clone()) });
        }
    }
    Ok(CanonicalCheck { canonical: true, witness: None })
}

/// Successor lists of internal vertices (by index), for algorithms that do
/// not need the external nodes.
pub fn successors(net: &Network) -> Vec<Vec<usize>> {
    let (g, vs, _, _) = net.digraph();
    vs.iter()
        .map(|&v| {
            g.edges(v)
                .filter_map(|e| match g[e.target()] {
                    Node::Vertex(j) => Some(j),
                    _ => None,
                })
                .collect()
        })
        .collect()
}

/// Contracts each right-side horizontal sink with the left-side horizontal
/// source of the same row (and vice versa), closing the chain into a ring.
/// Physical sites must form a contiguous range; the period is its length.
pub fn wrap_horizontal(net: &Network) -> Result<Network> {
    let sites = net.sites();
    let (Some(&lo), Some(&hi)) = (sites.first(), sites.last()) else {
        return Err(Error::Invalid("network has no physical sites".into()));
    };
    let period = hi - lo + 1;
    let mut out = net.clone();
    out.sources.retain(|e| e.is_physical() || e.boundary == ExternalKind::Bond);
    out.sinks.retain(|e| e.is_physical() || e.boundary == ExternalKind::Bond);
    let mut used = HashSet::new();
    for snk in &net.sinks {
        let ExternalKind::Horizontal { side, row } = snk.boundary else { continue };
        let want = match side {
            Side::Right => Side::Left,
            Side::Left => Side::Right,
        };
        let (k, src) = net
            .sources
            .iter()
            .enumerate()
            .find(|(_, e)| e.boundary == ExternalKind::Horizontal { side: want, row })
            .ok_or_else(|| Error::Structure(format!("no {want:?} horizontal source for row {row}")))?;
        used.insert(k);
        let a = net.leg_dim(&snk.vertex, &snk.leg)?;
        let b = net.leg_dim(&src.vertex, &src.leg)?;
        if a != b {
            return Err(Error::Dimension(format!(
                "row {row}: outgoing horizontal leg has dim {a}, incoming has dim {b}"
            )));
        }
        let from_site = net.vertex(&snk.vertex).map(|v| v.site).unwrap_or(snk.site);
        let to_site = net.vertex(&src.vertex).map(|v| v.site).unwrap_or(src.site);
        let hop = match side {
            Side::Right => period - (from_site - to_site),
            Side::Left => -(period - (to_site - from_site)),
        };
        out.edges.push(Edge {
            from: snk.vertex.clone(),
            from_leg: snk.leg.clone(),
            to: src.vertex.clone(),
            to_leg: src.leg.clone(),
            length: hop.unsigned_abs() as f64,
            hop: Some(hop),
        });
    }
    if let Some((_, e)) = net
        .sources
        .iter()
        .enumerate()
        .find(|(k, e)| matches!(e.boundary, ExternalKind::Horizontal { .. }) && !used.contains(k))
    {
        return Err(Error::Structure(format!("horizontal source `{}.{}` has no partner", e.vertex, e.leg)));
    }
    out.period = Some(period);
    Ok(out)
}
