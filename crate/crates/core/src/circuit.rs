//! Conversion between unitary networks and sequential quantum circuits.
//!
//! Circuit wires are qudits of dimension `d`, ordered big-endian: wire 0 is
//! the most significant digit of the circuit matrix index.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_matrix, DEFAULT_MEM_CAP};
use crate::gallery::build_universality_padding;
use crate::graph::{topological_sort, Network, TopoResult};
use crate::linalg::{self, CMat, ZERO};
use crate::tensor::{Direction, Tensor, DEFAULT_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    #[serde(with = "crate::io::cmat_serde")]
    pub matrix: CMat,
    pub wires: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumCircuit {
    pub d: usize,
    pub n_wires: usize,
    pub gates: Vec<Gate>,
    pub wire_site_map: Vec<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub swaps_inserted: usize,
    pub layers: usize,
    pub max_bond_dim: usize,
    pub equivalence_residual: f64,
}

impl QuantumCircuit {
    pub fn new(d: usize, n_wires: usize) -> Self {
        QuantumCircuit { d, n_wires, gates: Vec::new(), wire_site_map: (0..n_wires as i64).collect() }
    }

    /// Builds a circuit from gates listed in application order.
    pub fn from_gates(d: usize, n_wires: usize, gates: Vec<(CMat, Vec<usize>)>) -> Result<Self> {
        let mut c = QuantumCircuit::new(d, n_wires);
        for (m, w) in gates {
            c.push(m, w, None)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, matrix: CMat, wires: Vec<usize>, label: Option<String>) -> Result<()> {
        let g = Gate { matrix, wires, label };
        self.check_gate(&g)?;
        self.gates.push(g);
        Ok(())
    }

    fn check_gate(&self, g: &Gate) -> Result<()> {
        let mut seen = vec![false; self.n_wires];
        for &w in &g.wires {
            if w >= self.n_wires || seen[w] {
                return Err(Error::Invalid(format!("bad wire {w} in gate on {:?}", g.wires)));
            }
            seen[w] = true;
        }
        let dim = self.d.pow(g.wires.len() as u32);
        if g.matrix.nrows() != dim || g.matrix.ncols() != dim {
            return Err(Error::Dimension(format!(
                "gate on {} wires must be {dim}x{dim}, got {}x{}",
                g.wires.len(),
                g.matrix.nrows(),
                g.matrix.ncols()
            )));
        }
        let res = linalg::unitarity_residual(&g.matrix);
        if res > DEFAULT_TOL {
            return Err(Error::NotUnitary(res));
        }
        Ok(())
    }

    pub fn check(&self) -> Result<()> {
        if self.wire_site_map.len() != self.n_wires {
            return Err(Error::Invalid("wire_site_map length differs from n_wires".into()));
        }
        self.gates.iter().try_for_each(|g| self.check_gate(g))
    }

    pub fn dim(&self) -> usize {
        self.d.pow(self.n_wires as u32)
    }

    /// Dense circuit unitary, later gates multiplying from the left.
    pub fn matrix(&self) -> Result<CMat> {
        let dim = self.dim();
        if dim.saturating_mul(dim) > DEFAULT_MEM_CAP {
            return Err(Error::Budget { needed: dim.saturating_mul(dim), cap: DEFAULT_MEM_CAP });
        }
        let mut m = CMat::identity(dim, dim);
        for g in &self.gates {
            apply_gate(&mut m, &g.matrix, &g.wires, self.d, self.n_wires);
        }
        Ok(m)
    }

    /// Gates as (matrix, wires) pairs in application order.
    pub fn gate_list(&self) -> Vec<(CMat, Vec<usize>)> {
        self.gates.iter().map(|g| (g.matrix.clone(), g.wires.clone())).collect()
    }

    /// Number of gates touching each wire.
    pub fn gates_per_wire(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_wires];
        for g in &self.gates {
            for &w in &g.wires {
                c[w] += 1;
            }
        }
        c
    }
}

/// Left-multiplies the rows of `m` (a d^n-dim index) by `g` acting on `wires`.
pub fn apply_gate(m: &mut CMat, g: &CMat, wires: &[usize], d: usize, n: usize) {
    let total = d.pow(n as u32);
    let stride = |w: usize| d.pow((n - 1 - w) as u32);
    let k = g.nrows();
    let offsets: Vec<usize> = (0..k)
        .map(|j| {
            let mut rem = j;
            let mut off = 0;
            for &w in wires.iter().rev() {
                off += (rem % d) * stride(w);
                rem /= d;
            }
            off
        })
        .collect();
    let is_base = |x: usize| wires.iter().all(|&w| (x / stride(w)) % d == 0);
    let mut buf = vec![ZERO; k];
    for base in (0..total).filter(|&x| is_base(x)) {
        for c in 0..m.ncols() {
            for (j, &o) in offsets.iter().enumerate() {
                buf[j] = m[(base + o, c)];
            }
            for (r, &o) in offsets.iter().enumerate() {
                let mut acc = ZERO;
                for (j, b) in buf.iter().enumerate() {
                    acc += g[(r, j)] * b;
                }
                m[(base + o, c)] = acc;
            }
        }
    }
}

fn wires_of(dim: usize, d: usize) -> Result<usize> {
    let mut w = 0;
    let mut x = 1usize;
    while x < dim {
        x *= d;
        w += 1;
    }
    if x != dim {
        return Err(Error::Dimension(format!("leg dim {dim} is not a power of d = {d}")));
    }
    Ok(w)
}

fn sorted_order<T>(ext: &[T], site: impl Fn(&T) -> i64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ext.len()).collect();
    idx.sort_by_key(|&k| (site(&ext[k]), k));
    idx
}

/// Network matrix with sources and sinks each sorted by (site, declaration).
pub fn sorted_network_matrix(net: &Network) -> Result<CMat> {
    let m = evaluate_matrix(net)?;
    let cols = sorted_order(&net.sources, |e| e.site);
    let rows = sorted_order(&net.sinks, |e| e.site);
    let pc = linalg::permutation_matrix(&net.source_dims(), &cols);
    let pr = linalg::permutation_matrix(&net.sink_dims(), &rows);
    Ok(&pr * m * pc.adjoint())
}

/// Distance up to global phase between the network (externals sorted by site)
/// and the circuit unitary, relative to the circuit norm.
pub fn verify_equivalence(net: &Network, circuit: &QuantumCircuit) -> Result<f64> {
    if net.d != circuit.d {
        return Err(Error::Dimension(format!("network d = {} but circuit d = {}", net.d, circuit.d)));
    }
    let a = sorted_network_matrix(net)?;
    let b = circuit.matrix()?;
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("network is {:?}, circuit is {:?}", a.shape(), b.shape())));
    }
    Ok(linalg::phase_distance(&a, &b))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Producer {
    Source(usize),
    Out(usize, String),
}

type Token = (Producer, usize);

fn inversions(cur: &[Token], target: &[Token]) -> usize {
    let rank: HashMap<&Token, usize> = target.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let r: Vec<usize> = cur.iter().map(|t| rank[t]).collect();
    (0..r.len()).map(|i| (i + 1..r.len()).filter(|&j| r[i] > r[j]).count()).sum()
}

/// Rearranges `cur` into `target` by adjacent swaps (bubble sort, which uses
/// exactly the inversion count), emitting a SWAP gate per transposition.
fn route(cur: &mut [Token], target: &[Token], circ: &mut QuantumCircuit) -> Result<usize> {
    let rank: HashMap<Token, usize> = target.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    let mut swaps = 0;
    loop {
        let mut moved = false;
        for p in 0..cur.len().saturating_sub(1) {
            if rank[&cur[p]] > rank[&cur[p + 1]] {
                cur.swap(p, p + 1);
                circ.push(linalg::swap(circ.d), vec![p, p + 1], Some("swap".into()))?;
                swaps += 1;
                moved = true;
            }
        }
        if !moved {
            return Ok(swaps);
        }
    }
}

/// Target arrangement with `block` contiguous from position `s` and the other
/// tokens in their current relative order.
fn with_block(cur: &[Token], block: &[Token], s: usize) -> Vec<Token> {
    let mut rest: Vec<Token> = cur.iter().filter(|t| !block.contains(t)).cloned().collect();
    let tail = rest.split_off(s);
    rest.extend(block.iter().cloned());
    rest.extend(tail);
    rest
}

fn max_bond_dim(net: &Network) -> usize {
    net.edges.iter().filter_map(|e| net.leg_dim(&e.from, &e.from_leg).ok()).max().unwrap_or(1)
}

/// Emits each vertex as a gate in topological order, routing its input
/// wires together with adjacent swaps first. Wires start in source order
/// (sorted by site) and end in sink order (sorted by site). Open horizontal
/// legs of an OBC network are wires like any other.
pub fn un_to_circuit(net: &Network) -> Result<(QuantumCircuit, ConversionReport)> {
    if net.period.is_some() {
        return Err(Error::Invalid("periodic networks have no finite circuit form".into()));
    }
    let d = net.d;
    let order = match topological_sort(net) {
        TopoResult::Order(o) => o,
        TopoResult::Cycle(c) => return Err(Error::Cycle(c.join(" -> "))),
    };
    let mut producer: HashMap<(String, String), Producer> = HashMap::new();
    for (k, s) in net.sources.iter().enumerate() {
        producer.insert((s.vertex.clone(), s.leg.clone()), Producer::Source(k));
    }
    let idx = net.index_map();
    for e in &net.edges {
        producer.insert((e.to.clone(), e.to_leg.clone()), Producer::Out(idx[e.from.as_str()], e.from_leg.clone()));
    }
    let src_dims = net.source_dims();
    let src_order = sorted_order(&net.sources, |e| e.site);
    let mut cur: Vec<Token> = Vec::new();
    let mut wire_site_map = Vec::new();
    for &k in &src_order {
        for digit in 0..wires_of(src_dims[k], d)? {
            cur.push((Producer::Source(k), digit));
            wire_site_map.push(net.sources[k].site);
        }
    }
    let n = cur.len();
    let mut circ = QuantumCircuit { d, n_wires: n, gates: Vec::new(), wire_site_map };
    let mut swaps = 0;
    for id in &order {
        let vi = idx[id.as_str()];
        let t: &Tensor = &net.vertices[vi].tensor;
        let mut block: Vec<Token> = Vec::new();
        let mut out: Vec<Token> = Vec::new();
        for leg in t.legs() {
            let w = wires_of(leg.dim, d)?;
            match leg.direction {
                Direction::Incoming => {
                    let p = producer
                        .get(&(id.clone(), leg.id.clone()))
                        .ok_or_else(|| Error::Structure(format!("dangling incoming leg {id}.{}", leg.id)))?;
                    block.extend((0..w).map(|digit| (p.clone(), digit)));
                }
                Direction::Outgoing => out.extend((0..w).map(|digit| (Producer::Out(vi, leg.id.clone()), digit))),
            }
        }
        if block.len() != out.len() {
            return Err(Error::Dimension(format!("vertex {id} changes the wire count")));
        }
        let k = block.len();
        let start = (0..=n - k)
            .min_by_key(|&s| inversions(&cur, &with_block(&cur, &block, s)))
            .unwrap_or(0);
        let target = with_block(&cur, &block, start);
        swaps += route(&mut cur, &target, &mut circ)?;
        circ.push(t.matrix(), (start..start + k).collect(), Some(id.clone()))?;
        cur.splice(start..start + k, out);
    }
    let snk_dims = net.sink_dims();
    let mut target = Vec::new();
    for k in sorted_order(&net.sinks, |e| e.site) {
        let s = &net.sinks[k];
        let p = Producer::Out(net.vertex_index(&s.vertex)?, s.leg.clone());
        target.extend((0..wires_of(snk_dims[k], d)?).map(|digit| (p.clone(), digit)));
    }
    swaps += route(&mut cur, &target, &mut circ)?;
    let report = ConversionReport {
        swaps_inserted: swaps,
        layers: circuit_depth(&circ),
        max_bond_dim: max_bond_dim(net),
        equivalence_residual: verify_equivalence(net, &circ)?,
    };
    Ok((circ, report))
}

/// As-soon-as-possible depth of the circuit.
pub fn circuit_depth(c: &QuantumCircuit) -> usize {
    let mut level = vec![0usize; c.n_wires];
    let mut depth = 0;
    for g in &c.gates {
        let l = g.wires.iter().map(|&w| level[w]).max().unwrap_or(0) + 1;
        for &w in &g.wires {
            level[w] = l;
        }
        depth = depth.max(l);
    }
    depth
}

/// Replaces every gate by its bilayer padding network and stacks the blocks
/// column by column. Each gate must act on a contiguous window of wires; the
/// wires' sites must increase with the wire index.
pub fn circuit_to_un(circ: &QuantumCircuit) -> Result<(Network, ConversionReport)> {
    circ.check()?;
    if circ.wire_site_map.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("wire_site_map must be strictly increasing".into()));
    }
    let d = circ.d;
    let mut net = Network::new(d);
    let mut height = vec![0i64; circ.n_wires];
    let mut open: Vec<Option<(String, String)>> = vec![None; circ.n_wires];
    for (gi, g) in circ.gates.iter().enumerate() {
        if g.wires.is_empty() {
            return Err(Error::Invalid(format!("gate {gi} acts on no wires")));
        }
        let mut sorted = g.wires.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Invalid(format!(
                "gate {gi} acts on non-contiguous wires {:?}; route it with swaps first",
                g.wires
            )));
        }
        let perm: Vec<usize> = sorted.iter().map(|w| g.wires.iter().position(|x| x == w).unwrap()).collect();
        let m = linalg::permute_operator(&g.matrix, &vec![d; perm.len()], &perm);
        let block = build_universality_padding(&m, d, sorted.len())?;
        if block.has_horizontal_externals() {
            return Err(Error::Structure("padding block has open horizontal legs".into()));
        }
        let a = sorted[0];
        let name = |v: &str| format!("g{gi}.{v}");
        for v in &block.vertices {
            let wire = a + (v.site - 1) as usize;
            net.add_vertex(name(&v.id), v.tensor.clone(), circ.wire_site_map[wire], height[wire]);
            height[wire] += 1;
        }
        for e in &block.edges {
            net.connect(&name(&e.from), &e.from_leg, &name(&e.to), &e.to_leg);
        }
        for s in &block.sources {
            let wire = a + (s.site - 1) as usize;
            match open[wire].take() {
                Some((v, leg)) => net.connect(&v, &leg, &name(&s.vertex), &s.leg),
                None => net.source(&name(&s.vertex), &s.leg, circ.wire_site_map[wire]),
            };
        }
        for s in &block.sinks {
            let wire = a + (s.site - 1) as usize;
            open[wire] = Some((name(&s.vertex), s.leg.clone()));
        }
    }
    for (wire, slot) in open.iter().enumerate() {
        let site = circ.wire_site_map[wire];
        match slot {
            Some((v, leg)) => {
                net.sink(v, leg, site);
            }
            None => {
                let id = format!("w{wire}");
                net.add_vertex(&id, Tensor::identity(&[("s", "s_out", d)], &id), site, 0);
                net.source(&id, "s", site).sink(&id, "s_out", site);
                height[wire] = 1;
            }
        }
    }
    let report = ConversionReport {
        swaps_inserted: 0,
        layers: height.iter().copied().max().unwrap_or(0) as usize,
        max_bond_dim: max_bond_dim(&net),
        equivalence_residual: verify_equivalence(&net, circ)?,
    };
    Ok((net, report))
}

/// Seeded random SQC: Haar gates on random contiguous windows of width
/// 1..=max_width.
pub fn random_sqc(n_wires: usize, n_gates: usize, max_width: usize, d: usize, seed: u64) -> Result<QuantumCircuit> {
    use rand::Rng;
    if n_wires == 0 || max_width == 0 {
        return Err(Error::Invalid("need at least one wire and width ≥ 1".into()));
    }
    let mut r = linalg::rng(seed);
    let mut c = QuantumCircuit::new(d, n_wires);
    for _ in 0..n_gates {
        let w = r.random_range(1..=max_width.min(n_wires));
        let a = r.random_range(0..=n_wires - w);
        let m = linalg::haar_unitary(d.pow(w as u32), &mut r);
        c.push(m, (a..a + w).collect(), None)?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{net_flow, FlowValue, NetFlow};
    use crate::gallery::{self, ShiftVariant};
    use crate::graph::validate;

    #[test]
    fn apply_gate_matches_kron_embedding() {
        let mut r = linalg::rng(3);
        let g = linalg::haar_unitary(4, &mut r);
        let mut m = CMat::identity(8, 8);
        apply_gate(&mut m, &g, &[1, 2], 2, 3);
        let want = linalg::kron(&CMat::identity(2, 2), &g);
        assert!(linalg::frobenius(&(m - want)) < 1e-12);
        // Reversed wire order equals conjugation by SWAP.
        let mut m = CMat::identity(4, 4);
        apply_gate(&mut m, &g, &[1, 0], 2, 2);
        let s = linalg::swap(2);
        assert!(linalg::frobenius(&(m - &s * &g * &s)) < 1e-12);
    }

    #[test]
    fn dag_example_emits_a_b_c() {
        let net = gallery::build_dag_circuit_example(5).unwrap();
        let (c, rep) = un_to_circuit(&net).unwrap();
        let labels: Vec<&str> =
            c.gates.iter().filter_map(|g| g.label.as_deref()).filter(|l| *l != "swap").collect();
        assert_eq!(labels, ["A", "B", "C"]);
        assert_eq!(c.gates.len(), net.vertices.len() + rep.swaps_inserted);
        assert!(rep.equivalence_residual < 1e-10);
    }

    #[test]
    fn identity_bilayer_gives_identity_gates() {
        let net = gallery::build_identity_bilayer(3, 2, 2).unwrap();
        let (c, rep) = un_to_circuit(&net).unwrap();
        assert_eq!(rep.equivalence_residual, 0.0);
        let u = c.matrix().unwrap();
        let gates_ok = c.gates.iter().all(|g| g.matrix.iter().all(|z| z.im == 0.0 && (z.re == 0.0 || z.re == 1.0)));
        assert!(gates_ok);
        assert_eq!(u.nrows(), 1 << c.n_wires);
    }

    #[test]
    fn haar_bilayer_matches_dense() {
        let net = gallery::build_haar_bilayer(4, 2, 2, 2, 11).unwrap();
        let (c, rep) = un_to_circuit(&net).unwrap();
        let dense = sorted_network_matrix(&net).unwrap();
        assert!(linalg::phase_distance(&c.matrix().unwrap(), &dense) < 1e-9);
        assert!(rep.equivalence_residual < 1e-9);
        assert_eq!(c.gates.len(), net.vertices.len() + rep.swaps_inserted);
    }

    #[test]
    fn rejects_cycles_periods_and_odd_dims() {
        assert!(matches!(un_to_circuit(&gallery::build_loop_example(1).unwrap()), Err(Error::Cycle(_))));
        let pbc = gallery::build_shift(4, 2, ShiftVariant::PbcWrapped).unwrap();
        assert!(un_to_circuit(&pbc).is_err());
        let mut net = Network::new(2);
        net.add_vertex("X", Tensor::identity(&[("a", "b", 3)], "X"), 0, 0);
        net.source("X", "a", 0).sink("X", "b", 0);
        assert!(matches!(un_to_circuit(&net), Err(Error::Dimension(_))));
    }

    #[test]
    fn single_gate_block() {
        let mut r = linalg::rng(1);
        let c = QuantumCircuit::from_gates(2, 2, vec![(linalg::haar_unitary(4, &mut r), vec![0, 1])]).unwrap();
        let (net, rep) = circuit_to_un(&c).unwrap();
        assert_eq!(net.vertices.len(), 4);
        assert!(rep.max_bond_dim <= 4);
        assert_eq!(rep.layers, 2);
        assert!(rep.equivalence_residual < 1e-10);
    }

    #[test]
    fn staircase_gives_four_layers() {
        let mut r = linalg::rng(2);
        let gates = (0..3).map(|k| (linalg::haar_unitary(4, &mut r), vec![k, k + 1])).collect();
        let c = QuantumCircuit::from_gates(2, 4, gates).unwrap();
        let (net, rep) = circuit_to_un(&c).unwrap();
        assert_eq!(rep.layers, 4);
        assert!(rep.equivalence_residual < 1e-8);
        let diag = validate(&net);
        assert!(diag.is_valid_unitary_network() && diag.dag);
        let want = c.matrix().unwrap();
        let got = sorted_network_matrix(&net).unwrap();
        assert!(linalg::phase_distance(&got, &want) < 1e-8);
    }

    #[test]
    fn swap_staircase_has_zero_flow_and_equals_shift() {
        let n = 4;
        let c = QuantumCircuit::from_gates(2, n, gallery::stacked_gate_sequence(n, &linalg::swap(2))).unwrap();
        let (net, _) = circuit_to_un(&c).unwrap();
        assert_eq!(net_flow(&net), NetFlow::Uniform { value: FlowValue::zero() });
        let shift = gallery::build_shift(n, 2, ShiftVariant::PbcWrapped).unwrap();
        let mut c = c;
        c.wire_site_map = (1..=n as i64).collect();
        assert!(verify_equivalence(&shift, &c).unwrap() < 1e-8);
    }

    #[test]
    fn round_trip_small() {
        for seed in 0..5 {
            let c = random_sqc(5, 6, 3, 2, seed).unwrap();
            let (net, _) = circuit_to_un(&c).unwrap();
            let (c2, rep) = un_to_circuit(&net).unwrap();
            assert!(rep.equivalence_residual < 1e-8);
            assert!(linalg::phase_distance(&c2.matrix().unwrap(), &c.matrix().unwrap()) < 1e-8);
        }
    }

    #[test]
    fn non_contiguous_gate_is_flagged() {
        let c = QuantumCircuit::from_gates(2, 3, vec![(linalg::cnot(), vec![0, 2])]).unwrap();
        assert!(matches!(circuit_to_un(&c), Err(Error::Invalid(_))));
    }
}
