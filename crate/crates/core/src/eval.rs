//! Exact network evaluation, Heisenberg transport, reduced unitaries and
//! product-state application.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{topological_sort, validate, ExternalKind, Network, SubNetwork, TopoResult};
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::ops::DenseOperator;
use crate::tensor::{contract, Direction, LegSpec, Tensor};

pub const DEFAULT_MEM_CAP: usize = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Fold tensors in topological (or declaration) order.
    #[default]
    Topological,
    /// Repeatedly contract the pair with the smallest result.
    Greedy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub strategy: Strategy,
    pub mem_cap: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { strategy: Strategy::Topological, mem_cap: DEFAULT_MEM_CAP }
    }
}

impl EvalOptions {
    pub fn with_strategy(strategy: Strategy) -> Self {
        EvalOptions { strategy, ..Default::default() }
    }
}

fn source_name(k: usize) -> String {
    format!("in{k}")
}

fn sink_name(k: usize) -> String {
    format!("out{k}")
}

/// Relabels every vertex leg by what it is bound to: `e{k}` for edge k,
/// `in{k}`/`out{k}` for externals.
fn relabeled_tensors(net: &Network) -> Result<Vec<Tensor>> {
    let idx = net.index_map();
    let mut names: Vec<HashMap<String, String>> = vec![HashMap::new(); net.vertices.len()];
    let mut self_loops: Vec<Vec<(String, String)>> = vec![Vec::new(); net.vertices.len()];
    for (k, e) in net.edges.iter().enumerate() {
        let a = *idx.get(e.from.as_str()).ok_or_else(|| Error::UnknownVertex(e.from.clone()))?;
        let b = *idx.get(e.to.as_str()).ok_or_else(|| Error::UnknownVertex(e.to.clone()))?;
        if a == b {
            names[a].insert(e.from_leg.clone(), format!("e{k}>"));
            names[b].insert(e.to_leg.clone(), format!("e{k}<"));
            self_loops[a].push((format!("e{k}>"), format!("e{k}<")));
        } else {
            names[a].insert(e.from_leg.clone(), format!("e{k}"));
            names[b].insert(e.to_leg.clone(), format!("e{k}"));
        }
    }
    for (k, s) in net.sources.iter().enumerate() {
        let a = *idx.get(s.vertex.as_str()).ok_or_else(|| Error::UnknownVertex(s.vertex.clone()))?;
        names[a].insert(s.leg.clone(), source_name(k));
    }
    for (k, s) in net.sinks.iter().enumerate() {
        let a = *idx.get(s.vertex.as_str()).ok_or_else(|| Error::UnknownVertex(s.vertex.clone()))?;
        names[a].insert(s.leg.clone(), sink_name(k));
    }
    let mut out = Vec::new();
    for (i, v) in net.vertices.iter().enumerate() {
        let legs: Vec<LegSpec> = v
            .tensor
            .legs()
            .iter()
            .map(|l| LegSpec { id: names[i][&l.id].clone(), dim: l.dim, direction: l.direction })
            .collect();
        let mut t = Tensor::new(legs, v.tensor.data().to_vec(), v.id.clone())?;
        for (a, b) in &self_loops[i] {
            t = t.trace_pair(a, b)?;
        }
        out.push(t);
    }
    Ok(out)
}

fn shared_names(a: &Tensor, b: &Tensor) -> Vec<String> {
    a.legs().iter().filter(|l| b.legs().iter().any(|m| m.id == l.id)).map(|l| l.id.clone()).collect()
}

fn result_size(a: &Tensor, b: &Tensor, shared: &[String]) -> usize {
    let fa: usize = a.legs().iter().filter(|l| !shared.contains(&l.id)).map(|l| l.dim).product();
    let fb: usize = b.legs().iter().filter(|l| !shared.contains(&l.id)).map(|l| l.dim).product();
    fa.saturating_mul(fb)
}

fn contract_checked(a: &Tensor, b: &Tensor, cap: usize) -> Result<Tensor> {
    let shared = shared_names(a, b);
    let needed = result_size(a, b, &shared);
    if needed > cap {
        return Err(Error::Budget { needed, cap });
    }
    let pairs: Vec<(&str, &str)> = shared.iter().map(|s| (s.as_str(), s.as_str())).collect();
    contract(a, b, &pairs)
}

/// Full contraction. The result carries incoming legs `in0..` (sources in
/// order) followed by outgoing legs `out0..` (sinks in order), so its matrix
/// has rows indexed by sinks and columns by sources.
pub fn evaluate(net: &Network, opts: EvalOptions) -> Result<Tensor> {
    let diag = validate(net);
    if !diag.structural.is_empty() {
        return Err(Error::Structure(diag.structural.join("; ")));
    }
    let mut tensors = relabeled_tensors(net)?;
    let mut acc = if tensors.is_empty() {
        Tensor::scalar(ONE)
    } else {
        match opts.strategy {
            Strategy::Topological => {
                let order: Vec<usize> = match topological_sort(net) {
                    TopoResult::Order(o) => o.iter().map(|id| net.vertex_index(id).unwrap()).collect(),
                    TopoResult::Cycle(_) => (0..tensors.len()).collect(),
                };
                let mut acc = tensors[order[0]].clone();
                for &i in &order[1..] {
                    acc = contract_checked(&acc, &tensors[i], opts.mem_cap)?;
                }
                acc
            }
            Strategy::Greedy => {
                while tensors.len() > 1 {
                    let mut best: Option<(bool, usize, usize, usize)> = None;
                    for i in 0..tensors.len() {
                        for j in i + 1..tensors.len() {
                            let shared = shared_names(&tensors[i], &tensors[j]);
                            let key = (shared.is_empty(), result_size(&tensors[i], &tensors[j], &shared), i, j);
                            if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                                best = Some(key);
                            }
                        }
                    }
                    let (_, _, i, j) = best.unwrap();
                    let b = tensors.remove(j);
                    let a = tensors.remove(i);
                    tensors.push(contract_checked(&a, &b, opts.mem_cap)?);
                }
                tensors.pop().unwrap()
            }
        }
    };
    acc.label = "eval".into();
    let order: Vec<usize> = (0..net.sources.len())
        .map(|k| acc.leg_index(&source_name(k)))
        .chain((0..net.sinks.len()).map(|k| acc.leg_index(&sink_name(k))))
        .collect::<Result<_>>()?;
    Ok(acc.permute(&order))
}

/// Matrix of the evaluated network (rows: sinks, cols: sources).
pub fn evaluate_matrix(net: &Network) -> Result<CMat> {
    Ok(evaluate(net, EvalOptions::default())?.matrix())
}

pub fn evaluate_matrix_with(net: &Network, opts: EvalOptions) -> Result<CMat> {
    Ok(evaluate(net, opts)?.matrix())
}

/// Matrix restricted to physical legs, with every horizontal boundary leg
/// fixed to basis state |0⟩ on input and projected on ⟨0| on output.
pub fn evaluate_closed(net: &Network) -> Result<CMat> {
    let full = evaluate_matrix(net)?;
    Ok(close_boundaries(net, &full))
}

pub fn close_boundaries(net: &Network, full: &CMat) -> CMat {
    let pick = |ext: &[crate::graph::External], dims: &[usize]| -> Vec<usize> {
        let total: usize = dims.iter().product();
        let horizontal: Vec<bool> = ext.iter().map(|e| e.boundary != ExternalKind::Physical).collect();
        (0..total)
            .filter(|&x| {
                let mut r = x;
                for k in (0..dims.len()).rev() {
                    let digit = r % dims[k];
                    r /= dims[k];
                    if horizontal[k] && digit != 0 {
                        return false;
                    }
                }
                true
            })
            .collect()
    };
    let rows = pick(&net.sinks, &net.sink_dims());
    let cols = pick(&net.sources, &net.source_dims());
    CMat::from_fn(rows.len(), cols.len(), |i, j| full[(rows[i], cols[j])])
}

/// Sites and dims of a network whose physical sources and sinks pair up
/// site by site (one of each per site, equal dims). Horizontal externals are
/// ignored here; [`site_operator`] closes them with |0⟩.
pub fn site_layout(net: &Network) -> Result<(Vec<i64>, Vec<usize>)> {
    let src_dims = net.source_dims();
    let snk_dims = net.sink_dims();
    let phys_src: Vec<usize> = (0..net.sources.len()).filter(|&k| net.sources[k].is_physical()).collect();
    let phys_snk: Vec<usize> = (0..net.sinks.len()).filter(|&k| net.sinks[k].is_physical()).collect();
    if phys_src.len() != phys_snk.len() {
        return Err(Error::Invalid("physical source and sink counts differ".into()));
    }
    let mut sites = Vec::new();
    let mut dims = Vec::new();
    for &k in &phys_src {
        let site = net.sources[k].site;
        let matches: Vec<usize> = phys_snk.iter().copied().filter(|&j| net.sinks[j].site == site).collect();
        if matches.len() != 1 || phys_src.iter().filter(|&&x| net.sources[x].site == site).count() != 1 {
            return Err(Error::Invalid(format!("site {site} needs exactly one source and one sink")));
        }
        if snk_dims[matches[0]] != src_dims[k] {
            return Err(Error::Dimension(format!(
                "site {site}: in dim {} vs out dim {}",
                src_dims[k], snk_dims[matches[0]]
            )));
        }
        sites.push(site);
        dims.push(src_dims[k]);
    }
    Ok((sites, dims))
}

/// Global operator with rows and columns ordered by increasing site and
/// horizontal boundary legs closed with |0⟩.
pub fn site_operator(net: &Network) -> Result<(CMat, Vec<i64>, Vec<usize>)> {
    site_operator_with(net, EvalOptions::default())
}

pub fn site_operator_with(net: &Network, opts: EvalOptions) -> Result<(CMat, Vec<i64>, Vec<usize>)> {
    let (sites, dims) = site_layout(net)?;
    let full = evaluate_matrix_with(net, opts)?;
    let m = close_boundaries(net, &full);
    let snk_sites: Vec<i64> = net.sinks.iter().filter(|s| s.is_physical()).map(|s| s.site).collect();
    let snk_dims: Vec<usize> = (0..net.sinks.len())
        .filter(|&k| net.sinks[k].is_physical())
        .map(|k| net.sink_dims()[k])
        .collect();
    Ok(reorder_to_sites(&m, &sites, &dims, &snk_sites, &snk_dims))
}

fn sort_perm(sites: &[i64]) -> Vec<usize> {
    let mut p: Vec<usize> = (0..sites.len()).collect();
    p.sort_by_key(|&k| sites[k]);
    p
}

fn reorder_to_sites(
    m: &CMat,
    src_sites: &[i64],
    src_dims: &[usize],
    snk_sites: &[i64],
    snk_dims: &[usize],
) -> (CMat, Vec<i64>, Vec<usize>) {
    let cols = sort_perm(src_sites);
    let rows = sort_perm(snk_sites);
    let col_perm = linalg::permutation_matrix(src_dims, &cols);
    let row_perm = linalg::permutation_matrix(snk_dims, &rows);
    let out = &row_perm * m * col_perm.adjoint();
    let s: Vec<i64> = cols.iter().map(|&k| src_sites[k]).collect();
    let d: Vec<usize> = cols.iter().map(|&k| src_dims[k]).collect();
    (out, s, d)
}

/// u(O) = U O U† with the support tightened to sites where the image acts
/// non-trivially.
pub fn heisenberg_transform(net: &Network, op: &DenseOperator) -> Result<DenseOperator> {
    let (u, sites, dims) = site_operator(net)?;
    heisenberg_with_matrix(&u, &sites, &dims, op)
}

pub fn heisenberg_with_matrix(u: &CMat, sites: &[i64], dims: &[usize], op: &DenseOperator) -> Result<DenseOperator> {
    let full = op.embed(sites, dims)?;
    let img = u * full * u.adjoint();
    Ok(DenseOperator::new(img, sites.to_vec(), dims.to_vec())?.tighten())
}

/// Superoperator of the reduced map O ↦ (1/D_in) Tr_{B_out}[T (O ⊗ I_{B_in}) T†],
/// where S is given by `keep_in`/`keep_out` leg ids of `t` and every other
/// leg is environment. Acts on row-major vec(O).
pub fn reduced_superoperator(t: &Tensor, keep_in: &[&str], keep_out: &[&str]) -> Result<CMat> {
    for id in keep_in {
        if t.leg(id)?.direction != Direction::Incoming {
            return Err(Error::Direction(format!("`{id}` is not incoming")));
        }
    }
    for id in keep_out {
        if t.leg(id)?.direction != Direction::Outgoing {
            return Err(Error::Direction(format!("`{id}` is not outgoing")));
        }
    }
    let env_in: Vec<String> = t
        .legs()
        .iter()
        .filter(|l| l.direction == Direction::Incoming && !keep_in.contains(&l.id.as_str()))
        .map(|l| l.id.clone())
        .collect();
    let env_out: Vec<String> = t
        .legs()
        .iter()
        .filter(|l| l.direction == Direction::Outgoing && !keep_out.contains(&l.id.as_str()))
        .map(|l| l.id.clone())
        .collect();
    let order: Vec<usize> = keep_out
        .iter()
        .map(|s| s.to_string())
        .chain(env_out.iter().cloned())
        .chain(keep_in.iter().map(|s| s.to_string()))
        .chain(env_in.iter().cloned())
        .map(|id| t.leg_index(&id))
        .collect::<Result<_>>()?;
    let p = t.permute(&order);
    let m = p.matrix();
    let dso: usize = keep_out.iter().map(|id| t.leg(id).unwrap().dim).product();
    let dsi: usize = keep_in.iter().map(|id| t.leg(id).unwrap().dim).product();
    let dbo = m.nrows() / dso;
    let dbi = m.ncols() / dsi;
    let mut sup = CMat::zeros(dso * dso, dsi * dsi);
    for bo in 0..dbo {
        for bi in 0..dbi {
            let k = CMat::from_fn(dso, dsi, |r, c| m[(r * dbo + bo, c * dbi + bi)]);
            sup += linalg::kron(&k, &k.map(|z| z.conj()));
        }
    }
    Ok(sup / C64::new(dbi as f64, 0.0))
}

/// Reduced unitary of the whole network on `sites` (environment = all other
/// external legs).
pub fn reduced_unitary_sites(net: &Network, sites: &[i64]) -> Result<CMat> {
    let t = evaluate(net, EvalOptions::default())?;
    let keep_in: Vec<String> = (0..net.sources.len())
        .filter(|&k| net.sources[k].is_physical() && sites.contains(&net.sources[k].site))
        .map(source_name)
        .collect();
    let keep_out: Vec<String> = (0..net.sinks.len())
        .filter(|&k| net.sinks[k].is_physical() && sites.contains(&net.sinks[k].site))
        .map(sink_name)
        .collect();
    let ki: Vec<&str> = ordered_by_site(&keep_in, net, true);
    let ko: Vec<&str> = ordered_by_site(&keep_out, net, false);
    reduced_superoperator(&t, &ki, &ko)
}

fn ordered_by_site<'a>(names: &'a [String], net: &Network, source: bool) -> Vec<&'a str> {
    let mut v: Vec<(i64, &str)> = names
        .iter()
        .map(|n| {
            let k: usize = n.trim_start_matches(if source { "in" } else { "out" }).parse().unwrap();
            let site = if source { net.sources[k].site } else { net.sinks[k].site };
            (site, n.as_str())
        })
        .collect();
    v.sort();
    v.into_iter().map(|x| x.1).collect()
}

/// Reduced unitary of a sub-network: its physical legs are kept and exactly
/// the promoted parent-bond legs are traced.
pub fn reduced_unitary_subnetwork(sub: &SubNetwork) -> Result<CMat> {
    let sites: Vec<i64> = sub.net.sources.iter().filter(|s| s.is_physical()).map(|s| s.site).collect();
    reduced_unitary_sites(&sub.net, &sites)
}

/// Per-site MPS tensors, bond dimensions and entanglement entropies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MpsResult {
    pub sites: Vec<i64>,
    /// `(physical, left, right)` dims per site tensor.
    pub shapes: Vec<(usize, usize, usize)>,
    #[serde(skip)]
    pub tensors: Vec<Vec<C64>>,
    pub bond_dims: Vec<usize>,
    /// Network bond dimension across each cut (product of crossing edges).
    pub network_bond_dims: Vec<usize>,
    /// Von Neumann entropy of each left/right cut, logarithm base d.
    pub entropies: Vec<f64>,
    #[serde(skip)]
    pub state: Vec<C64>,
    pub norm: f64,
}

/// Applies the network to a product state by contracting each site column
/// with its local input, producing an MPS; also returns the dense state.
pub fn apply_to_product_state(net: &Network, local_states: &[Vec<C64>], mem_cap: usize) -> Result<MpsResult> {
    if net.has_horizontal_externals() {
        return Err(Error::Invalid("close or wrap horizontal boundary legs before building an MPS".into()));
    }
    let (sites, dims) = site_layout(net)?;
    if local_states.len() != sites.len() {
        return Err(Error::Invalid(format!("{} local states for {} sites", local_states.len(), sites.len())));
    }
    let total: usize = dims.iter().product();
    if total > mem_cap {
        return Err(Error::Budget { needed: total, cap: mem_cap });
    }
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by_key(|&k| sites[k]);
    let sorted_sites: Vec<i64> = order.iter().map(|&k| sites[k]).collect();
    let col_of: HashMap<i64, usize> = sorted_sites.iter().enumerate().map(|(c, s)| (*s, c)).collect();
    let mut tensors = relabeled_tensors(net)?;
    let mut columns: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, v) in net.vertices.iter().enumerate() {
        let c = *col_of
            .get(&v.site)
            .ok_or_else(|| Error::Invalid(format!("vertex `{}` sits off the physical sites", v.id)))?;
        columns.entry(c).or_default().push(i);
    }
    // Attach input states.
    for (k, s) in net.sources.iter().enumerate() {
        let pos = sites.iter().position(|x| *x == s.site).unwrap();
        let st = &local_states[pos];
        if st.len() != dims[pos] {
            return Err(Error::Dimension(format!("local state at site {} has length {}", s.site, st.len())));
        }
        let vi = net.vertex_index(&s.vertex)?;
        let vec_t = Tensor::new(vec![LegSpec::outgoing(source_name(k), st.len())], st.clone(), "psi")?;
        tensors[vi] = contract(&vec_t, &tensors[vi], &[(&source_name(k), &source_name(k))])?;
    }
    let mut edge_cols: Vec<(usize, usize)> = Vec::new();
    for e in &net.edges {
        let a = col_of[&net.vertex(&e.from).unwrap().site];
        let b = col_of[&net.vertex(&e.to).unwrap().site];
        if a.abs_diff(b) > 1 {
            return Err(Error::Invalid("MPS grouping needs nearest-neighbour columns".into()));
        }
        edge_cols.push((a, b));
    }
    let ncols = sorted_sites.len();
    let mut network_bond_dims = vec![1usize; ncols.saturating_sub(1)];
    let mut right_edges: Vec<Vec<String>> = vec![Vec::new(); ncols];
    for (k, e) in net.edges.iter().enumerate() {
        let (a, b) = edge_cols[k];
        if a != b {
            let left = a.min(b);
            right_edges[left].push(format!("e{k}"));
            network_bond_dims[left] *= net.leg_dim(&e.from, &e.from_leg)?;
        }
    }
    let mut mps = Vec::new();
    let mut shapes = Vec::new();
    for c in 0..ncols {
        let members = columns.get(&c).cloned().unwrap_or_default();
        let mut t = Tensor::scalar(ONE);
        for &i in &members {
            t = contract_checked(&t, &tensors[i], mem_cap)?;
        }
        let phys: Vec<String> = (0..net.sinks.len())
            .filter(|&k| net.sinks[k].site == sorted_sites[c])
            .map(sink_name)
            .collect();
        let left: Vec<String> = if c > 0 { right_edges[c - 1].clone() } else { Vec::new() };
        let right = right_edges[c].clone();
        let idx: Vec<usize> = phys
            .iter()
            .chain(left.iter())
            .chain(right.iter())
            .map(|n| t.leg_index(n))
            .collect::<Result<_>>()?;
        let p = t.permute(&idx);
        let dp: usize = phys.iter().map(|n| t.leg(n).unwrap().dim).product();
        let dl: usize = left.iter().map(|n| t.leg(n).unwrap().dim).product();
        let dr: usize = right.iter().map(|n| t.leg(n).unwrap().dim).product();
        shapes.push((dp, dl, dr));
        mps.push(p.data().to_vec());
    }
    // Dense state: sweep left to right; psi[(phys prefix), right bond].
    let mut psi = vec![ONE];
    let mut prefix = 1usize;
    for c in 0..ncols {
        let (dp, dl, dr) = shapes[c];
        let a = &mps[c];
        let mut next = vec![ZERO; prefix * dp * dr];
        for x in 0..prefix {
            for l in 0..dl {
                let amp = psi[x * dl + l];
                if amp == ZERO {
                    continue;
                }
                for s in 0..dp {
                    for r in 0..dr {
                        next[(x * dp + s) * dr + r] += amp * a[(s * dl + l) * dr + r];
                    }
                }
            }
        }
        psi = next;
        prefix *= dp;
    }
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let sorted_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let base = net.d.max(2) as f64;
    let mut entropies = Vec::new();
    let mut left_dim = 1usize;
    for c in 0..ncols.saturating_sub(1) {
        left_dim *= sorted_dims[c];
        let right_dim = total / left_dim;
        let m = CMat::from_row_slice(left_dim, right_dim, &psi);
        let sv = linalg::singular_values_desc(&m);
        let s: f64 = sv
            .iter()
            .map(|x| x * x / (norm * norm))
            .filter(|&p| p > 1e-300)
            .map(|p| -p * p.log(base))
            .sum();
        entropies.push(s.max(0.0));
    }
    let bond_dims = shapes.iter().take(ncols.saturating_sub(1)).map(|s| s.2).collect();
    Ok(MpsResult {
        sites: sorted_sites,
        shapes,
        tensors: mps,
        bond_dims,
        network_bond_dims,
        entropies,
        state: psi,
        norm,
    })
}

/// Computational basis product state |x_1 … x_n⟩ as local vectors.
pub fn basis_product_state(digits: &[usize], d: usize) -> Vec<Vec<C64>> {
    digits.iter().map(|&x| crate::tensor::basis_vector(d, x)).collect()
}
