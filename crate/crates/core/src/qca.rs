//! QCA tools: Margolus schemes and their bilayer form, locality radius,
//! operator-Schmidt supports, periodic wrapping and tail profiles.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{evaluate_matrix, heisenberg_with_matrix, site_operator};
use crate::flow::{gnvw_log_index, FlowValue};
use crate::gallery::{build_bilayer, routing, Column, ColumnDims};
use crate::graph::{wrap_horizontal, ExternalKind, Network};
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::ops::{outside_weight, partial_trace, DenseOperator, SUPPORT_TOL};

/// Two-step Margolus scheme on a ring of 2M cells. `w_blocks[k]` maps cells
/// (2k, 2k+1) from A to B; `v_blocks[m-1]` maps cells (2m−1, 2m mod 2M) from
/// B back to A.
#[derive(Clone, Debug, PartialEq)]
pub struct MargolusScheme {
    pub d: usize,
    pub a_dims: Vec<usize>,
    pub b_dims: Vec<usize>,
    pub w_blocks: Vec<CMat>,
    pub v_blocks: Vec<CMat>,
}

impl MargolusScheme {
    pub fn cells(&self) -> usize {
        self.a_dims.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.cells();
        if n < 2 || n % 2 != 0 || self.b_dims.len() != n {
            return Err(Error::Dimension("a Margolus ring needs an even number of cells ≥ 2".into()));
        }
        let m = n / 2;
        if self.w_blocks.len() != m || self.v_blocks.len() != m {
            return Err(Error::Dimension(format!("expected {m} w and {m} v blocks")));
        }
        for k in 0..m {
            let a = self.a_dims[2 * k] * self.a_dims[2 * k + 1];
            let b = self.b_dims[2 * k] * self.b_dims[2 * k + 1];
            let w = &self.w_blocks[k];
            if a != b || w.nrows() != b || w.ncols() != a {
                return Err(Error::Dimension(format!("w block {k} does not map A({a}) to B({b})")));
            }
            let (p, q) = (2 * k + 1, (2 * k + 2) % n);
            let bb = self.b_dims[p] * self.b_dims[q];
            let aa = self.a_dims[p] * self.a_dims[q];
            let v = &self.v_blocks[k];
            if aa != bb || v.nrows() != aa || v.ncols() != bb {
                return Err(Error::Dimension(format!("v block {} does not map B({bb}) to A({aa})", k + 1)));
            }
        }
        Ok(())
    }

    /// Dense v∘w on the cell ring, factors in cell order 0..2M.
    pub fn dense(&self) -> Result<CMat> {
        self.check()?;
        let n = self.cells();
        let w = linalg::kron_all(&self.w_blocks);
        // Rotate B so cell 0 sits last, apply the v pairs, rotate back.
        let rot: Vec<usize> = (1..n).chain([0]).collect();
        let to_rot = linalg::permutation_matrix(&self.b_dims, &rot);
        let a_rot: Vec<usize> = rot.iter().map(|&c| self.a_dims[c]).collect();
        let mut back: Vec<usize> = vec![0; n];
        for (pos, &c) in rot.iter().enumerate() {
            back[c] = pos;
        }
        let from_rot = linalg::permutation_matrix(&a_rot, &back);
        let v = linalg::kron_all(&self.v_blocks);
        Ok(from_rot * v * to_rot * w)
    }

    /// Dense operator with factors grouped by supercell m = (2m−1, 2m).
    pub fn dense_supercells(&self) -> Result<CMat> {
        let u = self.dense()?;
        let n = self.cells();
        let rot: Vec<usize> = (1..n).chain([0]).collect();
        let p = linalg::permutation_matrix(&self.a_dims, &rot);
        Ok(&p * u * p.adjoint())
    }

    /// log_d(b_{2m}/a_{2m}) for every m.
    pub fn gnvw(&self) -> Vec<FlowValue> {
        (0..self.cells() / 2).map(|k| gnvw_log_index(self.a_dims[2 * k], self.b_dims[2 * k], self.d)).collect()
    }

    pub fn identity(m: usize, d: usize) -> Self {
        let id = CMat::identity(d * d, d * d);
        MargolusScheme {
            d,
            a_dims: vec![d; 2 * m],
            b_dims: vec![d; 2 * m],
            w_blocks: vec![id.clone(); m],
            v_blocks: vec![id; m],
        }
    }

    /// Right shift: w parks both cells of a pair in the odd cell, v hands
    /// them to the next pair. Here b_{2m} = 1 and b_{2m+1} = d².
    pub fn right_shift(m: usize, d: usize) -> Self {
        let id = CMat::identity(d * d, d * d);
        let b = (0..2 * m).map(|c| if c % 2 == 0 { 1 } else { d * d }).collect();
        MargolusScheme { d, a_dims: vec![d; 2 * m], b_dims: b, w_blocks: vec![id.clone(); m], v_blocks: vec![id; m] }
    }

    /// Left shift: the mirror image, with b_{2m} = d² and b_{2m+1} = 1.
    pub fn left_shift(m: usize, d: usize) -> Self {
        let b = (0..2 * m).map(|c| if c % 2 == 0 { d * d } else { 1 }).collect();
        let w = linalg::swap(d);
        let v = linalg::swap(d);
        MargolusScheme { d, a_dims: vec![d; 2 * m], b_dims: b, w_blocks: vec![w; m], v_blocks: vec![v; m] }
    }

    /// Seeded Haar blocks with b_{2m} = `b_even` and b_{2m+1} = d²/b_even.
    pub fn haar(m: usize, d: usize, b_even: usize, seed: u64) -> Result<Self> {
        if b_even == 0 || (d * d) % b_even != 0 {
            return Err(Error::Dimension(format!("b_even = {b_even} must divide d² = {}", d * d)));
        }
        let mut r = linalg::rng(seed);
        let w = (0..m).map(|_| linalg::haar_unitary(d * d, &mut r)).collect();
        let v = (0..m).map(|_| linalg::haar_unitary(d * d, &mut r)).collect();
        let b = (0..2 * m).map(|c| if c % 2 == 0 { b_even } else { d * d / b_even }).collect();
        Ok(MargolusScheme { d, a_dims: vec![d; 2 * m], b_dims: b, w_blocks: w, v_blocks: v })
    }
}

/// Open bilayer of a Margolus scheme, one column per supercell m = (2m−1, 2m).
/// The bottom tensor keeps cell 2m−1 (with the bond from the left) and sends
/// cell 2m right; the top tensor applies w_{m−1} then v_m and returns
/// b_{2m−2} to the left.
pub fn margolus_to_bilayer_open(s: &MargolusScheme) -> Result<Network> {
    s.check()?;
    let n = s.cells();
    let a = |c: usize| s.a_dims[c % n];
    let b = |c: usize| s.b_dims[c % n];
    let mut cols = Vec::new();
    for m in 1..=n / 2 {
        let (c0, c1, c2) = (2 * m - 2, 2 * m - 1, 2 * m);
        let bottom = routing(&[a(c1), a(c2), a(c0)], &[a(c2), a(c0), a(c1)], |x| vec![x[1], x[2], x[0]]);
        let w = linalg::kron(&s.w_blocks[m - 1], &CMat::identity(b(c2), b(c2)));
        let v = linalg::kron(&CMat::identity(b(c0), b(c0)), &s.v_blocks[m - 1]);
        let out = routing(&[b(c0), a(c1), a(c2)], &[a(c1), a(c2), b(c0)], |x| vec![x[1], x[2], x[0]]);
        let top = out * v * w;
        cols.push(Column {
            site: m as i64,
            dims: ColumnDims {
                s_in: a(c1) * a(c2),
                l_in: a(c0),
                r_out: a(c2),
                v: a(c0) * a(c1),
                r_in: b(c2),
                s_out: a(c1) * a(c2),
                l_out: b(c0),
            },
            bottom,
            top,
        });
    }
    build_bilayer(s.d, &cols)
}

/// The Margolus bilayer wrapped onto the ring of supercells.
pub fn margolus_to_bilayer(s: &MargolusScheme) -> Result<Network> {
    wrap_horizontal(&margolus_to_bilayer_open(s)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityReport {
    pub sites: Vec<i64>,
    /// Radius per site; `None` when it exceeds `max_r`.
    pub per_site: Vec<Option<usize>>,
    /// Network radius, `None` when some site exceeds `max_r`.
    pub radius: Option<usize>,
    pub max_r: usize,
}

fn site_distance(a: i64, b: i64, period: Option<i64>) -> usize {
    let d = (a - b).unsigned_abs() as usize;
    match period {
        Some(p) => d.min(p as usize - d),
        None => d,
    }
}

/// Smallest R per site such that every non-identity clock-and-shift operator
/// there is mapped into the ball of radius R.
pub fn locality_radius(net: &Network, max_r: usize) -> Result<LocalityReport> {
    let (u, sites, dims) = site_operator(net)?;
    let mut per_site = Vec::new();
    for (k, &x) in sites.iter().enumerate() {
        let dk = dims[k];
        let mut r = 0usize;
        for a in 0..dk {
            for b in 0..dk {
                if a == 0 && b == 0 {
                    continue;
                }
                let op = DenseOperator::new(linalg::clock_shift(dk, a, b), vec![x], vec![dk])?;
                let img = heisenberg_with_matrix(&u, &sites, &dims, &op)?;
                for &s in &img.sites {
                    r = r.max(site_distance(s, x, net.period));
                }
            }
        }
        per_site.push(if r <= max_r { Some(r) } else { None });
    }
    let radius = per_site.iter().try_fold(0usize, |acc, r| r.map(|r| acc.max(r)));
    Ok(LocalityReport { sites, per_site, radius, max_r })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportReport {
    /// Operator-Schmidt rank across the cut (part k | rest).
    pub ranks: Vec<usize>,
    /// Whether the operator acts non-trivially on part k.
    pub non_identity: Vec<bool>,
}

/// Operator-Schmidt ranks of `op` for each part of `partition` (lists of
/// positions in `op.sites`) against the rest.
pub fn support_dims(op: &DenseOperator, partition: &[Vec<usize>]) -> Result<SupportReport> {
    let n = op.sites.len();
    let mut ranks = Vec::new();
    let mut non_identity = Vec::new();
    for part in partition {
        if part.iter().any(|&p| p >= n) {
            return Err(Error::Invalid("partition refers to a position outside the operator".into()));
        }
        let rest: Vec<usize> = (0..n).filter(|p| !part.contains(p)).collect();
        let order: Vec<usize> = part.iter().chain(rest.iter()).copied().collect();
        let m = linalg::permute_operator(&op.matrix, &op.dims, &order);
        let da: usize = part.iter().map(|&k| op.dims[k]).product();
        let db: usize = rest.iter().map(|&k| op.dims[k]).product();
        let reshuffled = CMat::from_fn(da * da, db * db, |row, col| {
            let (i, j) = (row / da, row % da);
            let (k, l) = (col / db, col % db);
            m[(i * db + k, j * db + l)]
        });
        ranks.push(linalg::rank(&reshuffled, SUPPORT_TOL * linalg::frobenius(&op.matrix).max(1.0)));
        // Identity on the part iff op = I_part ⊗ Tr_part(op)/d_part.
        let traced = partial_trace(&m, &[da, db], &[1]) / C64::new(da as f64, 0.0);
        let rebuilt = linalg::kron(&CMat::identity(da, da), &traced);
        let dev = linalg::frobenius(&(&m - rebuilt)) / linalg::frobenius(&m).max(f64::MIN_POSITIVE);
        non_identity.push(dev > SUPPORT_TOL);
    }
    Ok(SupportReport { ranks, non_identity })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WrapCondition {
    /// Largest relative weight on the outgoing horizontal legs of a
    /// transported incoming-horizontal basis operator.
    pub max_leak: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug)]
pub struct WrapResult {
    pub net: Network,
    pub residual: f64,
    pub condition: WrapCondition,
}

/// Contracts the horizontal externals into periodic bonds and reports the
/// unitarity residual of the wrapped evaluation together with the leak of
/// incoming-bond operators onto outgoing bonds in the open network.
pub fn wrap_pbc(net: &Network) -> Result<WrapResult> {
    let wrapped = wrap_horizontal(net)?;
    let condition = wrap_condition(net)?;
    let m = evaluate_matrix(&wrapped)?;
    Ok(WrapResult { residual: linalg::unitarity_residual(&m), net: wrapped, condition })
}

fn wrap_condition(net: &Network) -> Result<WrapCondition> {
    let u = evaluate_matrix(net)?;
    let src_dims = net.source_dims();
    let snk_dims = net.sink_dims();
    let h_out: Vec<usize> =
        (0..net.sinks.len()).filter(|&k| matches!(net.sinks[k].boundary, ExternalKind::Horizontal { .. })).collect();
    let keep: Vec<usize> = (0..net.sinks.len()).filter(|k| !h_out.contains(k)).collect();
    let u_dag = u.adjoint();
    let mut max_leak: f64 = 0.0;
    for (k, s) in net.sources.iter().enumerate() {
        if !matches!(s.boundary, ExternalKind::Horizontal { .. }) {
            continue;
        }
        let dk = src_dims[k];
        for a in 0..dk {
            for b in 0..dk {
                if a == 0 && b == 0 {
                    continue;
                }
                let uo = times_on_leg(&u, &src_dims, k, &linalg::clock_shift(dk, a, b));
                let x = linalg::matmul(&uo, &u_dag);
                max_leak = max_leak.max(outside_weight(&x, &snk_dims, &keep));
            }
        }
    }
    Ok(WrapCondition { max_leak, satisfied: max_leak < 1e-9 })
}

/// u·(I ⊗ a ⊗ I) with `a` acting on input leg `k` of the big-endian layout
/// `dims`, without forming the Kronecker product.
fn times_on_leg(u: &CMat, dims: &[usize], k: usize, a: &CMat) -> CMat {
    let dk = dims[k];
    let stride: usize = dims[k + 1..].iter().product();
    let mut out = CMat::zeros(u.nrows(), u.ncols());
    for c in 0..u.ncols() {
        let digit = (c / stride) % dk;
        let base = c - digit * stride;
        for j in 0..dk {
            let coef = a[(j, digit)];
            if coef != ZERO {
                out.column_mut(c).axpy(coef, &u.column(base + j * stride), ONE);
            }
        }
    }
    out
}

/// Sparse Pauli-string operator on qubits: string (0..3 per qubit) → coefficient.
pub type PauliSum = HashMap<Vec<u8>, C64>;

pub const PAULI_PRUNE: f64 = 1e-12;

/// Conjugation table G P G† = Σ_Q c_Q Q for all Pauli strings P on the
/// gate's wires.
fn conjugation_table(g: &CMat, k: usize) -> Vec<Vec<(Vec<u8>, C64)>> {
    let strings: Vec<Vec<u8>> = (0..4usize.pow(k as u32))
        .map(|mut x| {
            let mut s = vec![0u8; k];
            for j in (0..k).rev() {
                s[j] = (x % 4) as u8;
                x /= 4;
            }
            s
        })
        .collect();
    let mats: Vec<CMat> = strings
        .iter()
        .map(|s| linalg::kron_all(&s.iter().map(|&p| linalg::pauli(p as usize)).collect::<Vec<_>>()))
        .collect();
    let dim = C64::new((1usize << k) as f64, 0.0);
    mats.iter()
        .map(|p| {
            let img = g * p * g.adjoint();
            strings
                .iter()
                .zip(&mats)
                .filter_map(|(s, q)| {
                    let c = (q.adjoint() * &img).trace() / dim;
                    (c.norm() > 1e-14).then(|| (s.clone(), c))
                })
                .collect()
        })
        .collect()
}

/// Heisenberg transport U O U† for U = g_m ⋯ g_1 (gates listed in
/// application order) acting on qubits.
pub fn propagate_paulis(op: &PauliSum, gates: &[(CMat, Vec<usize>)]) -> Result<PauliSum> {
    let mut cache: Vec<Option<Vec<Vec<(Vec<u8>, C64)>>>> = vec![None; gates.len()];
    let mut cur = op.clone();
    for (gi, (g, wires)) in gates.iter().enumerate() {
        let k = wires.len();
        if g.nrows() != 1 << k {
            return Err(Error::Dimension(format!("gate {gi} is not a {k}-qubit gate")));
        }
        let table = cache[gi].get_or_insert_with(|| conjugation_table(g, k));
        let mut next: PauliSum = HashMap::with_capacity(cur.len());
        for (s, c) in &cur {
            let idx = wires.iter().fold(0usize, |acc, &w| acc * 4 + s[w] as usize);
            for (q, co) in &table[idx] {
                let mut s2 = s.clone();
                for (j, &w) in wires.iter().enumerate() {
                    s2[w] = q[j];
                }
                *next.entry(s2).or_insert(ZERO) += c * co;
            }
        }
        next.retain(|_, c| c.norm() > PAULI_PRUNE);
        cur = next;
    }
    Ok(cur)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailFit {
    pub amplitude: f64,
    pub xi: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailProfile {
    pub site: i64,
    pub radii: Vec<usize>,
    pub f_values: Vec<f64>,
    pub spectral_bound: Vec<f64>,
    pub norm_kind: String,
    pub fit: Option<TailFit>,
    pub monotone: bool,
}

impl TailProfile {
    fn new(site: i64, radii: Vec<usize>, f_values: Vec<f64>) -> Self {
        let spectral_bound = f_values.iter().map(|f| (2.0 * f).min(2.0)).collect();
        let monotone = f_values.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        let fit = fit_exponential(&radii, &f_values);
        TailProfile { site, radii, f_values, spectral_bound, norm_kind: "frobenius".into(), fit, monotone }
    }

    /// Columns r, f, fit residual (ln f minus the fitted line; empty when f = 0).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,f,fit_residual\n");
        for (r, f) in self.radii.iter().zip(&self.f_values) {
            let res = match &self.fit {
                Some(fit) if *f > 0.0 => format!("{}", f.ln() - (fit.amplitude.ln() - *r as f64 / fit.xi)),
                _ => String::new(),
            };
            out.push_str(&format!("{r},{f},{res}\n"));
        }
        out
    }
}

/// Least-squares line through (r, ln f) over points with f > 1e-13.
pub fn fit_exponential(radii: &[usize], f: &[f64]) -> Option<TailFit> {
    let pts: Vec<(f64, f64)> =
        radii.iter().zip(f).filter(|(_, &v)| v > 1e-13).map(|(&r, &v)| (r as f64, v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - (icpt + slope * p.0)).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Some(TailFit { amplitude: icpt.exp(), xi: -1.0 / slope, r_squared, points: pts.len() })
}

/// Tail profile of a qubit circuit via sparse Pauli propagation: for each of
/// X, Y, Z on wire `x`, the Frobenius weight of u(O) outside [x−r, x+r],
/// maximised over the three.
pub fn alpu_tails_circuit(
    n_wires: usize,
    gates: &[(CMat, Vec<usize>)],
    x: usize,
    radii: &[usize],
) -> Result<TailProfile> {
    if x >= n_wires {
        return Err(Error::Invalid(format!("wire {x} out of range")));
    }
    let mut f = vec![0.0f64; radii.len()];
    for p in 1..=3u8 {
        let mut s = vec![0u8; n_wires];
        s[x] = p;
        let img = propagate_paulis(&HashMap::from([(s, ONE)]), gates)?;
        let total: f64 = img.values().map(|c| c.norm_sqr()).sum();
        for (k, &r) in radii.iter().enumerate() {
            let outside: f64 = img
                .iter()
                .filter(|(s, _)| s.iter().enumerate().any(|(i, &q)| q != 0 && i.abs_diff(x) > r))
                .map(|(_, c)| c.norm_sqr())
                .sum();
            f[k] = f[k].max((outside / total).sqrt());
        }
    }
    Ok(TailProfile::new(x as i64, radii.to_vec(), f))
}

/// Dense tail profile of a network: conditional expectation onto the ball
/// B(x, r), maximised over the clock-and-shift basis at `site`.
pub fn alpu_tails(net: &Network, site: i64, radii: &[usize]) -> Result<TailProfile> {
    let (u, sites, dims) = site_operator(net)?;
    let k = sites
        .iter()
        .position(|&s| s == site)
        .ok_or_else(|| Error::Invalid(format!("site {site} is not a physical site")))?;
    let dk = dims[k];
    let mut f = vec![0.0f64; radii.len()];
    for a in 0..dk {
        for b in 0..dk {
            if a == 0 && b == 0 {
                continue;
            }
            let op = DenseOperator::new(linalg::clock_shift(dk, a, b), vec![site], vec![dk])?;
            let x = &u * op.embed(&sites, &dims)? * u.adjoint();
            for (j, &r) in radii.iter().enumerate() {
                let keep: Vec<usize> =
                    (0..sites.len()).filter(|&i| site_distance(sites[i], site, net.period) <= r).collect();
                f[j] = f[j].max(outside_weight(&x, &dims, &keep));
            }
        }
    }
    Ok(TailProfile::new(site, radii.to_vec(), f))
}

/// ξ = 1 / (−ln √(1 − cos⁴θ)) in lattice units.
pub fn xy_decay_length_formula(theta: f64) -> f64 {
    1.0 / -(1.0 - theta.cos().powi(4)).sqrt().ln()
}
