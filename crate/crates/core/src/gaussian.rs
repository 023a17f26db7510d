//! Number-conserving fermionic Gaussian unitaries at the mode level: direct
//! sums and partial contractions of mode matrices, the cosine-sine
//! decomposition, the left-to-right CSD sweep into a bilayer mode network and
//! the many-body (Fock space) representation.
//!
//! A mode matrix has rows indexed by outgoing modes and columns by incoming
//! modes. Fock states are occupation strings with mode 0 as the most
//! significant bit; c_a carries the Jordan-Wigner string over modes b < a.

use std::collections::{HashMap, HashSet};

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{CostReport, FlowValue};
use crate::linalg::{self, CMat, C64, ONE, ZERO};

pub const UNITARY_TOL: f64 = 1e-10;
/// Default ε for local-pair extraction.
pub const DEFAULT_EPSILON: f64 = 1e-10;
/// Sines at or below this are numerical zeros, whatever ε is.
pub const SINE_FLOOR: f64 = 1e-10;
pub const MAX_FOCK_MODES: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeUnitary {
    #[serde(with = "crate::io::cmat_serde")]
    pub matrix: CMat,
    pub in_labels: Vec<String>,
    pub out_labels: Vec<String>,
}

fn unique(labels: &[String]) -> bool {
    labels.iter().collect::<HashSet<_>>().len() == labels.len()
}

impl ModeUnitary {
    pub fn new(matrix: CMat, in_labels: Vec<String>, out_labels: Vec<String>) -> Result<Self> {
        if matrix.nrows() != out_labels.len() || matrix.ncols() != in_labels.len() {
            return Err(Error::Dimension(format!(
                "mode matrix is {}x{} for {} out and {} in labels",
                matrix.nrows(),
                matrix.ncols(),
                out_labels.len(),
                in_labels.len()
            )));
        }
        if !unique(&in_labels) || !unique(&out_labels) {
            return Err(Error::Invalid("repeated mode label".into()));
        }
        let res = linalg::unitarity_residual(&matrix);
        if res > UNITARY_TOL {
            return Err(Error::NotUnitary(res));
        }
        Ok(ModeUnitary { matrix, in_labels, out_labels })
    }

    /// Labels `{prefix}{k}` on both sides.
    pub fn labeled(matrix: CMat, in_prefix: &str, out_prefix: &str) -> Result<Self> {
        let n = matrix.ncols();
        let m = matrix.nrows();
        Self::new(
            matrix,
            (0..n).map(|k| format!("{in_prefix}{k}")).collect(),
            (0..m).map(|k| format!("{out_prefix}{k}")).collect(),
        )
    }

    pub fn n_modes(&self) -> usize {
        self.matrix.ncols()
    }

    /// Same map with rows and columns listed in the given label orders.
    pub fn reordered(&self, in_labels: &[String], out_labels: &[String]) -> Result<ModeUnitary> {
        let pos = |labels: &[String], l: &String| {
            labels.iter().position(|x| x == l).ok_or_else(|| Error::Invalid(format!("unknown mode label `{l}`")))
        };
        let cols: Vec<usize> = in_labels.iter().map(|l| pos(&self.in_labels, l)).collect::<Result<_>>()?;
        let rows: Vec<usize> = out_labels.iter().map(|l| pos(&self.out_labels, l)).collect::<Result<_>>()?;
        if cols.len() != self.in_labels.len() || rows.len() != self.out_labels.len() {
            return Err(Error::Invalid("reordering must list every label once".into()));
        }
        let m = CMat::from_fn(rows.len(), cols.len(), |r, c| self.matrix[(rows[r], cols[c])]);
        Ok(ModeUnitary { matrix: m, in_labels: in_labels.to_vec(), out_labels: out_labels.to_vec() })
    }
}

fn disjoint(a: &[String], b: &[String]) -> bool {
    let s: HashSet<&String> = a.iter().collect();
    b.iter().all(|x| !s.contains(x))
}

/// U₁ ⊕ U₂ with concatenated labels.
pub fn mode_direct_sum(u1: &ModeUnitary, u2: &ModeUnitary) -> Result<ModeUnitary> {
    if !disjoint(&u1.in_labels, &u2.in_labels) || !disjoint(&u1.out_labels, &u2.out_labels) {
        return Err(Error::Invalid("direct sum of mode unitaries with shared labels".into()));
    }
    let (r1, c1) = u1.matrix.shape();
    let (r2, c2) = u2.matrix.shape();
    let mut m = CMat::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(&u1.matrix);
    m.view_mut((r1, c1), (r2, c2)).copy_from(&u2.matrix);
    Ok(ModeUnitary {
        matrix: m,
        in_labels: [u1.in_labels.clone(), u2.in_labels.clone()].concat(),
        out_labels: [u1.out_labels.clone(), u2.out_labels.clone()].concat(),
    })
}

/// Contracts the `shared` modes, which must be outgoing of one unitary and
/// incoming of the other. With `first` the earlier unitary (outputs B ∪ C)
/// and `second` the later one (inputs A ∪ B) the result has inputs
/// A ∪ in(first), outputs out(second) ∪ C and blocks
/// [[second^A, second^B first^B], [0, first^C]].
pub fn mode_partial_contract(u1: &ModeUnitary, u2: &ModeUnitary, shared: &[String]) -> Result<ModeUnitary> {
    let has = |v: &[String], l: &String| v.contains(l);
    let (first, second) = if shared.iter().all(|l| has(&u2.out_labels, l) && has(&u1.in_labels, l)) {
        (u2, u1)
    } else if shared.iter().all(|l| has(&u1.out_labels, l) && has(&u2.in_labels, l)) {
        (u1, u2)
    } else {
        return Err(Error::Direction("shared modes must run from one unitary's outputs to the other's inputs".into()));
    };
    let a_cols: Vec<usize> = (0..second.in_labels.len()).filter(|&k| !shared.contains(&second.in_labels[k])).collect();
    let b_cols: Vec<usize> = shared.iter().map(|l| second.in_labels.iter().position(|x| x == l).unwrap()).collect();
    let b_rows: Vec<usize> = shared.iter().map(|l| first.out_labels.iter().position(|x| x == l).unwrap()).collect();
    let c_rows: Vec<usize> = (0..first.out_labels.len()).filter(|&k| !shared.contains(&first.out_labels[k])).collect();
    let in_labels: Vec<String> =
        a_cols.iter().map(|&k| second.in_labels[k].clone()).chain(first.in_labels.iter().cloned()).collect();
    let out_labels: Vec<String> =
        second.out_labels.iter().cloned().chain(c_rows.iter().map(|&k| first.out_labels[k].clone())).collect();
    if !unique(&in_labels) || !unique(&out_labels) {
        return Err(Error::Invalid("contraction would repeat a mode label".into()));
    }
    let ga = second.matrix.select_columns(&a_cols);
    let gb = second.matrix.select_columns(&b_cols);
    let fb = first.matrix.select_rows(&b_rows);
    let fc = first.matrix.select_rows(&c_rows);
    let (ro, na, nf) = (second.matrix.nrows(), a_cols.len(), first.matrix.ncols());
    let mut m = CMat::zeros(ro + c_rows.len(), na + nf);
    m.view_mut((0, 0), (ro, na)).copy_from(&ga);
    m.view_mut((0, na), (ro, nf)).copy_from(&(gb * fb));
    m.view_mut((ro, na), (c_rows.len(), nf)).copy_from(&fc);
    Ok(ModeUnitary { matrix: m, in_labels, out_labels })
}

/// Factors of U = V R W† with V = V_A ⊕ V_B, W = W_a ⊕ W_b.
///
/// Each a-column j carries (c_j, s_j); `a_row[j]`/`b_row[j]` give the rows of
/// R where they sit and `complement[j]` the b-column holding (−s_j, c_j).
/// R's remaining b-columns are the identity paddings on unused A rows, then
/// unused B rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsdFactors {
    pub p: usize,
    pub q: usize,
    #[serde(with = "crate::io::cmat_serde")]
    pub v_a: CMat,
    #[serde(with = "crate::io::cmat_serde")]
    pub v_b: CMat,
    #[serde(with = "crate::io::cmat_serde")]
    pub w_a: CMat,
    #[serde(with = "crate::io::cmat_serde")]
    pub w_b: CMat,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub a_row: Vec<Option<usize>>,
    pub b_row: Vec<Option<usize>>,
    pub complement: Vec<Option<usize>>,
    #[serde(with = "crate::io::cmat_serde")]
    pub r: CMat,
}

fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut m = CMat::zeros(ra + rb, ca + cb);
    m.view_mut((0, 0), (ra, ca)).copy_from(a);
    m.view_mut((ra, ca), (rb, cb)).copy_from(b);
    m
}

impl CsdFactors {
    pub fn v(&self) -> CMat {
        block_diag(&self.v_a, &self.v_b)
    }

    pub fn w(&self) -> CMat {
        block_diag(&self.w_a, &self.w_b)
    }

    pub fn reconstruct(&self) -> CMat {
        self.v() * &self.r * self.w().adjoint()
    }

    pub fn reconstruct_with(&self, r: &CMat) -> CMat {
        self.v() * r * self.w().adjoint()
    }
}

fn dot(a: &CMat, i: usize, b: &CMat, j: usize) -> C64 {
    a.column(i).iter().zip(b.column(j).iter()).map(|(x, y)| x.conj() * y).sum()
}

fn col_norm(a: &CMat, j: usize) -> f64 {
    a.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthogonalizes `x` against the first `k` columns of `basis` (two passes).
fn project_out(basis: &CMat, k: usize, x: &mut CMat) {
    for _ in 0..2 {
        for i in 0..k {
            let ov = dot(basis, i, x, 0);
            let col = basis.column(i).into_owned();
            x.column_mut(0).axpy(-ov, &col, ONE);
        }
    }
}

/// Fills columns k.. of `basis` (n×n) with an orthonormal completion of its
/// first k columns, choosing each time the unit vector with the largest
/// remaining component.
fn complete_basis(basis: &mut CMat, k: usize) {
    let n = basis.nrows();
    for col in k..n {
        let mut best: Option<(f64, CMat)> = None;
        for e in 0..n {
            let mut x = CMat::zeros(n, 1);
            x[(e, 0)] = ONE;
            project_out(basis, col, &mut x);
            let nx = col_norm(&x, 0);
            if best.as_ref().is_none_or(|(b, _)| nx > *b) {
                best = Some((nx, x));
            }
        }
        let (nx, x) = best.unwrap();
        basis.set_column(col, &(x / C64::new(nx, 0.0)).column(0));
    }
}

fn nearest_unitary(m: &CMat) -> CMat {
    let (u, _, v) = linalg::svd(m);
    u * v.adjoint()
}

/// Cosine-sine decomposition with output blocks A (first p rows) and B, and
/// input blocks a (first q columns) and b.
///
/// SVD of U^{Aa} gives V_A, c and W_a. The B parts of the a-columns, U^{Ba}W_a,
/// are normalized into V_B (re-orthogonalized, largest sine first) and V_B is
/// completed. W_b follows from projecting V†U^{·b} onto R's b-columns and is
/// polished to the nearest unitary.
pub fn csd(u: &CMat, p: usize, q: usize) -> Result<CsdFactors> {
    let n = u.nrows();
    if u.ncols() != n {
        return Err(Error::Dimension("csd needs a square matrix".into()));
    }
    if p == 0 || q == 0 || p >= n || q >= n {
        return Err(Error::Invalid(format!("degenerate partition p = {p}, q = {q} of {n} modes")));
    }
    let res = linalg::unitarity_residual(u);
    if res > 1e-8 {
        return Err(Error::NotUnitary(res));
    }
    let nb = n - p;
    let u11 = u.view((0, 0), (p, q)).into_owned();
    let u21 = u.view((p, 0), (nb, q)).into_owned();
    let (v_a, sv, w_a) = linalg::svd(&u11);
    let k = sv.len();

    let bpart = &u21 * &w_a;
    let mut c: Vec<f64> = (0..q).map(|j| if j < k { sv[j].min(1.0) } else { 0.0 }).collect();
    let mut s: Vec<f64> = (0..q).map(|j| col_norm(&bpart, j)).collect();
    let mut order: Vec<usize> = (0..q).filter(|&j| s[j] > 1e-13).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    order.truncate(nb);
    let mut selected = order.clone();
    selected.sort_unstable();
    let mut b_row = vec![None; q];
    for (i, &j) in selected.iter().enumerate() {
        b_row[j] = Some(i);
    }
    let mut v_b = CMat::zeros(nb, nb);
    for (done, &j) in order.iter().enumerate() {
        let mut x = bpart.columns(j, 1).into_owned();
        let mut tmp = CMat::zeros(nb, nb);
        for (t, &jj) in order[..done].iter().enumerate() {
            tmp.set_column(t, &v_b.column(b_row[jj].unwrap()));
        }
        project_out(&tmp, done, &mut x);
        let nx = col_norm(&x, 0);
        v_b.set_column(b_row[j].unwrap(), &(x / C64::new(nx, 0.0)).column(0));
    }
    // Complete V_B on the unused rows, keeping the selected columns in place.
    let used: Vec<usize> = selected.iter().map(|&j| b_row[j].unwrap()).collect();
    let mut packed = CMat::zeros(nb, nb);
    for (t, &r) in used.iter().enumerate() {
        packed.set_column(t, &v_b.column(r));
    }
    complete_basis(&mut packed, used.len());
    for (t, r) in (used.len()..nb).zip(used.len()..nb) {
        v_b.set_column(r, &packed.column(t));
    }

    let a_row: Vec<Option<usize>> = (0..q).map(|j| if j < p { Some(j) } else { None }).collect();
    for j in 0..q {
        match (a_row[j], b_row[j]) {
            (Some(_), Some(_)) => {
                let h = c[j].hypot(s[j]);
                c[j] /= h;
                s[j] /= h;
            }
            (Some(_), None) => {
                c[j] = 1.0;
                s[j] = 0.0;
            }
            (None, Some(_)) => {
                c[j] = 0.0;
                s[j] = 1.0;
            }
            (None, None) => return Err(Error::Structure("a-column without a row in R".into())),
        }
    }
    let mut r = CMat::zeros(n, n);
    let mut complement = vec![None; q];
    let mut next = q;
    for j in 0..q {
        if let Some(a) = a_row[j] {
            r[(a, j)] = C64::new(c[j], 0.0);
        }
        if let Some(b) = b_row[j] {
            r[(p + b, j)] = C64::new(s[j], 0.0);
        }
        if let (Some(a), Some(b)) = (a_row[j], b_row[j]) {
            r[(a, next)] = C64::new(-s[j], 0.0);
            r[(p + b, next)] = C64::new(c[j], 0.0);
            complement[j] = Some(next);
            next += 1;
        }
    }
    let used_a: HashSet<usize> = a_row.iter().flatten().copied().collect();
    let used_b: HashSet<usize> = b_row.iter().flatten().copied().collect();
    for a in (0..p).filter(|a| !used_a.contains(a)) {
        r[(a, next)] = ONE;
        next += 1;
    }
    for b in (0..nb).filter(|b| !used_b.contains(b)) {
        r[(p + b, next)] = ONE;
        next += 1;
    }
    debug_assert_eq!(next, n);

    let v = block_diag(&v_a, &v_b);
    let x = v.adjoint() * u;
    let x_b = x.columns(q, n - q).into_owned();
    let r_b = r.columns(q, n - q).into_owned();
    let w_b = nearest_unitary(&(x_b.adjoint() * r_b));
    Ok(CsdFactors { p, q, v_a, v_b, w_a, w_b, c, s, a_row, b_row, complement, r })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedRotation {
    #[serde(with = "crate::io::cmat_serde")]
    pub matrix: CMat,
    pub n_local_pairs: usize,
    pub n_bond_modes: usize,
    /// a-columns that stay non-local.
    pub bond_columns: Vec<usize>,
}

/// True when a-column j counts as local at tolerance ε (c_j ≥ 1 − ε, tested
/// through s_j to avoid cancellation).
fn is_local(f: &CsdFactors, j: usize, eps: f64) -> bool {
    if f.b_row[j].is_none() {
        return true;
    }
    if f.a_row[j].is_none() {
        return false;
    }
    let s_cut = (eps * (2.0 - eps)).max(0.0).sqrt();
    f.s[j] <= s_cut.max(SINE_FLOOR)
}

/// Splits the rotation pairs into local ones (c ≥ 1 − ε) and the rest.
/// `matrix` is R restricted to the rows and columns of the non-local pairs:
/// the A rows, B rows, a-columns and complementary b-columns.
pub fn reduce_rotation(f: &CsdFactors, eps: f64) -> ReducedRotation {
    let bond_columns: Vec<usize> = (0..f.q).filter(|&j| !is_local(f, j, eps)).collect();
    let mut rows: Vec<usize> = bond_columns.iter().filter_map(|&j| f.a_row[j]).collect();
    rows.extend(bond_columns.iter().filter_map(|&j| f.b_row[j].map(|b| f.p + b)));
    let mut cols = bond_columns.clone();
    cols.extend(bond_columns.iter().filter_map(|&j| f.complement[j]));
    let matrix = f.r.select_rows(&rows).select_columns(&cols);
    ReducedRotation {
        matrix,
        n_local_pairs: f.q - bond_columns.len(),
        n_bond_modes: bond_columns.len(),
        bond_columns,
    }
}

/// R with every local pair set to c = 1, s = 0.
pub fn snapped_rotation(f: &CsdFactors, eps: f64) -> CMat {
    let mut r = f.r.clone();
    for j in (0..f.q).filter(|&j| is_local(f, j, eps)) {
        if let (Some(a), Some(b), Some(k)) = (f.a_row[j], f.b_row[j], f.complement[j]) {
            r[(a, j)] = ONE;
            r[(f.p + b, j)] = ZERO;
            r[(a, k)] = ZERO;
            r[(f.p + b, k)] = ONE;
        }
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeBlock {
    pub id: String,
    pub site: usize,
    pub layer: usize,
    pub unitary: ModeUnitary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutSpectrum {
    /// Cut between site `cut` and `cut + 1`.
    pub cut: usize,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub n_local_pairs: usize,
    pub n_bond_modes: usize,
}

/// Mode network whose blocks are listed in an order compatible with the DAG.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeNetwork {
    pub blocks: Vec<ModeBlock>,
    pub in_labels: Vec<String>,
    pub out_labels: Vec<String>,
    pub cuts: Vec<CutSpectrum>,
    pub epsilon: f64,
    pub cost: CostReport,
}

impl ModeNetwork {
    /// Single-block network.
    pub fn single(u: ModeUnitary) -> Self {
        ModeNetwork {
            in_labels: u.in_labels.clone(),
            out_labels: u.out_labels.clone(),
            blocks: vec![ModeBlock { id: "U".into(), site: 0, layer: 0, unitary: u }],
            cuts: Vec::new(),
            epsilon: 0.0,
            cost: CostReport::from_edges([]),
        }
    }

    /// Contracts the blocks in order by the mode rules and lists the result
    /// in the network's label order.
    pub fn contract(&self) -> Result<ModeUnitary> {
        let mut it = self.blocks.iter();
        let first = it.next().ok_or_else(|| Error::Invalid("empty mode network".into()))?;
        let mut acc = first.unitary.clone();
        for b in it {
            let shared: Vec<String> =
                acc.out_labels.iter().filter(|l| b.unitary.in_labels.contains(l)).cloned().collect();
            acc = if shared.is_empty() {
                mode_direct_sum(&b.unitary, &acc)?
            } else {
                mode_partial_contract(&b.unitary, &acc, &shared)?
            };
        }
        acc.reordered(&self.in_labels, &self.out_labels)
    }

    pub fn bond_modes(&self) -> Vec<usize> {
        self.cuts.iter().map(|c| c.n_bond_modes).collect()
    }
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

/// Sweeps CSD cuts left to right. At cut i the current unitary acts on the
/// bond modes from the previous cut followed by the modes of sites i, i+1, ….
/// Its CSD with A = a = (bond modes + site i) gives a bottom block W_a† and a
/// top block V_A at site i; the local pairs pass straight from W_a† to V_A and
/// the non-local ones become the bond to the rest, which is
/// (I ⊕ V_B) R_reduced (I ⊕ W_b†).
pub fn decompose_gaussian(u: &CMat, modes_per_site: &[usize], eps: f64) -> Result<ModeNetwork> {
    let n = u.nrows();
    if modes_per_site.is_empty() || modes_per_site.contains(&0) || modes_per_site.iter().sum::<usize>() != n {
        return Err(Error::Invalid(format!("partition {modes_per_site:?} does not cover {n} modes")));
    }
    let in_labels = labels("in", n);
    let out_labels = labels("out", n);
    let mut cur = ModeUnitary::new(u.clone(), in_labels.clone(), out_labels.clone())?;
    let mut bottoms = Vec::new();
    let mut tops = Vec::new();
    let mut cuts = Vec::new();
    let mut k_prev = 0;
    let last = modes_per_site.len() - 1;
    for (site, &ns) in modes_per_site[..last].iter().enumerate() {
        let p = k_prev + ns;
        let m = cur.n_modes();
        let f = csd(&cur.matrix, p, p)?;
        let red = reduce_rotation(&f, eps);
        let bond: HashMap<usize, usize> = red.bond_columns.iter().enumerate().map(|(t, &j)| (j, t)).collect();
        let mid = |j: usize| match bond.get(&j) {
            Some(t) => (format!("r{site}.{t}"), format!("l{site}.{t}")),
            None => (format!("v{site}.{j}"), format!("v{site}.{j}")),
        };
        let w_out: Vec<String> = (0..p).map(|j| mid(j).0).collect();
        let v_in: Vec<String> = (0..p).map(|j| mid(j).1).collect();
        bottoms.push(ModeBlock {
            id: format!("W{site}"),
            site,
            layer: 0,
            unitary: ModeUnitary::new(f.w_a.adjoint(), cur.in_labels[..p].to_vec(), w_out)?,
        });
        tops.push(ModeBlock {
            id: format!("V{site}"),
            site,
            layer: 1,
            unitary: ModeUnitary::new(f.v_a.clone(), v_in, cur.out_labels[..p].to_vec())?,
        });
        let r = snapped_rotation(&f, eps);
        let k = red.n_bond_modes;
        let mut rows: Vec<usize> = red.bond_columns.iter().map(|&j| f.a_row[j].unwrap()).collect();
        rows.extend(p..m);
        let mut cols = red.bond_columns.clone();
        cols.extend(p..m);
        let r_sub = r.select_rows(&rows).select_columns(&cols);
        let eye = CMat::identity(k, k);
        let next = block_diag(&eye, &f.v_b) * r_sub * block_diag(&eye, &f.w_b.adjoint());
        let next_in: Vec<String> =
            (0..k).map(|t| format!("r{site}.{t}")).chain(cur.in_labels[p..].iter().cloned()).collect();
        let next_out: Vec<String> =
            (0..k).map(|t| format!("l{site}.{t}")).chain(cur.out_labels[p..].iter().cloned()).collect();
        cuts.push(CutSpectrum { cut: site, c: f.c.clone(), s: f.s.clone(), n_local_pairs: red.n_local_pairs, n_bond_modes: k });
        cur = ModeUnitary::new(next, next_in, next_out)?;
        k_prev = k;
    }
    let mut blocks = bottoms;
    blocks.push(ModeBlock { id: format!("U{last}"), site: last, layer: 0, unitary: cur });
    blocks.extend(tops.into_iter().rev());
    let one = |k: usize| FlowValue::Exact(Ratio::from_integer(k as i64));
    let cost = CostReport::from_edges(cuts.iter().filter(|c| c.n_bond_modes > 0).flat_map(|c| {
        [
            (format!("r{}", c.cut), one(c.n_bond_modes), 1.0),
            (format!("l{}", c.cut), one(c.n_bond_modes), 1.0),
        ]
    }));
    Ok(ModeNetwork { blocks, in_labels, out_labels, cuts, epsilon: eps, cost })
}

/// Rank of the off-diagonal block U^{Ba} for every left-to-right cut.
pub fn cut_ranks(u: &CMat, modes_per_site: &[usize], tol: f64) -> Vec<usize> {
    let n = u.nrows();
    let mut left = 0;
    let mut out = Vec::new();
    for &ns in &modes_per_site[..modes_per_site.len().saturating_sub(1)] {
        left += ns;
        out.push(linalg::rank(&u.view((left, 0), (n - left, left)).into_owned(), tol));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator {
    pub n_modes: usize,
    pub matrix: CMat,
}

fn fock_budget(n: usize) -> Result<()> {
    if n > MAX_FOCK_MODES {
        return Err(Error::Budget { needed: 1 << (2 * n), cap: 1 << (2 * MAX_FOCK_MODES) });
    }
    Ok(())
}

fn bit(x: usize, mode: usize, n: usize) -> bool {
    (x >> (n - 1 - mode)) & 1 == 1
}

fn modes_of(x: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|&a| bit(x, a, n)).collect()
}

/// ρ(U) in the occupation basis: ⟨B|ρ(U)|S⟩ = det U[B, S] for occupied sets
/// of equal size, zero otherwise.
pub fn many_body_rep(u: &CMat) -> Result<FockOperator> {
    let n = u.nrows();
    fock_budget(n)?;
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    let mut by_count: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for x in 0..dim {
        by_count[x.count_ones() as usize].push(x);
    }
    for group in &by_count {
        let sets: Vec<Vec<usize>> = group.iter().map(|&x| modes_of(x, n)).collect();
        for (ci, s) in sets.iter().enumerate() {
            let cols = u.select_columns(s);
            for (ri, b) in sets.iter().enumerate() {
                let d = if s.is_empty() { ONE } else { cols.select_rows(b).determinant() };
                m[(group[ri], group[ci])] = d;
            }
        }
    }
    Ok(FockOperator { n_modes: n, matrix: m })
}

/// Ĥ = Σ h_ab c†_a c_b with Jordan-Wigner signs.
pub fn quadratic_hamiltonian(h: &CMat) -> Result<CMat> {
    let n = h.nrows();
    fock_budget(n)?;
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    let sign = |x: usize, a: usize| if (0..a).filter(|&b| bit(x, b, n)).count() % 2 == 0 { 1.0 } else { -1.0 };
    for x in 0..dim {
        for b in (0..n).filter(|&b| bit(x, b, n)) {
            let s1 = sign(x, b);
            let y = x ^ (1 << (n - 1 - b));
            for a in (0..n).filter(|&a| !bit(y, a, n)) {
                let s2 = sign(y, a);
                let z = y | (1 << (n - 1 - a));
                m[(z, x)] += h[(a, b)] * (s1 * s2);
            }
        }
    }
    Ok(m)
}

/// e^{iĤ} for Hermitian h, through the spectral decomposition of Ĥ.
pub fn fock_exp_i(h: &CMat) -> Result<FockOperator> {
    let n = h.nrows();
    let big = quadratic_hamiltonian(h)?;
    let (vals, q) = linalg::hermitian_eigen(&big);
    let phases = nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&e| C64::new(0.0, e).exp()));
    let m = &q * CMat::from_diagonal(&phases) * q.adjoint();
    Ok(FockOperator { n_modes: n, matrix: m })
}

/// h = −i log U on the principal branch, with a flag telling whether an
/// eigenvalue at −1 had to be nudged by 1e-8 to pick a side of the cut.
pub fn principal_log(u: &CMat, allow_nudge: bool) -> Result<(CMat, bool)> {
    let (lams, q) = linalg::normal_eigen(u);
    let mut nudged = false;
    let mut phases = Vec::with_capacity(u.nrows());
    for lam in lams {
        let mut arg = lam.arg();
        if (lam + ONE).norm() < 1e-12 {
            if !allow_nudge {
                return Err(Error::Infeasible("eigenvalue −1 sits on the branch cut of the logarithm".into()));
            }
            arg = std::f64::consts::PI - 1e-8;
            nudged = true;
        }
        phases.push(C64::new(arg, 0.0));
    }
    let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(phases));
    Ok((&q * d * q.adjoint(), nudged))
}

/// ρ(U) built as e^{iĤ} from the principal logarithm; a cross-check of
/// [`many_body_rep`].
pub fn many_body_rep_via_log(u: &CMat, allow_nudge: bool) -> Result<FockOperator> {
    let (h, _) = principal_log(u, allow_nudge)?;
    fock_exp_i(&h)
}

pub fn number_operator(n: usize) -> CMat {
    let dim = 1usize << n;
    CMat::from_fn(dim, dim, |r, c| if r == c { C64::new(r.count_ones() as f64, 0.0) } else { ZERO })
}

/// Fermionic relabeling F with F|n⟩ = ±|n'⟩, n'_i = n_{perm[i]}, the sign
/// being the parity of reordering the occupied modes.
pub fn fermionic_permutation(n: usize, perm: &[usize]) -> CMat {
    let dim = 1usize << n;
    let mut inv = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let mut m = CMat::zeros(dim, dim);
    for x in 0..dim {
        let occ = modes_of(x, n);
        let new: Vec<usize> = occ.iter().map(|&a| inv[a]).collect();
        let inversions = (0..new.len()).map(|i| (i + 1..new.len()).filter(|&j| new[i] > new[j]).count()).sum::<usize>();
        let y = new.iter().fold(0usize, |acc, &i| acc | (1 << (n - 1 - i)));
        m[(y, x)] = if inversions % 2 == 0 { ONE } else { -ONE };
    }
    m
}

/// Embeds a Fock operator on k modes into n modes at `positions` (in the
/// operator's mode order): F† (O ⊗ I) F with F moving those modes to the front.
pub fn embed_fock(op: &CMat, positions: &[usize], n: usize) -> CMat {
    let mut perm = positions.to_vec();
    perm.extend((0..n).filter(|a| !positions.contains(a)));
    let f = fermionic_permutation(n, &perm);
    let rest = 1usize << (n - positions.len());
    let big = linalg::kron(op, &CMat::identity(rest, rest));
    f.adjoint() * big * f
}

/// Compares ρ of the mode-level contraction with the product of block-wise
/// Fock operators, each embedded with fermionic signs on a register that
/// tracks which label every mode slot currently holds. Residual is modulo a
/// global phase.
pub fn verify_mode_network_homomorphism(mnet: &ModeNetwork) -> Result<f64> {
    let n = mnet.in_labels.len();
    fock_budget(n)?;
    let contracted = mnet.contract()?;
    let want = many_body_rep(&contracted.matrix)?.matrix;
    let dim = 1usize << n;
    let mut reg = mnet.in_labels.clone();
    let mut total = CMat::identity(dim, dim);
    for b in &mnet.blocks {
        let u = &b.unitary;
        let pos: Vec<usize> = u
            .in_labels
            .iter()
            .map(|l| reg.iter().position(|x| x == l).ok_or_else(|| Error::Structure(format!("mode `{l}` is not live"))))
            .collect::<Result<_>>()?;
        let local = many_body_rep(&u.matrix)?.matrix;
        total = embed_fock(&local, &pos, n) * total;
        for (slot, l) in pos.iter().zip(&u.out_labels) {
            reg[*slot] = l.clone();
        }
    }
    let perm: Vec<usize> = mnet
        .out_labels
        .iter()
        .map(|l| reg.iter().position(|x| x == l).ok_or_else(|| Error::Structure(format!("output `{l}` missing"))))
        .collect::<Result<_>>()?;
    let got = fermionic_permutation(n, &perm) * total;
    Ok(linalg::phase_distance(&got, &want))
}
