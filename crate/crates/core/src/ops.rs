//! Dense operators on a few lattice sites: embedding, partial traces and
//! support tightening.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, frobenius, CMat, C64, ZERO};

/// Operator on an ordered list of sites.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DenseOperator {
    #[serde(skip)]
    pub matrix: CMat,
    pub sites: Vec<i64>,
    pub dims: Vec<usize>,
}

/// Threshold on the relative partial-trace deviation below which a site is
/// treated as carrying the identity.
pub const SUPPORT_TOL: f64 = 1e-10;

impl DenseOperator {
    pub fn new(matrix: CMat, sites: Vec<i64>, dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if sites.len() != dims.len() || matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Dimension(format!(
                "operator is {}x{}, sites {:?} with dims {:?}",
                matrix.nrows(),
                matrix.ncols(),
                sites,
                dims
            )));
        }
        Ok(DenseOperator { matrix, sites, dims })
    }

    pub fn single(m: CMat, site: i64) -> Self {
        let d = m.nrows();
        DenseOperator { matrix: m, sites: vec![site], dims: vec![d] }
    }

    /// Tensor product of qubit Paulis, e.g. `[(1, 'X'), (2, 'Z')]`.
    pub fn pauli_string(terms: &[(i64, char)]) -> Self {
        let mut terms = terms.to_vec();
        terms.sort_by_key(|t| t.0);
        let ms: Vec<CMat> = terms.iter().map(|(_, p)| linalg::pauli(pauli_index(*p))).collect();
        DenseOperator {
            matrix: linalg::kron_all(&ms),
            sites: terms.iter().map(|t| t.0).collect(),
            dims: vec![2; terms.len()],
        }
    }

    /// Embeds into the ordered site list `sites` (a superset) with `dims`.
    pub fn embed(&self, sites: &[i64], dims: &[usize]) -> Result<CMat> {
        let mut pos = Vec::new();
        for (s, d) in self.sites.iter().zip(&self.dims) {
            let p = sites
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::Invalid(format!("operator site {s} outside the network")))?;
            if dims[p] != *d {
                return Err(Error::Dimension(format!("site {s}: operator dim {d}, network dim {}", dims[p])));
            }
            pos.push(p);
        }
        let rest: Vec<usize> = (0..sites.len()).filter(|p| !pos.contains(p)).collect();
        let rest_dim: usize = rest.iter().map(|&p| dims[p]).product();
        let big = linalg::kron(&self.matrix, &CMat::identity(rest_dim, rest_dim));
        // big acts on factors ordered (pos..., rest...); reorder to `sites`.
        let order: Vec<usize> = pos.iter().chain(rest.iter()).copied().collect();
        let cur_dims: Vec<usize> = order.iter().map(|&p| dims[p]).collect();
        let mut inv = vec![0; order.len()];
        for (k, &p) in order.iter().enumerate() {
            inv[p] = k;
        }
        Ok(linalg::permute_operator(&big, &cur_dims, &inv))
    }

    /// Drops sites on which the operator acts as the identity.
    pub fn tighten(&self) -> DenseOperator {
        let mut cur = self.clone();
        let mut k = 0;
        while k < cur.sites.len() {
            let keep: Vec<usize> = (0..cur.sites.len()).filter(|&j| j != k).collect();
            if outside_weight(&cur.matrix, &cur.dims, &keep) <= SUPPORT_TOL {
                let d = cur.dims[k] as f64;
                cur = DenseOperator {
                    matrix: partial_trace(&cur.matrix, &cur.dims, &keep).map(|z| z / d),
                    sites: keep.iter().map(|&j| cur.sites[j]).collect(),
                    dims: keep.iter().map(|&j| cur.dims[j]).collect(),
                };
            } else {
                k += 1;
            }
        }
        cur
    }

    pub fn distance(&self, other: &DenseOperator) -> f64 {
        let mut sites: Vec<i64> = self.sites.iter().chain(&other.sites).copied().collect();
        sites.sort();
        sites.dedup();
        let dims: Vec<usize> = sites
            .iter()
            .map(|s| {
                self.sites
                    .iter()
                    .position(|x| x == s)
                    .map(|p| self.dims[p])
                    .or_else(|| other.sites.iter().position(|x| x == s).map(|p| other.dims[p]))
                    .unwrap()
            })
            .collect();
        match (self.embed(&sites, &dims), other.embed(&sites, &dims)) {
            (Ok(a), Ok(b)) => frobenius(&(a - b)),
            _ => f64::INFINITY,
        }
    }
}

pub fn pauli_index(p: char) -> usize {
    match p.to_ascii_uppercase() {
        'I' => 0,
        'X' => 1,
        'Y' => 2,
        'Z' => 3,
        _ => panic!("unknown Pauli `{p}`"),
    }
}

/// Partial trace keeping the factors `keep` (in the given order) of an
/// operator on factors with `dims`.
pub fn partial_trace(m: &CMat, dims: &[usize], keep: &[usize]) -> CMat {
    let n = dims.len();
    let traced: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
    let kd: usize = keep.iter().map(|&k| dims[k]).product();
    let td: usize = traced.iter().map(|&k| dims[k]).product();
    let strides = {
        let mut s = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * dims[k + 1];
        }
        s
    };
    let offset = |idx_keep: usize, idx_tr: usize| -> usize {
        let mut off = 0;
        let mut r = idx_keep;
        for &k in keep.iter().rev() {
            off += (r % dims[k]) * strides[k];
            r /= dims[k];
        }
        let mut r = idx_tr;
        for &k in traced.iter().rev() {
            off += (r % dims[k]) * strides[k];
            r /= dims[k];
        }
        off
    };
    let mut out = CMat::from_element(kd, kd, ZERO);
    for a in 0..kd {
        for b in 0..kd {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..td {
                acc += m[(offset(a, t), offset(b, t))];
            }
            out[(a, b)] = acc;
        }
    }
    out
}


/// ‖X − E(X)‖_F / ‖X‖_F where E(X) = Tr_rest(X)/d_rest ⊗ I_rest is the
/// conditional expectation onto the factors `keep`.
pub fn outside_weight(x: &CMat, dims: &[usize], keep: &[usize]) -> f64 {
    let norm = crate::linalg::frobenius(x);
    if norm == 0.0 {
        return 0.0;
    }
    let rest: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let dr: usize = rest.iter().map(|&k| dims[k]).product();
    let order: Vec<usize> = keep.iter().chain(rest.iter()).copied().collect();
    let xp = crate::linalg::permute_operator(x, dims, &order);
    let reduced = partial_trace(x, dims, keep) / C64::new(dr as f64, 0.0);
    let e = crate::linalg::kron(&reduced, &CMat::identity(dr, dr));
    crate::linalg::frobenius(&(xp - e)) / norm
}
