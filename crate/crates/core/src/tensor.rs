//! Directed unitary tensors: dense storage, reshaping, leg fusion and
//! pairwise contraction.
//!
//! Data is stored row-major in declared leg order (last leg fastest). The
//! matrix of a tensor has rows indexed by its outgoing legs and columns by its
//! incoming legs, each fused in declared order.

use std::collections::HashSet;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ONE, ZERO};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Incoming,
    Outgoing,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Incoming => Direction::Outgoing,
            Direction::Outgoing => Direction::Incoming,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LegSpec {
    pub id: String,
    pub dim: usize,
    pub direction: Direction,
}

impl LegSpec {
    pub fn incoming(id: impl Into<String>, dim: usize) -> Self {
        LegSpec { id: id.into(), dim, direction: Direction::Incoming }
    }

    pub fn outgoing(id: impl Into<String>, dim: usize) -> Self {
        LegSpec { id: id.into(), dim, direction: Direction::Outgoing }
    }
}

/// A dense tensor with directed legs and no unitarity guarantee.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    legs: Vec<LegSpec>,
    data: Vec<C64>,
    pub label: String,
}

pub type GeneralTensor = Tensor;

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

impl Tensor {
    pub fn new(legs: Vec<LegSpec>, data: Vec<C64>, label: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for l in &legs {
            if l.dim == 0 {
                return Err(Error::Dimension(format!("leg `{}` has dim 0", l.id)));
            }
            if !seen.insert(l.id.as_str()) {
                return Err(Error::DuplicateLeg(l.id.clone()));
            }
        }
        let size: usize = legs.iter().map(|l| l.dim).product();
        if size != data.len() {
            return Err(Error::Dimension(format!(
                "data length {} does not match leg dims (expected {size})",
                data.len()
            )));
        }
        Ok(Tensor { legs, data, label: label.into() })
    }

    /// Rank-0 tensor holding a single scalar.
    pub fn scalar(z: C64) -> Self {
        Tensor { legs: Vec::new(), data: vec![z], label: String::new() }
    }

    /// Builds a tensor whose matrix (rows = outgoing, cols = incoming, declared
    /// order) is `m`. Inverse of [`Tensor::matrix`].
    pub fn from_matrix(legs: Vec<LegSpec>, m: &CMat, label: impl Into<String>) -> Result<Self> {
        let (outs, ins) = split_dirs(&legs);
        let rows: usize = outs.iter().map(|&i| legs[i].dim).product();
        let cols: usize = ins.iter().map(|&i| legs[i].dim).product();
        if m.nrows() != rows || m.ncols() != cols {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, legs require {rows}x{cols}",
                m.nrows(),
                m.ncols()
            )));
        }
        let order: Vec<usize> = outs.iter().chain(ins.iter()).copied().collect();
        let grouped_legs: Vec<LegSpec> = order.iter().map(|&i| legs[i].clone()).collect();
        let data = m.transpose().as_slice().to_vec();
        let grouped = Tensor::new(grouped_legs, data, label)?;
        let mut inverse = vec![0; order.len()];
        for (pos, &i) in order.iter().enumerate() {
            inverse[i] = pos;
        }
        Ok(grouped.permute(&inverse))
    }

    /// Identity routing: each (incoming, outgoing) pair is wired straight
    /// through; both lists must have equal dims pairwise.
    pub fn identity(pairs: &[(&str, &str, usize)], label: &str) -> Self {
        let mut legs = Vec::new();
        for (i, _, d) in pairs {
            legs.push(LegSpec::incoming(*i, *d));
        }
        for (_, o, d) in pairs {
            legs.push(LegSpec::outgoing(*o, *d));
        }
        let n: usize = pairs.iter().map(|p| p.2).product();
        Tensor::from_matrix(legs, &CMat::identity(n, n), label).expect("consistent identity")
    }

    pub fn legs(&self) -> &[LegSpec] {
        &self.legs
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn dims(&self) -> Vec<usize> {
        self.legs.iter().map(|l| l.dim).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn leg_index(&self, id: &str) -> Result<usize> {
        self.legs
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| Error::UnknownLeg(id.to_string()))
    }

    pub fn leg(&self, id: &str) -> Result<&LegSpec> {
        Ok(&self.legs[self.leg_index(id)?])
    }

    pub fn in_dim(&self) -> usize {
        self.legs.iter().filter(|l| l.direction == Direction::Incoming).map(|l| l.dim).product()
    }

    pub fn out_dim(&self) -> usize {
        self.legs.iter().filter(|l| l.direction == Direction::Outgoing).map(|l| l.dim).product()
    }

    /// True when the in/out dimension products agree (a square matrix).
    pub fn is_balanced(&self) -> bool {
        self.in_dim() == self.out_dim()
    }

    pub fn rename_leg(&mut self, old: &str, new: impl Into<String>) -> Result<()> {
        let new = new.into();
        let i = self.leg_index(old)?;
        if self.legs.iter().enumerate().any(|(j, l)| j != i && l.id == new) {
            return Err(Error::DuplicateLeg(new));
        }
        self.legs[i].id = new;
        Ok(())
    }

    /// Reorders legs: the k-th leg of the result is `self.legs[order[k]]`.
    pub fn permute(&self, order: &[usize]) -> Tensor {
        assert_eq!(order.len(), self.legs.len(), "permutation length");
        let dims = self.dims();
        let old_strides = strides(&dims);
        let new_dims: Vec<usize> = order.iter().map(|&i| dims[i]).collect();
        let step: Vec<usize> = order.iter().map(|&i| old_strides[i]).collect();
        let legs: Vec<LegSpec> = order.iter().map(|&i| self.legs[i].clone()).collect();
        if order.iter().enumerate().all(|(k, &i)| k == i) {
            return Tensor { legs, data: self.data.clone(), label: self.label.clone() };
        }
        let n = self.data.len();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; new_dims.len()];
        let mut off = 0usize;
        for _ in 0..n {
            data.push(self.data[off]);
            for k in (0..new_dims.len()).rev() {
                idx[k] += 1;
                off += step[k];
                if idx[k] < new_dims[k] {
                    break;
                }
                off -= step[k] * new_dims[k];
                idx[k] = 0;
            }
        }
        Tensor { legs, data, label: self.label.clone() }
    }

    /// Matrix with rows = fused outgoing multi-index, cols = fused incoming.
    pub fn matrix(&self) -> CMat {
        let (outs, ins) = split_dirs(&self.legs);
        let rows: usize = outs.iter().map(|&i| self.legs[i].dim).product();
        let cols: usize = ins.iter().map(|&i| self.legs[i].dim).product();
        let order: Vec<usize> = outs.into_iter().chain(ins).collect();
        let p = self.permute(&order);
        CMat::from_row_slice(rows, cols, &p.data)
    }

    /// Fuses `ids` (same direction) into one leg named `new_id`, placed at the
    /// position of the first listed leg. The fused index is row-major in the
    /// listed order.
    pub fn merge_legs(&self, ids: &[&str], new_id: &str) -> Result<Tensor> {
        if ids.is_empty() {
            return Err(Error::Invalid("no legs to merge".into()));
        }
        let idx: Vec<usize> = ids.iter().map(|id| self.leg_index(id)).collect::<Result<_>>()?;
        let dir = self.legs[idx[0]].direction;
        if idx.iter().any(|&i| self.legs[i].direction != dir) {
            return Err(Error::Direction("merged legs must share a direction".into()));
        }
        let set: HashSet<usize> = idx.iter().copied().collect();
        if set.len() != idx.len() {
            return Err(Error::DuplicateLeg(ids.join(",")));
        }
        if self.legs.iter().enumerate().any(|(i, l)| !set.contains(&i) && l.id == new_id) {
            return Err(Error::DuplicateLeg(new_id.to_string()));
        }
        let first = *idx.iter().min().unwrap();
        let mut order = Vec::new();
        for i in 0..self.legs.len() {
            if i == first {
                order.extend(idx.iter().copied());
            } else if !set.contains(&i) {
                order.push(i);
            }
        }
        let p = self.permute(&order);
        let dim: usize = idx.iter().map(|&i| self.legs[i].dim).product();
        let mut legs = Vec::new();
        let mut k = 0;
        while k < p.legs.len() {
            if k == order.iter().position(|&o| o == idx[0]).unwrap() {
                legs.push(LegSpec { id: new_id.to_string(), dim, direction: dir });
                k += idx.len();
            } else {
                legs.push(p.legs[k].clone());
                k += 1;
            }
        }
        Tensor::new(legs, p.data, self.label.clone())
    }

    /// Splits leg `id` into factors `(new_id, dim)`, row-major.
    pub fn split_leg(&self, id: &str, factors: &[(&str, usize)]) -> Result<Tensor> {
        let i = self.leg_index(id)?;
        let prod: usize = factors.iter().map(|f| f.1).product();
        if prod != self.legs[i].dim {
            return Err(Error::Dimension(format!(
                "factors multiply to {prod}, leg `{id}` has dim {}",
                self.legs[i].dim
            )));
        }
        let dir = self.legs[i].direction;
        let mut legs = self.legs[..i].to_vec();
        legs.extend(factors.iter().map(|(n, d)| LegSpec { id: n.to_string(), dim: *d, direction: dir }));
        legs.extend(self.legs[i + 1..].iter().cloned());
        Tensor::new(legs, self.data.clone(), self.label.clone())
    }

    /// Sums over the diagonal of legs `a` and `b` (opposite directions).
    pub fn trace_pair(&self, a: &str, b: &str) -> Result<Tensor> {
        let ia = self.leg_index(a)?;
        let ib = self.leg_index(b)?;
        if ia == ib || self.legs[ia].direction == self.legs[ib].direction {
            return Err(Error::Direction(format!("cannot trace `{a}` with `{b}`")));
        }
        if self.legs[ia].dim != self.legs[ib].dim {
            return Err(Error::Dimension(format!("trace of `{a}` with `{b}`")));
        }
        let rest: Vec<usize> = (0..self.legs.len()).filter(|&k| k != ia && k != ib).collect();
        let mut order = rest.clone();
        order.push(ia);
        order.push(ib);
        let p = self.permute(&order);
        let d = self.legs[ia].dim;
        let outer = p.data.len() / (d * d);
        let data: Vec<C64> = (0..outer)
            .map(|o| (0..d).map(|k| p.data[o * d * d + k * d + k]).sum())
            .collect();
        let legs = rest.iter().map(|&k| self.legs[k].clone()).collect();
        Tensor::new(legs, data, self.label.clone())
    }

    pub fn conj(&self) -> Tensor {
        Tensor {
            legs: self.legs.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
            label: self.label.clone(),
        }
    }

    /// Conjugate transpose: conjugated data with every leg direction flipped.
    pub fn dagger(&self) -> Tensor {
        let mut t = self.conj();
        for l in &mut t.legs {
            l.direction = l.direction.flip();
        }
        t
    }

    pub fn scale(&self, z: C64) -> Tensor {
        Tensor {
            legs: self.legs.clone(),
            data: self.data.iter().map(|x| x * z).collect(),
            label: self.label.clone(),
        }
    }
}

fn split_dirs(legs: &[LegSpec]) -> (Vec<usize>, Vec<usize>) {
    let outs = (0..legs.len()).filter(|&i| legs[i].direction == Direction::Outgoing).collect();
    let ins = (0..legs.len()).filter(|&i| legs[i].direction == Direction::Incoming).collect();
    (outs, ins)
}

/// ‖Ũ†Ũ − I‖_F of the reshaped matrix; +∞ when in/out dims disagree.
pub fn local_unitarity_residual(t: &Tensor) -> f64 {
    if !t.is_balanced() {
        return f64::INFINITY;
    }
    linalg::unitarity_residual(&t.matrix())
}

/// Contracts the listed leg pairs `(leg of a, leg of b)`; each pair must join
/// legs of opposite direction and equal dim. Remaining legs keep their ids,
/// `a`'s first.
pub fn contract(a: &Tensor, b: &Tensor, pairs: &[(&str, &str)]) -> Result<Tensor> {
    let mut ia = Vec::new();
    let mut ib = Vec::new();
    for (la, lb) in pairs {
        let i = a.leg_index(la)?;
        let j = b.leg_index(lb)?;
        if a.legs[i].direction == b.legs[j].direction {
            return Err(Error::Direction(format!(
                "`{la}` and `{lb}` are both {:?}",
                a.legs[i].direction
            )));
        }
        if a.legs[i].dim != b.legs[j].dim {
            return Err(Error::Dimension(format!(
                "`{la}` has dim {}, `{lb}` has dim {}",
                a.legs[i].dim, b.legs[j].dim
            )));
        }
        ia.push(i);
        ib.push(j);
    }
    let free_a: Vec<usize> = (0..a.legs.len()).filter(|k| !ia.contains(k)).collect();
    let free_b: Vec<usize> = (0..b.legs.len()).filter(|k| !ib.contains(k)).collect();
    let mut ids = HashSet::new();
    for &k in &free_a {
        ids.insert(a.legs[k].id.as_str());
    }
    for &k in &free_b {
        if !ids.insert(b.legs[k].id.as_str()) {
            return Err(Error::DuplicateLeg(b.legs[k].id.clone()));
        }
    }
    let shared: usize = ia.iter().map(|&i| a.legs[i].dim).product();
    let ra: usize = free_a.iter().map(|&i| a.legs[i].dim).product();
    let cb: usize = free_b.iter().map(|&i| b.legs[i].dim).product();
    let pa = a.permute(&free_a.iter().chain(ia.iter()).copied().collect::<Vec<_>>());
    let pb = b.permute(&ib.iter().chain(free_b.iter()).copied().collect::<Vec<_>>());
    let ma = CMat::from_row_slice(ra, shared, &pa.data);
    let mb = CMat::from_row_slice(shared, cb, &pb.data);
    let prod = ma * mb;
    let data = prod.transpose().as_slice().to_vec();
    let legs = free_a
        .iter()
        .map(|&k| a.legs[k].clone())
        .chain(free_b.iter().map(|&k| b.legs[k].clone()))
        .collect();
    Tensor::new(legs, data, format!("{}*{}", a.label, b.label))
}

/// Contracts outgoing leg `out_leg` of `t1` with incoming leg `in_leg` of `t2`.
pub fn contract_pair(t1: &Tensor, out_leg: &str, t2: &Tensor, in_leg: &str) -> Result<Tensor> {
    let l1 = t1.leg(out_leg)?;
    let l2 = t2.leg(in_leg)?;
    if l1.direction != Direction::Outgoing || l2.direction != Direction::Incoming {
        return Err(Error::Direction(format!(
            "an incoming leg must be contracted with an outgoing leg (`{out_leg}` is {:?}, `{in_leg}` is {:?})",
            l1.direction, l2.direction
        )));
    }
    contract(t1, t2, &[(out_leg, in_leg)])
}

/// Seeded Haar-random unitary tensor with legs `i0.., o0..` (incoming first).
pub fn haar_random_tensor(in_dims: &[usize], out_dims: &[usize], seed: u64) -> Result<UnitaryTensor> {
    let n: usize = in_dims.iter().product();
    let m: usize = out_dims.iter().product();
    if n != m {
        return Err(Error::Dimension(format!("in product {n} differs from out product {m}")));
    }
    let legs = in_dims
        .iter()
        .enumerate()
        .map(|(k, &d)| LegSpec::incoming(format!("i{k}"), d))
        .chain(out_dims.iter().enumerate().map(|(k, &d)| LegSpec::outgoing(format!("o{k}"), d)))
        .collect();
    let u = linalg::haar_unitary(n, &mut linalg::rng(seed));
    UnitaryTensor::new(Tensor::from_matrix(legs, &u, "haar")?, DEFAULT_TOL)
}

/// A tensor whose reshaped matrix is unitary within the construction tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryTensor(Tensor);

impl UnitaryTensor {
    pub fn new(t: Tensor, tol: f64) -> Result<Self> {
        let r = local_unitarity_residual(&t);
        if r.is_infinite() {
            return Err(Error::Dimension(format!(
                "outgoing dim {} differs from incoming dim {}",
                t.out_dim(),
                t.in_dim()
            )));
        }
        if r > tol {
            return Err(Error::NotUnitary(r));
        }
        Ok(UnitaryTensor(t))
    }

    pub fn into_inner(self) -> Tensor {
        self.0
    }
}

impl Deref for UnitaryTensor {
    type Target = Tensor;
    fn deref(&self) -> &Tensor {
        &self.0
    }
}

/// Tensor from a gate matrix acting on ordered inputs → ordered outputs.
pub fn gate_tensor(ins: &[(&str, usize)], outs: &[(&str, usize)], m: &CMat, label: &str) -> Result<Tensor> {
    let legs = ins
        .iter()
        .map(|(n, d)| LegSpec::incoming(*n, *d))
        .chain(outs.iter().map(|(n, d)| LegSpec::outgoing(*n, *d)))
        .collect();
    Tensor::from_matrix(legs, m, label)
}

pub fn basis_vector(dim: usize, k: usize) -> Vec<C64> {
    let mut v = vec![ZERO; dim];
    v[k] = ONE;
    v
}
