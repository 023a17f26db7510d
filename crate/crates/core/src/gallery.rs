//! Deterministic builders for the example networks used throughout the crate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{wrap_horizontal, Edge, Network, Side};
use crate::linalg::{self, CMat, ONE};
use crate::tensor::{gate_tensor, LegSpec, Tensor};

/// Permutation matrix sending the multi-index `x` over `in_dims` to `f(x)`
/// over `out_dims`.
pub fn routing(in_dims: &[usize], out_dims: &[usize], f: impl Fn(&[usize]) -> Vec<usize>) -> CMat {
    let n: usize = in_dims.iter().product();
    let m: usize = out_dims.iter().product();
    let mut out = CMat::zeros(m, n);
    let mut digits = vec![0usize; in_dims.len()];
    for col in 0..n {
        let mut r = col;
        for k in (0..in_dims.len()).rev() {
            digits[k] = r % in_dims[k];
            r /= in_dims[k];
        }
        let y = f(&digits);
        let row = y.iter().zip(out_dims).fold(0, |acc, (&v, &d)| acc * d + v);
        out[(row, col)] = ONE;
    }
    out
}

/// Leg dims of one bilayer column. Bottom: (s_in, l_in) → (r_out, v);
/// top: (v, r_in) → (s_out, l_out).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnDims {
    pub s_in: usize,
    pub l_in: usize,
    pub r_out: usize,
    pub v: usize,
    pub r_in: usize,
    pub s_out: usize,
    pub l_out: usize,
}

/// One column of a bilayer network. `bottom` has rows (r, v) and columns
/// (s, l); `top` has rows (s, l) and columns (v, r).
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub site: i64,
    pub dims: ColumnDims,
    pub bottom: CMat,
    pub top: CMat,
}

fn legs_of(spec: &[(&str, usize, bool)]) -> Vec<LegSpec> {
    spec.iter()
        .filter(|(_, d, _)| *d > 1)
        .map(|&(n, d, incoming)| if incoming { LegSpec::incoming(n, d) } else { LegSpec::outgoing(n, d) })
        .collect()
}

/// Assembles columns into a bilayer: bottom bonds run from column i to i+1,
/// top bonds from i+1 to i. Legs of dim 1 are dropped. Horizontal legs at the
/// two ends become horizontal externals (row 0 bottom, row 1 top).
pub fn build_bilayer(d: usize, cols: &[Column]) -> Result<Network> {
    if cols.is_empty() {
        return Err(Error::Invalid("bilayer needs at least one column".into()));
    }
    let mut net = Network::new(d);
    for c in cols {
        let k = &c.dims;
        let b = Tensor::from_matrix(
            legs_of(&[("s", k.s_in, true), ("l", k.l_in, true), ("r", k.r_out, false), ("v", k.v, false)]),
            &c.bottom,
            format!("B{}", c.site),
        )?;
        let t = Tensor::from_matrix(
            legs_of(&[("v", k.v, true), ("r", k.r_in, true), ("s", k.s_out, false), ("l", k.l_out, false)]),
            &c.top,
            format!("T{}", c.site),
        )?;
        net.add_vertex(format!("B{}", c.site), b, c.site, 0);
        net.add_vertex(format!("T{}", c.site), t, c.site, 1);
    }
    for c in cols {
        let (b, t) = (format!("B{}", c.site), format!("T{}", c.site));
        net.source(&b, "s", c.site);
        net.sink(&t, "s", c.site);
        if c.dims.v > 1 {
            net.connect(&b, "v", &t, "v");
        }
    }
    for w in cols.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.dims.r_out != b.dims.l_in || b.dims.l_out != a.dims.r_in {
            return Err(Error::Dimension(format!("bond dims disagree between sites {} and {}", a.site, b.site)));
        }
        if a.dims.r_out > 1 {
            net.connect(&format!("B{}", a.site), "r", &format!("B{}", b.site), "l");
        }
        if b.dims.l_out > 1 {
            net.connect(&format!("T{}", b.site), "l", &format!("T{}", a.site), "r");
        }
    }
    let first = &cols[0];
    let last = &cols[cols.len() - 1];
    let (head, tail) = if first.site <= last.site { (Side::Left, Side::Right) } else { (Side::Right, Side::Left) };
    if first.dims.l_in > 1 {
        net.horizontal_source(&format!("B{}", first.site), "l", head, 0);
    }
    if last.dims.r_out > 1 {
        net.horizontal_sink(&format!("B{}", last.site), "r", tail, 0);
    }
    if last.dims.r_in > 1 {
        net.horizontal_source(&format!("T{}", last.site), "r", tail, 1);
    }
    if first.dims.l_out > 1 {
        net.horizontal_sink(&format!("T{}", first.site), "l", head, 1);
    }
    Ok(net)
}

fn seeded(seed: u64, salt: u64) -> rand_chacha::ChaCha8Rng {
    linalg::rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftVariant {
    ObcBilayer,
    PbcWrapped,
    SwapStaircaseSqc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackedVariant {
    Forward,
    Reversed,
    /// The forward network read as a ring cut open between sites n and 1.
    PbcCut,
    /// Translation-invariant bulk tensors with every horizontal leg open.
    TiOpen,
}

/// Right shift (site k → k+1). The bilayer routes each site input right on
/// the bottom bond and lifts the incoming bond to the site above.
pub fn build_shift(n: usize, d: usize, variant: ShiftVariant) -> Result<Network> {
    check_n(n, 2)?;
    match variant {
        ShiftVariant::ObcBilayer => shift_obc(n, d),
        ShiftVariant::PbcWrapped => wrap_horizontal(&shift_obc(n, d)?),
        ShiftVariant::SwapStaircaseSqc => stacked_gate(n, d, &linalg::swap(d), None, false, false),
    }
}

fn shift_obc(n: usize, d: usize) -> Result<Network> {
    let dims = ColumnDims { s_in: d, l_in: d, r_out: d, v: d, r_in: 1, s_out: d, l_out: 1 };
    let cols: Vec<Column> = (1..=n as i64)
        .map(|site| Column { site, dims, bottom: CMat::identity(d * d, d * d), top: CMat::identity(d, d) })
        .collect();
    build_bilayer(d, &cols)
}

fn check_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::Invalid(format!("need at least {min} sites, got {n}")));
    }
    Ok(())
}

/// Bilayer for U = G_1 G_2 ⋯ G_{n−1} (G_{n−1} acts first), with G_k on wires
/// (k, k+1) in that order and an optional single-site gate applied to every
/// output. Bottom tensors shift inputs one column right; top tensors apply
/// the gates and pass the left wire on. With `ti` every column uses the bulk
/// tensors and the ends stay open; otherwise the ends are made exact.
/// `mirror` places abstract column i at site n+1−i.
fn stacked_gate(n: usize, d: usize, g: &CMat, post: Option<&CMat>, mirror: bool, ti: bool) -> Result<Network> {
    check_n(n, 2)?;
    let sw = linalg::swap(d);
    let p = post.cloned().unwrap_or_else(|| CMat::identity(d, d));
    let bulk_top = linalg::kron(&p, &CMat::identity(d, d)) * &sw * g;
    let mut cols = Vec::new();
    for i in 1..=n {
        let site = if mirror { (n + 1 - i) as i64 } else { i as i64 };
        let col = if ti || (i > 1 && i < n) {
            Column {
                site,
                dims: ColumnDims { s_in: d, l_in: d, r_out: d, v: d, r_in: d, s_out: d, l_out: d },
                bottom: CMat::identity(d * d, d * d),
                top: bulk_top.clone(),
            }
        } else if i == 1 {
            Column {
                site,
                dims: ColumnDims { s_in: d, l_in: 1, r_out: d, v: 1, r_in: d, s_out: d, l_out: 1 },
                bottom: CMat::identity(d, d),
                top: p.clone(),
            }
        } else {
            Column {
                site,
                dims: ColumnDims { s_in: d, l_in: d, r_out: 1, v: d * d, r_in: 1, s_out: d, l_out: d },
                bottom: sw.clone(),
                top: bulk_top.clone(),
            }
        };
        cols.push(col);
    }
    build_bilayer(d, &cols)
}

/// Stacked CNOT on qubits 1..n. Forward: X_k → X_k X_{k+1}, Z_k → Z_1⋯Z_k.
/// Reversed applies C_1 first: X_k → X_k⋯X_n, Z_k → Z_{k−1} Z_k.
pub fn build_stacked_cnot(n: usize, variant: StackedVariant) -> Result<Network> {
    let c = linalg::cnot();
    match variant {
        StackedVariant::Forward => stacked_gate(n, 2, &c, None, false, false),
        StackedVariant::PbcCut => {
            let mut net = stacked_gate(n, 2, &c, None, false, false)?;
            net.period = Some(n as i64);
            Ok(net)
        }
        StackedVariant::Reversed => {
            let sw = linalg::swap(2);
            stacked_gate(n, 2, &(&sw * &c * &sw), None, true, false)
        }
        StackedVariant::TiOpen => stacked_gate(n, 2, &c, None, false, true),
    }
}

/// Kramers–Wannier map: stacked CNOT followed by a Hadamard on every site.
pub fn build_kw(n: usize) -> Result<Network> {
    check_n(n, 3)?;
    stacked_gate(n, 2, &linalg::cnot(), Some(&linalg::hadamard()), false, false)
}

pub fn build_stacked_xy(n: usize, theta: f64) -> Result<Network> {
    stacked_gate(n, 2, &linalg::xy_gate(theta), None, false, false)
}

/// Stacked XY with translation-invariant tensors and open horizontal legs.
pub fn build_stacked_xy_ti(n: usize, theta: f64) -> Result<Network> {
    stacked_gate(n, 2, &linalg::xy_gate(theta), None, false, true)
}

/// Gate list (application order) of the stacked-gate circuit on wires 0..n.
pub fn stacked_gate_sequence(n: usize, g: &CMat) -> Vec<(CMat, Vec<usize>)> {
    (0..n.saturating_sub(1)).rev().map(|k| (g.clone(), vec![k, k + 1])).collect()
}

/// Identity bilayer: bottom passes the site up and the bond right, top passes
/// the vertical to the site and the bond left.
pub fn build_identity_bilayer(n: usize, d: usize, bond: usize) -> Result<Network> {
    check_n(n, 1)?;
    let dims = ColumnDims { s_in: d, l_in: bond, r_out: bond, v: d, r_in: bond, s_out: d, l_out: bond };
    let bottom = routing(&[d, bond], &[bond, d], |x| vec![x[1], x[0]]);
    let top = routing(&[d, bond], &[d, bond], |x| x.to_vec());
    let cols: Vec<Column> = (1..=n as i64)
        .map(|site| Column { site, dims, bottom: bottom.clone(), top: top.clone() })
        .collect();
    build_bilayer(d, &cols)
}

/// Bilayer with seeded Haar tensors, bottom bonds of dim `db` and top bonds
/// of dim `dt`; flow log_d(db/dt).
pub fn build_haar_bilayer(n: usize, d: usize, db: usize, dt: usize, seed: u64) -> Result<Network> {
    check_n(n, 1)?;
    let dims = ColumnDims { s_in: d, l_in: db, r_out: db, v: d, r_in: dt, s_out: d, l_out: dt };
    let cols: Vec<Column> = (1..=n as i64)
        .map(|site| {
            let mut r = seeded(seed, site as u64);
            let bottom = linalg::haar_unitary(d * db, &mut r);
            let top = linalg::haar_unitary(d * dt, &mut r);
            Column { site, dims, bottom, top }
        })
        .collect();
    build_bilayer(d, &cols)
}

/// Bilayer evaluating exactly to `u` on n qudits: bottom tensors collect the
/// inputs on a growing rightward bond, the last top tensor applies `u`, and
/// the top bonds hand the outputs back leftward.
pub fn build_universality_padding(u: &CMat, d: usize, n: usize) -> Result<Network> {
    check_n(n, 1)?;
    let total = d.pow(n as u32);
    if u.nrows() != total || u.ncols() != total {
        return Err(Error::Dimension(format!("matrix is {}x{}, expected {total}", u.nrows(), u.ncols())));
    }
    let mut cols = Vec::new();
    for i in 1..=n {
        let before = d.pow(i as u32 - 1);
        let upto = before * d;
        let last = i == n;
        // Bottom: (s, l) → (r, v) with r = (l, s) fused.
        let (r_out, v) = if last { (1, upto) } else { (upto, 1) };
        let bottom = routing(&[d, before], &[r_out, v], |x| {
            let fused = x[1] * d + x[0];
            if last { vec![0, fused] } else { vec![fused, 0] }
        });
        // Top: (v, r) → (s, l); the last column applies u first.
        let r_in = if last { 1 } else { upto };
        let split = routing(&[upto], &[d, before], |x| vec![x[0] % d, x[0] / d]);
        let top = if last { split * u } else { split };
        cols.push(Column {
            site: i as i64,
            dims: ColumnDims { s_in: d, l_in: before, r_out, v, r_in, s_out: d, l_out: before },
            bottom,
            top,
        });
    }
    build_bilayer(d, &cols)
}

/// Single-layer identity on n sites plus a decoupled chain of dim `red_dim`
/// running rightward from the left end to the right end.
pub fn build_redundant_identity(n: usize, d: usize, red_dim: usize) -> Result<Network> {
    check_n(n, 2)?;
    if red_dim == 0 {
        return Err(Error::Invalid("red_dim must be at least 1".into()));
    }
    let mut net = Network::new(d);
    let m = CMat::identity(d * red_dim, d * red_dim);
    for k in 1..=n as i64 {
        let legs = legs_of(&[("s", d, true), ("l", red_dim, true), ("s_out", d, false), ("r", red_dim, false)]);
        net.add_vertex(format!("V{k}"), Tensor::from_matrix(legs, &m, format!("V{k}"))?, k, 0);
    }
    for k in 1..=n as i64 {
        let v = format!("V{k}");
        net.source(&v, "s", k);
        net.sink(&v, "s_out", k);
        if red_dim > 1 && k < n as i64 {
            net.connect(&v, "r", &format!("V{}", k + 1), "l");
        }
    }
    if red_dim > 1 {
        net.horizontal_source("V1", "l", Side::Left, 0);
        net.horizontal_sink(&format!("V{n}"), "r", Side::Right, 0);
    }
    Ok(net)
}

/// Four-site chain where an extra qubit enters at site 1 and leaves at site 3,
/// so the flow is 1 across the first two cuts and 0 across the last.
pub fn build_nonuniform_impurity() -> Result<Network> {
    let mut net = Network::new(2);
    let id4 = CMat::identity(4, 4);
    net.add_vertex("V1", gate_tensor(&[("s", 4)], &[("s_out", 2), ("r", 2)], &id4, "V1")?, 1, 0);
    for k in [2, 3] {
        let outs: Vec<(&str, usize)> = if k == 2 { vec![("s_out", 2), ("r", 2)] } else { vec![("s_out", 4)] };
        let id = format!("V{k}");
        net.add_vertex(id.clone(), gate_tensor(&[("s", 2), ("l", 2)], &outs, &id4, &id)?, k, 0);
    }
    net.add_vertex("V4", gate_tensor(&[("s", 2)], &[("s_out", 2)], &CMat::identity(2, 2), "V4")?, 4, 0);
    for k in 1..=4 {
        let v = format!("V{k}");
        net.source(&v, "s", k);
        net.sink(&v, "s_out", k);
    }
    net.connect("V1", "r", "V2", "l").connect("V2", "r", "V3", "l");
    Ok(net)
}

/// Four-layer nearest-neighbour architecture on a ring of n sites of dim
/// `da·db`: split, merge with the left neighbour, split, merge with the
/// right neighbour. Acyclic despite the periodic bonds.
pub fn build_four_layer_pbc(n: usize, da: usize, db: usize, seed: u64) -> Result<Network> {
    check_n(n, 2)?;
    let big = da * db;
    let mut net = Network::new(2);
    let mut r = seeded(seed, 0);
    for k in 1..=n as i64 {
        let p = gate_tensor(&[("s", big)], &[("u", da), ("r", db)], &linalg::haar_unitary(big, &mut r), "P")?;
        let q = gate_tensor(&[("u", da), ("l", db)], &[("u_out", big)], &linalg::haar_unitary(big, &mut r), "Q")?;
        let rr = gate_tensor(&[("u", big)], &[("u_out", da), ("l", db)], &linalg::haar_unitary(big, &mut r), "R")?;
        let s = gate_tensor(&[("u", da), ("r", db)], &[("s", big)], &linalg::haar_unitary(big, &mut r), "S")?;
        net.add_vertex(format!("P{k}"), p, k, 0);
        net.add_vertex(format!("Q{k}"), q, k, 1);
        net.add_vertex(format!("R{k}"), rr, k, 2);
        net.add_vertex(format!("S{k}"), s, k, 3);
    }
    let n = n as i64;
    for k in 1..=n {
        net.source(&format!("P{k}"), "s", k);
        net.sink(&format!("S{k}"), "s", k);
        net.connect(&format!("P{k}"), "u", &format!("Q{k}"), "u");
        net.connect(&format!("Q{k}"), "u_out", &format!("R{k}"), "u");
        net.connect(&format!("R{k}"), "u_out", &format!("S{k}"), "u");
        let right = k % n + 1;
        let left = (k + n - 2) % n + 1;
        net.edges.push(Edge {
            from: format!("P{k}"),
            from_leg: "r".into(),
            to: format!("Q{right}"),
            to_leg: "l".into(),
            length: 1.0,
            hop: Some(1),
        });
        net.edges.push(Edge {
            from: format!("R{k}"),
            from_leg: "l".into(),
            to: format!("S{left}"),
            to_leg: "r".into(),
            length: 1.0,
            hop: Some(-1),
        });
    }
    net.period = Some(n);
    Ok(net)
}

/// Ring of Haar tensors, each passing a bond to its right neighbour. Cyclic.
pub fn build_single_layer_ring(n: usize, d: usize, seed: u64) -> Result<Network> {
    check_n(n, 2)?;
    let mut net = Network::new(d);
    let mut r = seeded(seed, 0);
    for k in 1..=n as i64 {
        let m = linalg::haar_unitary(d * d, &mut r);
        net.add_vertex(format!("V{k}"), gate_tensor(&[("s", d), ("l", d)], &[("s_out", d), ("r", d)], &m, "V")?, k, 0);
    }
    let n = n as i64;
    for k in 1..=n {
        net.source(&format!("V{k}"), "s", k);
        net.sink(&format!("V{k}"), "s_out", k);
        net.edges.push(Edge {
            from: format!("V{k}"),
            from_leg: "r".into(),
            to: format!("V{}", k % n + 1),
            to_leg: "l".into(),
            length: 1.0,
            hop: Some(1),
        });
    }
    net.period = Some(n);
    Ok(net)
}

fn haar_gate(ins: &[(&str, usize)], outs: &[(&str, usize)], label: &str, rng: &mut impl Rng) -> Result<Tensor> {
    let n: usize = ins.iter().map(|x| x.1).product();
    gate_tensor(ins, outs, &linalg::haar_unitary(n, rng), label)
}

/// Three vertices with the loops B↔C and C→A, used to illustrate
/// sub-network extraction. Subset {A, B} has one internal edge.
pub fn build_subnetwork_example(seed: u64) -> Result<Network> {
    let mut r = seeded(seed, 1);
    let mut net = Network::new(2);
    net.add_vertex("A", haar_gate(&[("i", 4), ("c", 2)], &[("b", 8)], "A", &mut r)?, 1, 0);
    net.add_vertex("B", haar_gate(&[("a", 8), ("c", 2)], &[("c_out", 8), ("o2", 2)], "B", &mut r)?, 2, 1);
    net.add_vertex("C", haar_gate(&[("b", 8)], &[("a", 2), ("b_out", 2), ("o1", 2)], "C", &mut r)?, 3, 2);
    net.source("A", "i", 1);
    net.connect("A", "b", "B", "a")
        .connect("C", "a", "A", "c")
        .connect("B", "c_out", "C", "b")
        .connect("C", "b_out", "B", "c");
    net.sink("B", "o2", 2);
    net.sink("C", "o1", 3);
    Ok(net)
}

/// Acyclic three-vertex network whose topological order is A, B, C.
pub fn build_dag_circuit_example(seed: u64) -> Result<Network> {
    let mut r = seeded(seed, 2);
    let mut net = Network::new(2);
    net.add_vertex("A", haar_gate(&[("i", 8)], &[("b", 4), ("c", 2)], "A", &mut r)?, 1, 0);
    net.add_vertex("B", haar_gate(&[("a", 4)], &[("c", 2), ("o2", 2)], "B", &mut r)?, 2, 1);
    net.add_vertex("C", haar_gate(&[("a", 2), ("b", 2)], &[("o1", 4)], "C", &mut r)?, 1, 2);
    net.source("A", "i", 1);
    net.connect("A", "b", "B", "a").connect("A", "c", "C", "a").connect("B", "c", "C", "b");
    net.sink("B", "o2", 2);
    net.sink("C", "o1", 1);
    Ok(net)
}

/// Two unitary tensors contracted along j: A→B and f: B→A (a directed loop).
pub fn build_loop_example(seed: u64) -> Result<Network> {
    let mut r = seeded(seed, 3);
    let mut net = Network::new(2);
    net.add_vertex("A", haar_gate(&[("i", 2), ("f", 2)], &[("j", 2), ("k", 2)], "A", &mut r)?, 1, 0);
    net.add_vertex("B", haar_gate(&[("j", 2), ("h", 2)], &[("f", 2), ("m", 2)], "B", &mut r)?, 2, 0);
    net.source("A", "i", 1).source("B", "h", 2);
    net.connect("A", "j", "B", "j").connect("B", "f", "A", "f");
    net.sink("A", "k", 1).sink("B", "m", 2);
    Ok(net)
}

/// Identity on A⊗B with the B output fed back into the B input. Evaluates to
/// dim_B · I_A.
pub fn build_self_trace(dim_a: usize, dim_b: usize) -> Result<Network> {
    let mut net = Network::new(dim_a.max(2));
    let t = Tensor::identity(&[("a", "a_out", dim_a), ("b", "b_out", dim_b)], "I");
    net.add_vertex("I", t, 1, 0);
    net.source("I", "a", 1).sink("I", "a_out", 1);
    net.connect("I", "b_out", "I", "b");
    Ok(net)
}

/// Random acyclic network of Haar vertices. Each vertex draws one or two
/// open wires (or fresh sources) and splits its output into legs of dim ≤ 4.
pub fn build_random_dag(max_vertices: usize, max_leg_dim: usize, seed: u64) -> Result<Network> {
    let mut r = seeded(seed, 4);
    let max_leg_dim = max_leg_dim.clamp(2, 4);
    let nv = r.random_range(1..=max_vertices.max(1));
    let mut net = Network::new(2);
    // Open wires: (vertex, leg, dim) or a pending source (None vertex).
    let mut open: Vec<(String, String, usize)> = Vec::new();
    let mut total_in = 1usize;
    let mut pending_sources: Vec<(String, String, i64)> = Vec::new();
    for v in 0..nv {
        let id = format!("V{v}");
        let mut ins: Vec<(String, usize)> = Vec::new();
        let mut feeds: Vec<(String, String, String)> = Vec::new();
        let k_in = r.random_range(1..=2usize);
        for slot in 0..k_in {
            let leg = format!("i{slot}");
            let fresh = open.is_empty() || (total_in < 64 && r.random_bool(0.3));
            if fresh {
                let dim = r.random_range(2..=max_leg_dim);
                total_in *= dim;
                pending_sources.push((id.clone(), leg.clone(), v as i64));
                ins.push((leg, dim));
            } else {
                let pick = r.random_range(0..open.len());
                let (fv, fl, dim) = open.remove(pick);
                feeds.push((fv, fl, leg.clone()));
                ins.push((leg, dim));
            }
        }
        let n_in: usize = ins.iter().map(|x| x.1).product();
        let outs = random_factorization(n_in, max_leg_dim, &mut r);
        let out_legs: Vec<(String, usize)> = outs.iter().enumerate().map(|(k, &d)| (format!("o{k}"), d)).collect();
        let ins_ref: Vec<(&str, usize)> = ins.iter().map(|(n, d)| (n.as_str(), *d)).collect();
        let outs_ref: Vec<(&str, usize)> = out_legs.iter().map(|(n, d)| (n.as_str(), *d)).collect();
        let t = haar_gate(&ins_ref, &outs_ref, &id, &mut r)?;
        net.add_vertex(id.clone(), t, v as i64, v as i64);
        for (fv, fl, leg) in feeds {
            net.connect(&fv, &fl, &id, &leg);
        }
        for (leg, d) in out_legs {
            open.push((id.clone(), leg, d));
        }
    }
    for (v, leg, site) in pending_sources {
        net.source(&v, &leg, site);
    }
    for (v, leg, _) in open {
        let site = net.vertex(&v).map(|x| x.site).unwrap_or(0);
        net.sink(&v, &leg, site);
    }
    Ok(net)
}

/// Splits `n` into a random ordered product of factors in 2..=max (n must
/// factor over primes ≤ max).
fn random_factorization(n: usize, max: usize, r: &mut impl Rng) -> Vec<usize> {
    let mut primes = Vec::new();
    let mut m = n;
    for p in [2, 3] {
        while m % p == 0 {
            primes.push(p);
            m /= p;
        }
    }
    if m != 1 {
        return vec![n];
    }
    let mut out: Vec<usize> = Vec::new();
    while !primes.is_empty() {
        let i = r.random_range(0..primes.len());
        let p = primes.remove(i);
        match out.last_mut() {
            Some(last) if *last * p <= max && r.random_bool(0.5) => *last *= p,
            _ => out.push(p),
        }
    }
    if out.is_empty() {
        out.push(1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate_matrix, site_operator};
    use crate::graph::{topological_sort, validate, TopoResult};

    #[test]
    fn routing_swaps_two_factors() {
        let m = routing(&[2, 3], &[3, 2], |x| vec![x[1], x[0]]);
        assert_eq!(m, linalg::permutation_matrix(&[2, 3], &[1, 0]));
    }

    #[test]
    fn shift_obc_moves_each_site_right() {
        let (u, sites, _) = site_operator(&build_shift(3, 2, ShiftVariant::ObcBilayer).unwrap()).unwrap();
        assert_eq!(sites, vec![1, 2, 3]);
        // |x1 x2 x3⟩ → |0 x1 x2⟩ when x3 = 0, and annihilated otherwise.
        for x in 0..8usize {
            let col = u.column(x);
            if x & 1 == 1 {
                assert!(col.norm() < 1e-12);
            } else {
                assert!((col[x >> 1] - ONE).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn staircase_and_wrapped_shift_agree() {
        let a = site_operator(&build_shift(4, 2, ShiftVariant::PbcWrapped).unwrap()).unwrap().0;
        let b = site_operator(&build_shift(4, 2, ShiftVariant::SwapStaircaseSqc).unwrap()).unwrap().0;
        assert!(linalg::phase_distance(&a, &b) < 1e-12);
    }

    #[test]
    fn two_site_forward_cnot_is_a_cnot() {
        let (u, _, _) = site_operator(&build_stacked_cnot(2, StackedVariant::Forward).unwrap()).unwrap();
        assert!(linalg::frobenius(&(u - linalg::cnot())) < 1e-12);
    }

    #[test]
    fn padding_reproduces_the_matrix() {
        let u = linalg::haar_unitary(27, &mut linalg::rng(5));
        let net = build_universality_padding(&u, 3, 3).unwrap();
        assert!(validate(&net).is_valid_unitary_network());
        let (m, _, _) = site_operator(&net).unwrap();
        assert!(linalg::frobenius(&(m - u)) < 1e-12);
    }

    #[test]
    fn fixture_orders() {
        let net = build_dag_circuit_example(0).unwrap();
        assert_eq!(topological_sort(&net), TopoResult::Order(vec!["A".into(), "B".into(), "C".into()]));
        let bil = build_identity_bilayer(3, 2, 2).unwrap();
        let TopoResult::Order(o) = topological_sort(&bil) else { panic!() };
        assert_eq!(o, ["B1", "B2", "B3", "T3", "T2", "T1"]);
        assert!(!validate(&build_loop_example(0).unwrap()).dag);
        assert!(!validate(&build_single_layer_ring(3, 2, 0).unwrap()).dag);
    }

    #[test]
    fn self_trace_is_scaled_identity() {
        let m = evaluate_matrix(&build_self_trace(2, 3).unwrap()).unwrap();
        assert_eq!(m, CMat::identity(2, 2) * crate::linalg::C64::new(3.0, 0.0));
    }

    #[test]
    fn random_dags_validate() {
        for seed in 0..30 {
            let net = build_random_dag(8, 4, seed).unwrap();
            let diag = validate(&net);
            assert!(diag.is_valid_unitary_network(), "seed {seed}: {diag:?}");
        }
    }

    #[test]
    fn four_layer_ring_is_acyclic() {
        let net = build_four_layer_pbc(3, 2, 2, 1).unwrap();
        assert!(validate(&net).is_valid_unitary_network());
    }
}
