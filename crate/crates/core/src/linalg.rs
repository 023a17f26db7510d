//! Dense complex linear algebra helpers shared by every module.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of R's diagonal pushed into Q.
pub fn haar_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = CMat::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * scale, im * scale)
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖M†M − I‖_F, or +∞ for a non-square matrix.
pub fn unitarity_residual(m: &CMat) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    frobenius(&(m.adjoint() * m - CMat::identity(n, n)))
}

/// min over φ of ‖a − e^{iφ} b‖_F / ‖b‖_F.
pub fn phase_distance(a: &CMat, b: &CMat) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    let overlap: C64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let ph = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { ONE };
    let nb = frobenius(b);
    let diff = frobenius(&(a - b * ph));
    if nb > 0.0 {
        diff / nb
    } else {
        diff
    }
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_all(ms: &[CMat]) -> CMat {
    ms.iter().fold(CMat::identity(1, 1), |acc, m| acc.kronecker(m))
}

/// Permutation matrix sending basis state of `src` positions to `dst` ordering:
/// the returned P satisfies P |x_0 … x_{n-1}⟩ = |x_{perm[0]} … x_{perm[n-1]}⟩.
pub fn permutation_matrix(dims: &[usize], perm: &[usize]) -> CMat {
    let total: usize = dims.iter().product();
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut m = CMat::zeros(total, total);
    let mut digits = vec![0usize; dims.len()];
    for col in 0..total {
        let mut rem = col;
        for k in (0..dims.len()).rev() {
            digits[k] = rem % dims[k];
            rem /= dims[k];
        }
        let mut row = 0;
        for (k, &p) in perm.iter().enumerate() {
            row = row * new_dims[k] + digits[p];
        }
        m[(row, col)] = ONE;
    }
    m
}

/// Index map of [`permutation_matrix`]: P|x⟩ = |map[x]⟩.
pub fn permutation_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut digits = vec![0usize; dims.len()];
    (0..total)
        .map(|col| {
            let mut rem = col;
            for k in (0..dims.len()).rev() {
                digits[k] = rem % dims[k];
                rem /= dims[k];
            }
            perm.iter().enumerate().fold(0, |row, (k, &p)| row * new_dims[k] + digits[p])
        })
        .collect()
}

/// P M P† for the factor permutation P of [`permutation_matrix`], by gathering.
pub fn permute_operator(m: &CMat, dims: &[usize], perm: &[usize]) -> CMat {
    let map = permutation_map(dims, perm);
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            out[(map[r], map[c])] = m[(r, c)];
        }
    }
    out
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Product a·b through faer. nalgebra's complex product is far slower for
/// matrices past a few hundred rows.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let p = to_faer(a) * to_faer(b);
    from_faer(p.as_ref())
}

/// Full SVD m = U diag(s) V† with s in non-increasing order. Uses faer: the
/// nalgebra complex SVD loses accuracy on blocks with clustered singular
/// values.
pub fn svd(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return (CMat::identity(r, r), Vec::new(), CMat::identity(c, c));
    }
    let f = to_faer(m).svd().expect("svd did not converge");
    let s = (0..r.min(c)).map(|k| f.S().column_vector()[k].re).collect();
    (from_faer(f.U()), s, from_faer(f.V()))
}

/// Eigenvalues (non-decreasing) and orthonormal eigenvectors of a Hermitian
/// matrix.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    if m.nrows() == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let e = to_faer(m).self_adjoint_eigen(faer::Side::Lower).expect("eigensolver did not converge");
    let vals = (0..m.nrows()).map(|k| e.S().column_vector()[k].re).collect();
    (vals, from_faer(e.U()))
}

/// Eigenvalues and an orthonormal eigenbasis of a normal matrix, from the
/// Hermitian pencil Re(U) + α Im(U) whose eigenvectors also diagonalize U
/// for generic α.
pub fn normal_eigen(u: &CMat) -> (Vec<C64>, CMat) {
    const ALPHA: f64 = 0.577_215_664_901_532_9;
    let k = (u + u.adjoint()) * C64::new(0.5, 0.0);
    let j = (u - u.adjoint()) * C64::new(0.0, -0.5);
    let (_, q) = hermitian_eigen(&(k + j * C64::new(ALPHA, 0.0)));
    let d = q.adjoint() * u * &q;
    ((0..u.nrows()).map(|i| d[(i, i)]).collect(), q)
}

pub fn singular_values_desc(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s = to_faer(m).singular_values().expect("svd did not converge");
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank from singular values above `tol`.
pub fn rank(m: &CMat, tol: f64) -> usize {
    singular_values_desc(m).iter().filter(|&&s| s > tol).count()
}

pub fn pauli(k: usize) -> CMat {
    let z = ZERO;
    let o = ONE;
    match k {
        0 => CMat::from_row_slice(2, 2, &[o, z, z, o]),
        1 => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMat::from_row_slice(2, 2, &[z, -I, I, z]),
        3 => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => panic!("pauli index {k} out of range"),
    }
}

pub fn cnot() -> CMat {
    permutation_matrix_from_map(4, |x| if x >= 2 { x ^ 1 } else { x })
}

pub fn swap(d: usize) -> CMat {
    permutation_matrix(&[d, d], &[1, 0])
}

pub fn hadamard() -> CMat {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    CMat::from_row_slice(2, 2, &[h, h, h, -h])
}

/// XY(θ) = exp[iθ/2 (XX + YY)/2].
pub fn xy_gate(theta: f64) -> CMat {
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let is = C64::new(0.0, (theta / 2.0).sin());
    let mut m = CMat::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(3, 3)] = ONE;
    m[(1, 1)] = c;
    m[(2, 2)] = c;
    m[(1, 2)] = is;
    m[(2, 1)] = is;
    m
}

/// Matrix with a single one per column: column x has its one at row f(x).
pub fn permutation_matrix_from_map(n: usize, f: impl Fn(usize) -> usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    for x in 0..n {
        m[(f(x), x)] = ONE;
    }
    m
}

/// Generalized Pauli (clock-and-shift) basis X^a Z^b on one qudit, normalized
/// to Hilbert-Schmidt norm √d like the qubit Paulis.
pub fn clock_shift(d: usize, a: usize, b: usize) -> CMat {
    let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / d as f64);
    let mut m = CMat::zeros(d, d);
    for k in 0..d {
        m[((k + a) % d, k)] = w.powu((b * k) as u32);
    }
    m
}
