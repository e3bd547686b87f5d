use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{herm_eigen_sorted, C64};

const UNITARY_TOL: f64 = 1e-10;

/// A unitary acting on the joint space of some target registers.
///
/// Structured variants keep large operators cheap: an oracle is a diagonal or
/// a permutation, reflections and state preparations are rank-one updates of
/// the identity.
#[derive(Debug, Clone)]
pub enum Op {
    Dense(DMatrix<C64>),
    Diagonal(Vec<C64>),
    /// Basis map |x> -> |perm[x]>.
    Permutation(Vec<usize>),
    /// scale · (I + c |v><v|) with v a unit vector. Unitary when |1 + c| = 1
    /// and |scale| = 1.
    RankOne {
        v: DVector<C64>,
        c: C64,
        scale: C64,
    },
    /// Quantum Fourier transform (or its inverse) over the whole target.
    Fourier {
        dim: usize,
        inverse: bool,
    },
    /// Hadamard gate on every qubit of a `dim`-dimensional target.
    Walsh { dim: usize },
    /// Applied left to right.
    Product(Vec<Op>),
}

impl Op {
    pub fn identity(dim: usize) -> Self {
        Op::Diagonal(vec![C64::new(1.0, 0.0); dim])
    }

    /// Hadamard transform on `qubits` qubits.
    pub fn hadamard(qubits: usize) -> Self {
        Op::Walsh {
            dim: 1usize << qubits,
        }
    }

    pub fn pauli_x() -> Self {
        Op::Permutation(vec![1, 0])
    }

    /// Real rotation |0> -> cos θ|0> + sin θ|1>.
    pub fn ry(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Op::Dense(DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(c, 0.0),
                C64::new(-s, 0.0),
                C64::new(s, 0.0),
                C64::new(c, 0.0),
            ],
        ))
    }

    /// Phase oracle: multiplies |x> by -1 where `marked[x]`.
    pub fn phase_flip(marked: &[bool]) -> Self {
        Op::Diagonal(
            marked
                .iter()
                .map(|&b| C64::new(if b { -1.0 } else { 1.0 }, 0.0))
                .collect(),
        )
    }

    /// A unitary sending |0> to `v` (a Householder reflection up to a phase).
    pub fn state_prep(v: &DVector<C64>) -> Result<Self> {
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Invariant(format!(
                "state preparation target has norm {norm}"
            )));
        }
        let v = v / C64::new(norm, 0.0);
        let v0 = v[0];
        let phase = if v0.norm() > 0.0 {
            v0 / v0.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        // H = I - 2ww† with w ∝ phase|0> - v maps phase|0> to v.
        let mut w = -v.clone();
        w[0] += phase;
        let wn = w.norm();
        if wn < 1e-15 {
            let mut d = vec![C64::new(1.0, 0.0); v.len()];
            d[0] = phase;
            return Ok(Op::Diagonal(d));
        }
        Ok(Op::RankOne {
            v: w / C64::new(wn, 0.0),
            c: C64::new(-2.0, 0.0),
            scale: phase,
        })
    }

    /// Real-vector convenience for [`Op::state_prep`].
    pub fn state_prep_real(v: &[f64]) -> Result<Self> {
        Self::state_prep(&DVector::from_iterator(
            v.len(),
            v.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    /// Reflection 2|v><v| - I about a unit vector.
    pub fn reflection(v: &DVector<C64>) -> Self {
        Op::RankOne {
            v: v.clone(),
            c: C64::new(-2.0, 0.0),
            scale: C64::new(-1.0, 0.0),
        }
    }

    /// I + (e^{iφ} - 1)|v><v|: multiplies the |v> component by e^{iφ}.
    pub fn phase_about(v: &DVector<C64>, phi: f64) -> Self {
        Op::RankOne {
            v: v.clone(),
            c: C64::from_polar(1.0, phi) - C64::new(1.0, 0.0),
            scale: C64::new(1.0, 0.0),
        }
    }

    /// e^{i t A} for Hermitian A.
    pub fn exp_hermitian(a: &DMatrix<C64>, t: f64) -> Self {
        Op::Dense(exp_hermitian(a, t))
    }

    /// Dimension the operator acts on, if fixed.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Op::Dense(m) => Some(m.nrows()),
            Op::Diagonal(d) => Some(d.len()),
            Op::Permutation(p) => Some(p.len()),
            Op::RankOne { v, .. } => Some(v.len()),
            Op::Fourier { dim, .. } | Op::Walsh { dim } => Some(*dim),
            Op::Product(ops) => ops.iter().find_map(Op::dim),
        }
    }

    /// Hermitian adjoint.
    pub fn adjoint(&self) -> Self {
        match self {
            Op::Dense(m) => Op::Dense(m.adjoint()),
            Op::Diagonal(d) => Op::Diagonal(d.iter().map(|z| z.conj()).collect()),
            Op::Permutation(p) => {
                let mut inv = vec![0; p.len()];
                for (x, &y) in p.iter().enumerate() {
                    inv[y] = x;
                }
                Op::Permutation(inv)
            }
            // (s(I + c vv†))† = s*(I + c* vv†)
            Op::RankOne { v, c, scale } => Op::RankOne {
                v: v.clone(),
                c: c.conj(),
                scale: scale.conj(),
            },
            Op::Fourier { dim, inverse } => Op::Fourier {
                dim: *dim,
                inverse: !inverse,
            },
            Op::Walsh { dim } => Op::Walsh { dim: *dim },
            Op::Product(ops) => Op::Product(ops.iter().rev().map(Op::adjoint).collect()),
        }
    }

    /// Applies the operator `times` times in sequence.
    pub fn repeat(&self, times: usize) -> Self {
        Op::Product(vec![self.clone(); times])
    }

    /// Checks unitarity, returning the measured deviation on failure.
    pub fn check_unitary(&self) -> Result<()> {
        let dev = self.unitarity_deviation();
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation: dev });
        }
        Ok(())
    }

    /// ‖U†U - I‖ (Frobenius norm for dense factors).
    pub fn unitarity_deviation(&self) -> f64 {
        let one = C64::new(1.0, 0.0);
        match self {
            Op::Dense(m) => {
                if !m.is_square() {
                    return f64::INFINITY;
                }
                let n = m.nrows();
                (m.adjoint() * m - DMatrix::<C64>::identity(n, n)).norm()
            }
            Op::Diagonal(d) => d.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max),
            Op::Permutation(p) => {
                let mut seen = vec![false; p.len()];
                for &y in p {
                    if y >= p.len() || seen[y] {
                        return f64::INFINITY;
                    }
                    seen[y] = true;
                }
                0.0
            }
            Op::RankOne { v, c, scale } => {
                let vn = (v.norm() - 1.0).abs();
                let cn = ((one + c).norm() - 1.0).abs();
                let sn = (scale.norm() - 1.0).abs();
                vn.max(cn).max(sn)
            }
            Op::Fourier { dim, .. } | Op::Walsh { dim } => {
                if dim.is_power_of_two() {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Op::Product(ops) => ops.iter().map(Op::unitarity_deviation).sum(),
        }
    }

    /// Applies the operator in place to a vector over its target space.
    pub fn apply_to(&self, v: &mut [C64]) {
        match self {
            Op::Dense(m) => {
                let n = m.nrows();
                let mut out = vec![C64::new(0.0, 0.0); n];
                for (c, &x) in v.iter().enumerate() {
                    if x.re == 0.0 && x.im == 0.0 {
                        continue;
                    }
                    let col = m.column(c);
                    for r in 0..n {
                        out[r] += col[r] * x;
                    }
                }
                v.copy_from_slice(&out);
            }
            Op::Diagonal(d) => {
                for (x, z) in v.iter_mut().zip(d) {
                    *x *= z;
                }
            }
            Op::Permutation(p) => {
                let src = v.to_vec();
                for (x, &y) in p.iter().enumerate() {
                    v[y] = src[x];
                }
            }
            Op::RankOne { v: u, c, scale } => {
                let mut proj = C64::new(0.0, 0.0);
                for (a, b) in u.iter().zip(v.iter()) {
                    proj += a.conj() * b;
                }
                let k = c * proj;
                for (x, a) in v.iter_mut().zip(u.iter()) {
                    *x = (*x + a * k) * scale;
                }
            }
            Op::Fourier { inverse, .. } => fourier(v, *inverse),
            Op::Walsh { .. } => walsh(v),
            Op::Product(ops) => {
                for op in ops {
                    op.apply_to(v);
                }
            }
        }
    }

    /// Dense matrix of the operator on a `dim`-dimensional space.
    pub fn to_dense(&self, dim: usize) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(dim, dim);
        let mut col = vec![C64::new(0.0, 0.0); dim];
        for c in 0..dim {
            col.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            col[c] = C64::new(1.0, 0.0);
            self.apply_to(&mut col);
            for r in 0..dim {
                out[(r, c)] = col[r];
            }
        }
        out
    }
}

/// In-place normalized fast Walsh-Hadamard transform.
fn walsh(a: &mut [C64]) {
    let n = a.len();
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for k in start..start + h {
                let (x, y) = (a[k], a[k + h]);
                a[k] = x + y;
                a[k + h] = x - y;
            }
        }
        h *= 2;
    }
    let s = 1.0 / (n as f64).sqrt();
    for x in a.iter_mut() {
        *x *= s;
    }
}

/// e^{i t A} for Hermitian A via its eigendecomposition.
pub fn exp_hermitian(a: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let (vals, vecs) = herm_eigen_sorted(a);
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| C64::from_polar(1.0, l * t)),
    ));
    &vecs * phases * vecs.adjoint()
}

/// In-place QFT: out_k = N^{-1/2} Σ_j e^{±2πi jk/N} in_j (minus sign for the
/// inverse).
fn fourier(a: &mut [C64], inverse: bool) {
    use std::cell::RefCell;
    thread_local! {
        static PLANNER: RefCell<rustfft::FftPlanner<f64>> = RefCell::new(rustfft::FftPlanner::new());
    }
    let n = a.len();
    if n <= 1 {
        return;
    }
    // rustfft's forward transform uses e^{-2πi jk/N}, the QFT's inverse.
    let dir = if inverse {
        rustfft::FftDirection::Forward
    } else {
        rustfft::FftDirection::Inverse
    };
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(n, dir));
    fft.process(a);
    let s = 1.0 / (n as f64).sqrt();
    for x in a.iter_mut() {
        *x *= s;
    }
}
