//! Dense linear-algebra helpers shared by the classical reference and the
//! spectral simulation tier.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

pub type C64 = Complex<f64>;

/// Relative eigenvalue cutoff below which a value is treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Eigendecomposition of a real symmetric matrix with eigenvalues in ascending
/// order. Each eigenvector is oriented so its first component with magnitude
/// above 1e-12 is positive.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).clone_owned();
        orient(&mut col);
        vecs.set_column(dst, &col);
    }
    (vals, vecs)
}

/// Eigendecomposition of a Hermitian matrix, ascending eigenvalues.
pub fn herm_eigen_sorted(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).clone_owned();
        // fix the global phase so the first significant component is real positive
        if let Some(c) = col.iter().find(|c| c.norm() > 1e-12).copied() {
            let phase = c / c.norm();
            col /= phase;
        }
        vecs.set_column(dst, &col);
    }
    (vals, vecs)
}

/// Flips `v` so its first significant component is positive.
pub fn orient(v: &mut DVector<f64>) {
    if let Some(&x) = v.iter().find(|x| x.abs() > 1e-12) {
        if x < 0.0 {
            v.neg_mut();
        }
    }
}

/// Flips `v` so its largest-magnitude component is positive.
pub fn orient_largest(v: &mut DVector<f64>) {
    if let Some(x) = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())) {
        if x < 0.0 {
            v.neg_mut();
        }
    }
}

/// Pseudo-inverse of a symmetric matrix with a relative eigenvalue cutoff.
pub fn pinv_sym(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(m);
    let max = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    if max == 0.0 {
        return out;
    }
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() > rel_tol * max {
            let v = vecs.column(k);
            out += (v * v.transpose()) / lam;
        }
    }
    out
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Condition number over the nonzero singular values (relative cutoff
/// [`RANK_TOL`]). Returns 1 for a matrix with a single nonzero singular value
/// and infinity for the zero matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    let max = s.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return f64::INFINITY;
    }
    let min = s
        .iter()
        .copied()
        .filter(|&v| v > RANK_TOL * max)
        .fold(f64::INFINITY, f64::min);
    max / min
}

/// Orthonormal basis for the column space of `a`.
pub fn column_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let max = svd.singular_values.iter().fold(0.0f64, |x, &y| x.max(y));
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| max > 0.0 && svd.singular_values[k] > 1e-10 * max)
        .collect();
    let mut out = DMatrix::zeros(a.nrows(), keep.len());
    for (dst, &k) in keep.iter().enumerate() {
        out.set_column(dst, &u.column(k));
    }
    out
}

/// Principal angles (radians, ascending) between the column spaces of `a` and
/// `b`. The number of angles equals the smaller of the two ranks.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = column_basis(a);
    let qb = column_basis(b);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return Vec::new();
    }
    // Use the smaller space as the probe so every angle is defined.
    let (qa, qb) = if qa.ncols() <= qb.ncols() {
        (qa, qb)
    } else {
        (qb, qa)
    };
    let k = qa.ncols();
    // arccos loses precision near zero; take the angle from both the cosine
    // (projection) and sine (residual) spectra.
    let cos = singular_values(&(qb.transpose() * &qa));
    let residual = &qa - &qb * (qb.transpose() * &qa);
    let mut sin = singular_values(&residual);
    sin.resize(k, 0.0);
    sin.sort_by(|x, y| x.total_cmp(y));
    let mut angles: Vec<f64> = (0..k)
        .map(|t| {
            let c = cos.get(t).copied().unwrap_or(0.0).clamp(0.0, 1.0);
            let s = sin[t].clamp(0.0, 1.0);
            if c > std::f64::consts::FRAC_1_SQRT_2 {
                s.asin()
            } else {
                c.acos()
            }
        })
        .collect();
    angles.sort_by(|x, y| x.total_cmp(y));
    angles
}

/// Largest principal angle, zero when either space is empty.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    principal_angles(a, b).into_iter().fold(0.0, f64::max)
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Rows of a matrix as nested vectors, the layout used in JSON output.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

/// Smallest power of two that is at least `n` (and at least 1).
pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Number of qubits needed to index `n` basis states.
pub fn qubits_for(n: usize) -> usize {
    next_pow2(n).trailing_zeros() as usize
}
