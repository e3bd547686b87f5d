use nalgebra::{DMatrix, DVector};

use crate::classical::WeightMatrix;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, pinv_sym, singular_values, sym_eigen_sorted, RANK_TOL};

/// Bottom of the spectrum of M = (I - W)ᵀ(I - W).
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub m: DMatrix<f64>,
    /// All eigenvalues of M, ascending.
    pub eigenvalues: Vec<f64>,
    /// m×d matrix whose columns are the bottom-d eigenvectors with nonzero
    /// eigenvalue, in ascending eigenvalue order.
    pub vectors: DMatrix<f64>,
    /// Eigenvalues belonging to `vectors`.
    pub selected: Vec<f64>,
    pub d: usize,
    /// Singular values of I - W, ascending.
    pub sigma: Vec<f64>,
    /// Dimension of the zero eigenspace.
    pub kernel_dim: usize,
}

impl SpectralResult {
    /// Singular values of I - W that correspond to the selected vectors.
    pub fn selected_sigma(&self) -> Vec<f64> {
        self.selected.iter().map(|l| l.max(0.0).sqrt()).collect()
    }
}

pub fn spectral_problem(w: &WeightMatrix, d: usize) -> Result<SpectralResult> {
    let resid = w.residual_matrix();
    let m = resid.transpose() * &resid;
    let (eigenvalues, vecs) = sym_eigen_sorted(&m);
    let max = eigenvalues.last().copied().unwrap_or(0.0);
    let nonzero: Vec<usize> = (0..eigenvalues.len())
        .filter(|&k| eigenvalues[k] > RANK_TOL * max)
        .collect();
    let kernel_dim = eigenvalues.len() - nonzero.len();
    if d == 0 || d > nonzero.len() {
        return Err(Error::Parameter(format!(
            "d = {d} must be between 1 and the number of nonzero eigenvalues ({})",
            nonzero.len()
        )));
    }
    let mut vectors = DMatrix::zeros(m.nrows(), d);
    let mut selected = Vec::with_capacity(d);
    for (c, &k) in nonzero.iter().take(d).enumerate() {
        vectors.set_column(c, &vecs.column(k));
        selected.push(eigenvalues[k]);
    }
    let mut sigma = singular_values(&resid);
    sigma.reverse();
    Ok(SpectralResult {
        m,
        eigenvalues,
        vectors,
        selected,
        d,
        sigma,
        kernel_dim,
    })
}

/// Ridge regression a = (XᵀX + αI)⁻¹ Xᵀ z. With α = 0 the pseudo-inverse of
/// XᵀX is used so singular designs still have the minimum-norm solution.
/// `z` may be shorter than the row count of a padded X; missing entries are
/// zero.
pub fn ridge_regress(x: &DataMatrix, z: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::Parameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let m = x.rows();
    if z.len() > m {
        return Err(Error::Dimension {
            expected: m,
            found: z.len(),
        });
    }
    let mut zp = DVector::zeros(m);
    zp.rows_mut(0, z.len()).copy_from(z);
    let e = x.entries();
    let gram = e.transpose() * e;
    let rhs = e.transpose() * zp;
    let n = gram.nrows();
    if alpha > 0.0 {
        let sys = gram + DMatrix::identity(n, n) * alpha;
        if let Some(ch) = sys.clone().cholesky() {
            return Ok(ch.solve(&rhs));
        }
        return Ok(pinv_sym(&sys, RANK_TOL) * rhs);
    }
    Ok(pinv_sym(&gram, RANK_TOL) * rhs)
}

/// Default ridge constant: one percent of the mean squared column norm over
/// the columns the data had before padding.
pub fn default_alpha(x: &DataMatrix) -> f64 {
    let cols = x.pad_spec().original_cols.max(1);
    let e = x.entries();
    let total: f64 = (0..e.ncols()).map(|c| e.column(c).norm_squared()).sum();
    0.01 * total / cols as f64
}

/// Embedding directions plus the regression settings that produced them.
#[derive(Debug, Clone)]
pub struct EmbeddingResult {
    /// n×d matrix of directions.
    pub a: DMatrix<f64>,
    pub alpha: f64,
    pub kappa_x: f64,
}

pub fn embed(x: &DataMatrix, spectral: &SpectralResult, alpha: f64) -> Result<EmbeddingResult> {
    let mut a = DMatrix::zeros(x.cols(), spectral.d);
    for c in 0..spectral.d {
        let z = spectral.vectors.column(c).clone_owned();
        a.set_column(c, &ridge_regress(x, &z, alpha)?);
    }
    Ok(EmbeddingResult {
        a,
        alpha,
        kappa_x: condition_number(x.entries()),
    })
}

/// Scale-free embedding objective tr((AᵀXᵀXA)⁻¹ AᵀXᵀMXA): the locality
/// residual of the projected points under the normalization constraint.
pub fn embedding_objective(x: &DataMatrix, m: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let y = x.entries() * a;
    let num = y.transpose() * m * &y;
    let den = y.transpose() * &y;
    (pinv_sym(&den, RANK_TOL) * num).trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NeighborSets;

    fn cycle4() -> WeightMatrix {
        let mut e = DMatrix::zeros(4, 4);
        for i in 0..4 {
            e[(i, (i + 1) % 4)] = 1.0;
        }
        let q = NeighborSets::new((0..4).map(|i| vec![(i + 1) % 4]).collect()).unwrap();
        WeightMatrix::new(e, q).unwrap()
    }

    #[test]
    fn circulant_shift_spectrum() {
        let s = spectral_problem(&cycle4(), 1).unwrap();
        let expect = [0.0, 2.0, 2.0, 4.0];
        for (a, b) in s.eigenvalues.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((s.selected[0] - 2.0).abs() < 1e-12);
        assert_eq!(s.kernel_dim, 1);
    }

    #[test]
    fn kernel_is_all_ones() {
        let s = spectral_problem(&cycle4(), 3).unwrap();
        let ones = DVector::from_element(4, 1.0);
        assert!((&s.m * &ones).norm() < 1e-12);
        for c in 0..3 {
            assert!(s.vectors.column(c).dot(&ones).abs() < 1e-9);
        }
    }

    #[test]
    fn d_too_large_names_rank() {
        let err = spectral_problem(&cycle4(), 4).unwrap_err();
        assert!(err.to_string().contains("(3)"), "{err}");
    }

    #[test]
    fn ridge_identity_design() {
        let x = DataMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let z = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!((ridge_regress(&x, &z, 0.0).unwrap() - &z).norm() < 1e-14);
        assert!((ridge_regress(&x, &z, 1.0).unwrap() - &z / 2.0).norm() < 1e-14);
    }

    #[test]
    fn ridge_pads_short_target() {
        let x = DataMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let z = DVector::from_vec(vec![1.0, 2.0]);
        let a = ridge_regress(&x, &z, 0.0).unwrap();
        assert_eq!(a.as_slice(), &[1.0, 2.0, 0.0]);
    }

    #[test]
    fn negative_alpha_rejected() {
        let x = DataMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let z = DVector::zeros(2);
        assert!(ridge_regress(&x, &z, -1.0).is_err());
    }
}
