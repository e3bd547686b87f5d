use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{herm_eigen_sorted, C64};

/// A density operator over some subset of registers.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    matrix: DMatrix<C64>,
}

impl DensityOp {
    pub fn new(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        herm_eigen_sorted(&self.matrix).0
    }

    /// Hermitian, positive semidefinite, unit trace.
    pub fn validate(&self) -> Result<()> {
        let herm = (&self.matrix - self.matrix.adjoint()).norm();
        if herm > 1e-12 {
            return Err(Error::Invariant(format!(
                "density operator not Hermitian ({herm:e})"
            )));
        }
        if let Some(&min) = self.eigenvalues().first() {
            if min < -1e-10 {
                return Err(Error::Invariant(format!("negative eigenvalue {min:e}")));
            }
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::Invariant(format!("trace {tr} is not 1")));
        }
        Ok(())
    }

    /// Real part, for operators known to be real symmetric.
    pub fn real(&self) -> DMatrix<f64> {
        self.matrix.map(|z| z.re)
    }
}
