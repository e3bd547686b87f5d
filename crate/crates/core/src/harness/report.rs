use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classical::{ClassicalParams, ClassicalRun, CorrelationSummary, CostReport};
use crate::error::{Error, Result};
use crate::harness::RunSummary;
use crate::linalg::{from_rows, to_rows};
use crate::pipeline::QnpeResult;

/// Serializable output of a classical run. Timings are left out so equal
/// inputs give equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalReport {
    pub mode: String,
    pub params: ClassicalParams,
    pub fingerprint: String,
    pub neighbor_sets: Vec<Vec<usize>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    /// Σ_i ‖x_i − Σ_j W_ij x_j‖².
    pub reconstruction_residual: f64,
    /// max_i |Σ_j W_ij − 1|.
    pub row_sum_deviation: f64,
    /// ‖M𝟏‖ / ‖M‖_F.
    pub kernel_residual: f64,
    /// All eigenvalues of M, ascending.
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    /// Singular values of I − W belonging to the selected eigenvectors.
    pub sigma_list: Vec<f64>,
    /// n×d directions, row-major.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub alpha: f64,
    pub kappa_x: f64,
    pub correlation: CorrelationSummary,
    pub cost: CostReport,
}

impl ClassicalReport {
    pub fn from_run(run: &ClassicalRun, fingerprint: &str) -> Self {
        let w = run.weights();
        let m = &run.spectral.m;
        let ones = nalgebra::DVector::from_element(m.nrows(), 1.0);
        let mf = m.norm();
        Self {
            mode: "classical".into(),
            params: run.params,
            fingerprint: fingerprint.to_string(),
            neighbor_sets: run.neighbors.sets().to_vec(),
            w: to_rows(w),
            reconstruction_residual: run.assembly.reconstruction_residual,
            row_sum_deviation: (0..w.nrows())
                .map(|i| (w.row(i).sum() - 1.0).abs())
                .fold(0.0, f64::max),
            kernel_residual: if mf > 0.0 { (m * ones).norm() / mf } else { 0.0 },
            eigenvalues: run.spectral.eigenvalues.clone(),
            kernel_dim: run.spectral.kernel_dim,
            sigma_list: run.spectral.selected_sigma(),
            a: to_rows(run.a()),
            alpha: run.embedding.alpha,
            kappa_x: run.embedding.kappa_x,
            correlation: run.correlation,
            cost: run.cost,
        }
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.a)
    }

    pub fn w_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.w)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary::from_parts(
            "classical",
            &self.fingerprint,
            self.neighbor_sets.clone(),
            self.w.clone(),
            self.sigma_list.clone(),
            &self.a_matrix(),
        )
    }
}

/// Reads a classical or quantum result file into its comparable summary.
pub fn load_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("mode").and_then(|m| m.as_str()) == Some("classical") {
        let r: ClassicalReport = serde_json::from_value(value)?;
        Ok(r.summary())
    } else if value.get("query_ledger").is_some() {
        let r: QnpeResult = serde_json::from_value(value)?;
        Ok(r.summary())
    } else if value.get("directions").is_some() {
        Ok(serde_json::from_value(value)?)
    } else {
        Err(Error::Comparison(format!(
            "{} is neither a classical nor a quantum result",
            path.display()
        )))
    }
}
