use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classical::ClassicalRun;
use crate::error::{Error, Result};
use crate::linalg::{orient_largest, principal_angles, to_rows};

/// The parts of a classical or quantum run that can be compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub fingerprint: String,
    pub neighbor_sets: Vec<Vec<usize>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub sigma_list: Vec<f64>,
    /// Embedding directions, one unit vector per entry.
    pub directions: Vec<Vec<f64>>,
}

impl RunSummary {
    pub fn from_classical(run: &ClassicalRun, fingerprint: &str) -> Self {
        Self::from_parts(
            "classical",
            fingerprint,
            run.neighbors.sets().to_vec(),
            to_rows(run.weights()),
            run.spectral.selected_sigma(),
            run.a(),
        )
    }

    /// Builds a summary from an n×d direction matrix, normalizing and
    /// orienting each column.
    pub fn from_parts(
        mode: &str,
        fingerprint: &str,
        neighbor_sets: Vec<Vec<usize>>,
        w: Vec<Vec<f64>>,
        sigma_list: Vec<f64>,
        a: &DMatrix<f64>,
    ) -> Self {
        let directions = (0..a.ncols())
            .map(|c| {
                let mut v = a.column(c).into_owned();
                let n = v.norm();
                if n > 0.0 {
                    v /= n;
                }
                orient_largest(&mut v);
                v.iter().copied().collect()
            })
            .collect();
        Self {
            mode: mode.into(),
            fingerprint: fingerprint.to_string(),
            neighbor_sets,
            w,
            sigma_list,
            directions,
        }
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        let n = self.directions.first().map_or(0, |v| v.len());
        DMatrix::from_fn(n, self.directions.len(), |r, c| self.directions[c][r])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub fingerprint: String,
    /// |Q_i ∩ Q'_i| / |Q_i ∪ Q'_i| per point (1 when both are empty).
    pub jaccard: Vec<f64>,
    pub min_jaccard: f64,
    pub neighbor_sets_equal: bool,
    /// ‖W − W'‖_F.
    pub w_frobenius_delta: f64,
    /// max_i ‖W_i − W'_i‖₂.
    pub w_max_row_delta: f64,
    /// σ'_j − σ_j over the common prefix.
    pub sigma_deviation: Vec<f64>,
    /// Principal angles between the two direction subspaces, degrees.
    pub principal_angles_deg: Vec<f64>,
    pub max_angle_deg: f64,
    /// |cos| between matching directions.
    pub direction_cosines: Vec<f64>,
}

fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.iter().filter(|j| b.contains(j)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Neighbor, weight, spectrum and subspace agreement between two runs on the
/// same dataset.
pub fn compare(reference: &RunSummary, other: &RunSummary) -> Result<ComparisonReport> {
    if reference.fingerprint != other.fingerprint {
        return Err(Error::Comparison(format!(
            "dataset fingerprints differ: {} vs {}",
            reference.fingerprint, other.fingerprint
        )));
    }
    let m = reference.neighbor_sets.len();
    if other.neighbor_sets.len() != m || reference.w.len() != m || other.w.len() != m {
        return Err(Error::Comparison(format!(
            "point counts differ: {m} vs {}",
            other.neighbor_sets.len()
        )));
    }
    let jac: Vec<f64> = reference
        .neighbor_sets
        .iter()
        .zip(&other.neighbor_sets)
        .map(|(a, b)| jaccard(a, b))
        .collect();
    let mut frob = 0.0;
    let mut row_max: f64 = 0.0;
    for (a, b) in reference.w.iter().zip(&other.w) {
        if a.len() != b.len() {
            return Err(Error::Comparison("weight matrices differ in shape".into()));
        }
        let r: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        frob += r;
        row_max = row_max.max(r.sqrt());
    }
    let n = reference.directions.first().map_or(0, |v| v.len());
    if other.directions.iter().chain(&reference.directions).any(|v| v.len() != n) {
        return Err(Error::Comparison("direction vectors differ in length".into()));
    }
    let angles: Vec<f64> = if reference.directions.is_empty() || other.directions.is_empty() {
        Vec::new()
    } else {
        principal_angles(&reference.a_matrix(), &other.a_matrix())
            .into_iter()
            .map(f64::to_degrees)
            .collect()
    };
    Ok(ComparisonReport {
        fingerprint: reference.fingerprint.clone(),
        min_jaccard: jac.iter().copied().fold(1.0, f64::min),
        neighbor_sets_equal: reference.neighbor_sets == other.neighbor_sets,
        jaccard: jac,
        w_frobenius_delta: frob.sqrt(),
        w_max_row_delta: row_max,
        sigma_deviation: reference
            .sigma_list
            .iter()
            .zip(&other.sigma_list)
            .map(|(a, b)| b - a)
            .collect(),
        max_angle_deg: angles.iter().copied().fold(0.0, f64::max),
        principal_angles_deg: angles,
        direction_cosines: reference
            .directions
            .iter()
            .zip(&other.directions)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().abs())
            .collect(),
    })
}
