use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, NeighborSets};
use crate::error::{Error, Result};
use crate::linalg::{pinv_sym, sym_eigen_sorted, RANK_TOL};

/// Gram matrix of the difference vectors x_i - x_j over the neighbors of one
/// point, in the compressed k×k form indexed by the sorted neighbor list.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub index: usize,
    pub neighbors: Vec<usize>,
    pub dense: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Ratio of the largest to the smallest nonzero eigenvalue.
    pub cond: f64,
    /// Trace, equal to the sum of squared neighbor distances.
    pub trace_norm: f64,
}

impl CorrelationMatrix {
    pub fn rank(&self) -> usize {
        let max = self.eigenvalues.last().copied().unwrap_or(0.0);
        self.eigenvalues
            .iter()
            .filter(|&&l| l > RANK_TOL * max)
            .count()
    }
}

/// Weight matrix with each row supported on that point's neighbor set.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    support: NeighborSets,
}

impl WeightMatrix {
    /// Wraps a dense matrix, checking support, zero diagonal and unit row sums.
    pub fn new(entries: DMatrix<f64>, support: NeighborSets) -> Result<Self> {
        let m = support.len();
        if entries.shape() != (m, m) {
            return Err(Error::Dimension {
                expected: m,
                found: entries.nrows(),
            });
        }
        for i in 0..m {
            if support.get(i).is_empty() {
                continue;
            }
            let mut sum = 0.0;
            for j in 0..m {
                let w = entries[(i, j)];
                if w != 0.0 && !support.contains(i, j) {
                    return Err(Error::Invariant(format!(
                        "W[{i},{j}] = {w} lies outside the neighbor set"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Invariant(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { entries, support })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn support(&self) -> &NeighborSets {
        &self.support
    }

    /// Weights of row `i` in neighbor order.
    pub fn row_weights(&self, i: usize) -> Vec<f64> {
        self.support
            .get(i)
            .iter()
            .map(|&j| self.entries[(i, j)])
            .collect()
    }

    /// The residual matrix I - W.
    pub fn residual_matrix(&self) -> DMatrix<f64> {
        let m = self.entries.nrows();
        DMatrix::identity(m, m) - &self.entries
    }
}

/// Outcome of assembling all weight rows.
#[derive(Debug, Clone)]
pub struct WeightAssembly {
    pub weights: WeightMatrix,
    pub correlations: Vec<CorrelationMatrix>,
    /// Sum over points of the squared reconstruction error.
    pub reconstruction_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub kappa_max: f64,
    pub trace_max: f64,
    pub k_max: usize,
}

pub fn summarize(correlations: &[CorrelationMatrix]) -> CorrelationSummary {
    CorrelationSummary {
        kappa_max: correlations.iter().map(|c| c.cond).fold(1.0, f64::max),
        trace_max: correlations
            .iter()
            .map(|c| c.trace_norm)
            .fold(0.0, f64::max),
        k_max: correlations
            .iter()
            .map(|c| c.neighbors.len())
            .max()
            .unwrap_or(0),
    }
}

pub fn neighborhood_correlation(
    x: &DataMatrix,
    q: &NeighborSets,
    i: usize,
) -> Result<CorrelationMatrix> {
    let nb = q.get(i).to_vec();
    if nb.is_empty() {
        return Err(Error::IsolatedPoint { index: i });
    }
    let xi = x.row(i);
    let diffs: Vec<DVector<f64>> = nb.iter().map(|&j| &xi - x.row(j)).collect();
    let k = nb.len();
    let dense = DMatrix::from_fn(k, k, |a, b| diffs[a].dot(&diffs[b]));
    let (eigenvalues, _) = sym_eigen_sorted(&dense);
    let max = eigenvalues.last().copied().unwrap_or(0.0);
    let min_nonzero = eigenvalues
        .iter()
        .copied()
        .filter(|&l| l > RANK_TOL * max)
        .fold(f64::INFINITY, f64::min);
    let cond = if max > 0.0 {
        max / min_nonzero
    } else {
        f64::INFINITY
    };
    let trace_norm = dense.trace();
    Ok(CorrelationMatrix {
        index: i,
        neighbors: nb,
        dense,
        eigenvalues,
        cond,
        trace_norm,
    })
}

/// Fraction of ‖1‖² that lies in the range of C. The quantum route inverts C
/// on its range, so it reproduces the classical row only when this is 1.
pub fn ones_range_fraction(c: &CorrelationMatrix) -> f64 {
    1.0 - kernel_projection(c).norm_squared() / c.dense.nrows() as f64
}

/// Projection of the all-ones vector onto the kernel of C.
fn kernel_projection(c: &CorrelationMatrix) -> DVector<f64> {
    let k = c.dense.nrows();
    let (vals, vecs) = sym_eigen_sorted(&c.dense);
    let max = vals.last().copied().unwrap_or(0.0);
    let mut p1 = DVector::zeros(k);
    for (t, &l) in vals.iter().enumerate() {
        if max <= 0.0 || l <= RANK_TOL * max {
            let v = vecs.column(t);
            p1 += v * v.sum();
        }
    }
    p1
}

/// The pseudo-inverse formula w = C⁺1 / (1ᵀC⁺1) on its own.
pub fn pinv_weights_row(c: &CorrelationMatrix) -> Result<Vec<f64>> {
    let ones = DVector::from_element(c.dense.nrows(), 1.0);
    let u = pinv_sym(&c.dense, RANK_TOL) * &ones;
    let denom = ones.dot(&u);
    let max = c.eigenvalues.last().copied().unwrap_or(0.0);
    // 1ᵀC⁺1 is a sum of (vᵀ1)²/λ terms, so compare against 1/λ_max.
    if !(denom.is_finite() && max > 0.0 && denom.abs() > RANK_TOL / max) {
        return Err(Error::DegenerateRow {
            index: c.index,
            value: denom,
        });
    }
    Ok(u.iter().map(|v| v / denom).collect())
}

/// Minimum-norm minimizer of wᵀCw subject to Σw = 1.
///
/// When 1 lies in the range of C this is the pseudo-inverse formula
/// C⁺1 / (1ᵀC⁺1). Otherwise x_i is exactly reconstructible from its
/// neighbors and the minimizer is P1 / (1ᵀP1), P the projector onto the
/// kernel of C; this is also the limit of the formula as a singular C is
/// approached.
pub fn solve_weights_row(c: &CorrelationMatrix) -> Result<Vec<f64>> {
    let k = c.dense.nrows();
    let p1 = kernel_projection(c);
    let kernel_frac = p1.norm_squared() / k as f64;
    if kernel_frac > RANK_TOL {
        let denom = p1.sum();
        return Ok(p1.iter().map(|v| v / denom).collect());
    }
    pinv_weights_row(c)
}

/// Value of the local reconstruction objective ‖x_i − Σ_j w_j x_j‖².
pub fn row_objective(x: &DataMatrix, i: usize, neighbors: &[usize], w: &[f64]) -> f64 {
    let mut r = x.row(i);
    for (&j, &wj) in neighbors.iter().zip(w) {
        r -= x.row(j) * wj;
    }
    r.norm_squared()
}

pub fn assemble_weight_matrix(x: &DataMatrix, q: &NeighborSets) -> Result<WeightAssembly> {
    let m = x.rows();
    if q.len() != m {
        return Err(Error::Dimension {
            expected: m,
            found: q.len(),
        });
    }
    if let Some(&i) = q.isolated().first() {
        return Err(Error::IsolatedPoint { index: i });
    }
    let rows: Vec<(CorrelationMatrix, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let c = neighborhood_correlation(x, q, i)?;
            let w = solve_weights_row(&c)?;
            Ok((c, w))
        })
        .collect::<Result<_>>()?;
    let mut entries = DMatrix::zeros(m, m);
    let mut residual = 0.0;
    let mut correlations = Vec::with_capacity(m);
    for (i, (c, w)) in rows.into_iter().enumerate() {
        for (&j, &wj) in c.neighbors.iter().zip(&w) {
            entries[(i, j)] = wj;
        }
        residual += row_objective(x, i, &c.neighbors, &w);
        correlations.push(c);
    }
    Ok(WeightAssembly {
        weights: WeightMatrix::new(entries, q.clone())?,
        correlations,
        reconstruction_residual: residual,
    })
}
