use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classical::{
    assemble_weight_matrix, default_alpha, embed, knn_neighbors, radius_neighbors,
    spectral_problem, summarize, CorrelationSummary, EmbeddingResult, SpectralResult,
    WeightAssembly,
};
use crate::data::{DataMatrix, NeighborSets};
use crate::error::{Error, Result};

/// How neighbor sets are formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborRule {
    Radius(f64),
    Knn(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalParams {
    pub neighbors: NeighborRule,
    pub d: usize,
    /// Ridge constant; `None` selects [`default_alpha`].
    pub alpha: Option<f64>,
}

/// Operation counts next to the m·n·k³ + d·m² cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub predicted: f64,
    /// Distance evaluations times n.
    pub neighbor_work: f64,
    /// Correlation entries times n plus k³ per local solve.
    pub weight_work: f64,
    /// Eigen-solve and regression work.
    pub embedding_work: f64,
}

impl CostReport {
    pub fn measured(&self) -> f64 {
        self.neighbor_work + self.weight_work + self.embedding_work
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StepTimings {
    pub neighbors: f64,
    pub weights: f64,
    pub spectral: f64,
    pub regression: f64,
}

#[derive(Debug, Clone)]
pub struct ClassicalRun {
    pub params: ClassicalParams,
    pub neighbors: NeighborSets,
    pub assembly: WeightAssembly,
    pub correlation: CorrelationSummary,
    pub spectral: SpectralResult,
    pub embedding: EmbeddingResult,
    pub cost: CostReport,
    pub timings: StepTimings,
}

impl ClassicalRun {
    pub fn weights(&self) -> &DMatrix<f64> {
        self.assembly.weights.entries()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.embedding.a
    }
}

/// Neighbor search, local weights, bottom eigenvectors of M, and ridge
/// regression, in that order.
pub fn run_classical_npe(x: &DataMatrix, params: &ClassicalParams) -> Result<ClassicalRun> {
    if params.d == 0 {
        return Err(Error::Parameter("d must be at least 1".into()));
    }
    let t0 = Instant::now();
    let neighbors = match params.neighbors {
        NeighborRule::Radius(r) => radius_neighbors(x, r)?,
        NeighborRule::Knn(k) => knn_neighbors(x, k)?,
    };
    let t1 = Instant::now();
    let assembly = assemble_weight_matrix(x, &neighbors)?;
    let t2 = Instant::now();
    let spectral = spectral_problem(&assembly.weights, params.d)?;
    let t3 = Instant::now();
    let alpha = params.alpha.unwrap_or_else(|| default_alpha(x));
    let embedding = embed(x, &spectral, alpha)?;
    let t4 = Instant::now();

    let m = x.rows() as f64;
    let n = x.cols() as f64;
    let d = params.d as f64;
    let k = neighbors.k_max() as f64;
    let cost = CostReport {
        predicted: m * n * k.powi(3) + d * m * m,
        neighbor_work: m * m * n,
        weight_work: neighbors
            .counts()
            .iter()
            .map(|&c| (c * c) as f64 * n + (c as f64).powi(3))
            .sum(),
        embedding_work: m.powi(3) + d * (n.powi(3) + m * n),
    };
    let timings = StepTimings {
        neighbors: (t1 - t0).as_secs_f64(),
        weights: (t2 - t1).as_secs_f64(),
        spectral: (t3 - t2).as_secs_f64(),
        regression: (t4 - t3).as_secs_f64(),
    };
    let correlation = summarize(&assembly.correlations);
    Ok(ClassicalRun {
        params: *params,
        neighbors,
        assembly,
        correlation,
        spectral,
        embedding,
        cost,
        timings,
    })
}
