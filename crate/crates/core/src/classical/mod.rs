//! Exact NPE: neighbor search, locally linear weights, the bottom spectrum of
//! (I - W)ᵀ(I - W), and ridge regression onto the data.

mod neighbors;
mod run;
mod spectral;
mod weights;

pub use neighbors::{knn_neighbors, radius_neighbors};
pub use run::{
    run_classical_npe, ClassicalParams, ClassicalRun, CostReport, NeighborRule, StepTimings,
};
pub use spectral::{
    default_alpha, embed, embedding_objective, ridge_regress, spectral_problem, EmbeddingResult,
    SpectralResult,
};
pub use weights::{
    assemble_weight_matrix, neighborhood_correlation, ones_range_fraction, pinv_weights_row,
    row_objective, solve_weights_row, summarize, CorrelationMatrix, CorrelationSummary,
    WeightAssembly, WeightMatrix,
};
