//! Quantum pipeline: neighbor finding, weight matrix and transformation,
//! each built from the subroutines and metered per stage.

mod config;
mod ledger;
mod neighbors;
mod run;
mod transform;
mod weights;

pub use config::{QnpeConfig, ResolvedTolerances, T_BITS_KEYS};
pub use ledger::{ErrorEntry, QueryLedger, StageLedger};
pub use neighbors::{find_neighbors_quantum, neighbor_stage, NeighborStage};
pub use weights::{
    weight_matrix_quantum, weight_row_quantum, weight_stage, WeightRow, WeightStage,
    TOMOGRAPHY_RETRIES,
};
pub use transform::{transform_stage, transformation_quantum, Direction, SigmaFind, TransformStage};
pub use run::{run_quantum_npe, Diagnostics, NeighborDiagnostics, QnpeResult, BALANCE_WARNING};
