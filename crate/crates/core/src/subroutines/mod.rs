//! Quantum subroutines.
//!
//! Every expensive routine runs in one of two tiers. [`Tier::Circuit`]
//! executes the construction on the statevector simulator; it is limited to a
//! few dozen qubits. [`Tier::Spectral`] computes the same output distribution
//! from an exact decomposition of the operator involved, with every
//! estimation register quantized exactly as the circuit would quantize it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

mod amplify;
mod block_encoding;
mod difference;
mod distance;
mod estimation;
mod extended;
mod fixed_point;
mod inversion;
mod minimum;
mod phase;
mod purification;
mod qsve;
mod tomography;
pub use block_encoding::{
    block_encoding_from_purification, operator_norm, BlockEncoding, BlockEncodingReport,
    BLOCK_TOLERANCE,
};
pub use difference::{
    difference_scales, difference_state_prep, difference_target, difference_with_oracle,
    parallel_amplitude_handling, BranchPrep, BranchReport, DifferenceOutput, DifferenceParams,
    ParallelOutput,
};
pub use distance::DistanceOracle;
pub use amplify::{amplitude_amplify, grover_operator, grover_probability, AmplifyOutput};
pub use estimation::{
    amplitude_estimation, boosted_amplitude_estimation, boosting_repetitions, qae_distribution,
    qae_error_bound, qae_grid_value, sample_qae, QAE_CONFIDENCE,
};
pub use fixed_point::{chebyshev_t, fixed_point_search, FixedPointOutput, FixedPointSchedule};
pub use purification::{
    dense_local_density, purification_prep, PurificationOutput, POST_SELECTION_FLOOR,
};
pub use inversion::{
    invert_block_encoded, invert_hermitian, lemma4_queries, pseudo_inverse_direction,
    InversionOutput, InversionParams, KernelPolicy, CIRCUIT_MAX_DIM, SPAN_TOLERANCE,
};
pub use tomography::{
    real_amplitudes, tomography, tomography_samples, TomographyOutput, REAL_TOLERANCE,
};
pub use extended::{
    extended_label, extended_matrix_phase_estimation, extended_scale, ridge_bits,
    ridge_regress_quantum, ExtendedPe, RidgeOutput, RidgeParams, EXTENDED_CIRCUIT_MAX_DIM,
};
pub use minimum::{durr_hoyer_budget, find_minimum, LabelMass, MinimumOutput};
pub use qsve::{qsve, qsve_bits, qsve_label, qsve_walk, QsveModel, QsveOutput};
pub use phase::{
    filtered_average, median_distribution, phase_estimation_circuit, qpe_amplitude,
    qpe_distribution, qpe_filter_circuit,
};
/// Which simulation tier executes a subroutine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Circuit,
    Spectral,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Circuit => "circuit",
            Tier::Spectral => "spectral",
        })
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "circuit" => Ok(Tier::Circuit),
            "spectral" => Ok(Tier::Spectral),
            other => Err(Error::Parameter(format!(
                "unknown tier `{other}` (expected circuit or spectral)"
            ))),
        }
    }
}

/// Outcome of an estimation subroutine, serialized as a JSON fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub point_estimate: f64,
    pub grid_bits: u32,
    /// Lower bound on the probability that the estimate is within
    /// `error_bound`.
    pub confidence: f64,
    pub queries: u64,
    pub error_bound: f64,
    pub measured_error: Option<f64>,
}

impl EstimateReport {
    /// Fills in the measured error against a known true value.
    pub fn with_truth(mut self, truth: f64) -> Self {
        self.measured_error = Some((self.point_estimate - truth).abs());
        self
    }
}
