use serde::{Deserialize, Serialize};

use crate::classical::{run_classical_npe, ClassicalParams, NeighborRule};
use crate::data::{DataMatrix, NeighborSets, StoreKind, TreeStore};
use crate::error::{Error, Result};
use crate::harness::{compare, ComparisonReport, RunSummary};
use crate::pipeline::{
    neighbor_stage, transform_stage, weight_stage, Direction, ErrorEntry, QnpeConfig,
    QueryLedger, ResolvedTolerances, SigmaFind, WeightRow,
};

/// Neighborhood sizes differing by more than this factor break the balanced
/// neighbor assumption behind the stage-1 cost.
pub const BALANCE_WARNING: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborDiagnostics {
    pub k_marked: usize,
    pub estimation_bits: u32,
    pub iterations: u64,
    pub amplified_probability: f64,
    pub samples: u64,
    pub margin_violations: Vec<(usize, usize)>,
    /// max k^(i) / min k^(i).
    pub balance_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub neighbors: NeighborDiagnostics,
    pub weight_rows: Vec<WeightRow>,
    pub qsve_bits: u32,
    pub sigma_finds: Vec<SigmaFind>,
    pub directions: Vec<Direction>,
}

/// Output of the quantum pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QnpeResult {
    pub config: QnpeConfig,
    pub tolerances: ResolvedTolerances,
    pub fingerprint: String,
    #[serde(rename = "K_estimate")]
    pub k_estimate: f64,
    pub neighbor_sets: NeighborSets,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    /// Distinct σ̄, ascending.
    pub sigma_list: Vec<f64>,
    /// Classical readouts of |a_j>, unit norm.
    pub a_states: Vec<Vec<f64>>,
    /// Position in `sigma_list` of each entry of `a_states`.
    pub sigma_index: Vec<usize>,
    pub query_ledger: QueryLedger,
    pub error_report: Vec<ErrorEntry>,
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub comparison: Option<ComparisonReport>,
}

impl QnpeResult {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            mode: "quantum".into(),
            fingerprint: self.fingerprint.clone(),
            neighbor_sets: self.neighbor_sets.sets().to_vec(),
            w: self.w.clone(),
            sigma_list: self.sigma_index.iter().map(|&k| self.sigma_list[k]).collect(),
            directions: self.a_states.clone(),
        }
    }
}

/// Neighbor finding, weight matrix and transformation, in order, with every
/// error tagged by the step that raised it.
pub fn run_quantum_npe(x: &DataMatrix, config: &QnpeConfig) -> Result<QnpeResult> {
    let tol = config.resolve(x)?;
    let store_x = TreeStore::build(x.entries(), StoreKind::X)?;
    let mut ledger = QueryLedger::default();
    let mut errors = Vec::new();

    // steps 1-3
    let ns = neighbor_stage(&store_x, config.r, tol.eps1, tol.delta, config)?;
    if let Some(&i) = ns.neighbors.isolated().first() {
        return Err(Error::IsolatedPoint { index: i }.at_step(3));
    }
    let counts = ns.neighbors.counts();
    let kmin = counts.iter().copied().min().unwrap_or(0).max(1);
    let balance_ratio = ns.neighbors.k_max() as f64 / kmin as f64;
    if balance_ratio > BALANCE_WARNING {
        log::warn!("neighbor counts are unbalanced: max/min = {balance_ratio:.1}");
    }
    errors.push(ErrorEntry::new(
        "neighbors",
        "relative error of K estimate",
        (ns.k_estimate - ns.k_marked as f64).abs() / ns.k_marked.max(1) as f64,
        0.5,
    ));
    errors.push(ErrorEntry::new(
        "neighbors",
        "pairs within the write error of r²",
        ns.margin_violations.len() as f64,
        0.0,
    ));
    ledger.push(ns.ledger.clone());

    // step 4 and steps 5-7
    let store_b = TreeStore::build(&ns.neighbors.indicator(), StoreKind::B).map_err(|e| e.at_step(4))?;
    let ws = weight_stage(&store_x, &store_b, x, config, &tol)?;
    errors.extend(ws.errors.iter().cloned());
    ledger.push(ws.ledger.clone());

    // steps 8-10
    let store_d = TreeStore::build_residual(&ws.weights).map_err(|e| e.at_step(8))?;
    let ts = transform_stage(&store_d, &store_x, x, config, &tol)?;
    errors.extend(ts.errors.iter().cloned());
    ledger.push(ts.ledger.clone());
    ledger.push(ts.readout.clone());

    let w = ws.weights.entries();
    let mut result = QnpeResult {
        config: config.clone(),
        tolerances: tol,
        fingerprint: x.fingerprint(),
        k_estimate: ns.k_estimate,
        neighbor_sets: ns.neighbors.clone(),
        w: (0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect(),
        sigma_list: ts.sigma_list.clone(),
        a_states: ts.directions.iter().map(|d| d.readout.clone()).collect(),
        sigma_index: ts.directions.iter().map(|d| d.sigma_index).collect(),
        query_ledger: ledger,
        error_report: errors,
        diagnostics: Diagnostics {
            neighbors: NeighborDiagnostics {
                k_marked: ns.k_marked,
                estimation_bits: ns.estimation_bits,
                iterations: ns.iterations,
                amplified_probability: ns.amplified_probability,
                samples: ns.samples,
                margin_violations: ns.margin_violations,
                balance_ratio,
            },
            weight_rows: ws.rows,
            qsve_bits: ts.qsve_bits,
            sigma_finds: ts.finds,
            directions: ts.directions,
        },
        comparison: None,
    };
    if config.compare {
        let classical = run_classical_npe(
            x,
            &ClassicalParams {
                neighbors: NeighborRule::Radius(config.r),
                d: config.d,
                alpha: Some(tol.alpha),
            },
        )?;
        let reference = RunSummary::from_classical(&classical, &result.fingerprint);
        result.comparison = Some(compare(&reference, &result.summary())?);
    }
    Ok(result)
}
