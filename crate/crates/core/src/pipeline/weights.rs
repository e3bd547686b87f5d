use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{
    neighborhood_correlation, ones_range_fraction, solve_weights_row, WeightMatrix,
};
use crate::data::{DataMatrix, NeighborSets, TreeStore};
use crate::error::{Error, Result};
use crate::linalg::{next_pow2, C64};
use crate::pipeline::{ErrorEntry, QnpeConfig, ResolvedTolerances, StageLedger};
use crate::sim::{rng_for, stream_id};
use crate::subroutines::{
    block_encoding_from_purification, invert_hermitian, purification_prep, tomography,
    DifferenceParams, InversionParams, KernelPolicy, Tier,
};

/// Tomography retries when the estimated row sums to nearly zero.
pub const TOMOGRAPHY_RETRIES: usize = 3;

/// Largest ancilla + 2·system qubit count for which the spectral tier still
/// builds and checks the dense block-encoding.
const BLOCK_CHECK_QUBITS: usize = 14;

/// One quantum weight row with its diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightRow {
    pub index: usize,
    pub neighbors: Vec<usize>,
    /// Renormalized weights in neighbor order; they sum to 1.
    pub weights: Vec<f64>,
    /// Classical minimizer in neighbor order.
    pub classical: Vec<f64>,
    /// ‖W′_i − W_i‖₂.
    pub error: f64,
    /// Bound on `error` implied by the tomography and inversion precision.
    pub bound: f64,
    /// Fraction of ‖1‖² in the range of C; below 1 the inversion returns the
    /// pseudo-inverse direction rather than the classical minimizer.
    pub ones_in_range: f64,
    pub kappa: f64,
    pub inversion_bits: u32,
    pub inversion_success: f64,
    /// Weight of the inverted state outside the neighbor support.
    pub support_leakage: f64,
    /// Largest imaginary part left after removing the global phase.
    pub imaginary_residue: f64,
    /// Deviation of the dense block-encoding check, when it ran.
    pub block_slack: Option<f64>,
    pub tomography_samples: u64,
    pub retries: usize,
    pub queries: u64,
}

#[derive(Debug, Clone)]
pub struct WeightStage {
    pub weights: WeightMatrix,
    pub rows: Vec<WeightRow>,
    pub ledger: StageLedger,
    pub errors: Vec<ErrorEntry>,
}

/// Fixes the global phase on the largest amplitude and keeps each
/// amplitude's magnitude with the sign of its real part, which is what the
/// counting and interference settings of tomography observe.
fn realign(v: &DVector<C64>) -> (DVector<C64>, f64) {
    let lead = v
        .iter()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .copied()
        .unwrap_or(C64::new(1.0, 0.0));
    let phase = lead / lead.norm();
    let mut residue: f64 = 0.0;
    let out = v.map(|z| {
        let w = z / phase;
        residue = residue.max(w.im.abs());
        C64::new(w.norm().copysign(w.re), 0.0)
    });
    (out, residue)
}

fn dense_x(store_x: &TreeStore) -> Result<DataMatrix> {
    DataMatrix::new(store_x.to_dense())
}

/// One weight row by purification, block-encoded inversion, compaction to
/// the neighbor support, tomography and renormalization.
pub fn weight_row_quantum(
    store_x: &TreeStore,
    store_b: &TreeStore,
    i: usize,
    config: &QnpeConfig,
) -> Result<WeightRow> {
    let x = dense_x(store_x)?;
    let tol = config.resolve(&x)?;
    weight_row(store_x, store_b, &x, i, config, &tol)
}

pub(crate) fn weight_row(
    store_x: &TreeStore,
    store_b: &TreeStore,
    x: &DataMatrix,
    i: usize,
    config: &QnpeConfig,
    tol: &ResolvedTolerances,
) -> Result<WeightRow> {
    let diff = DifferenceParams {
        eps: tol.eps,
        delta_prime: config.delta_prime,
        t_bits: config.bits("difference"),
        eps1: Some(tol.eps1),
        tier: config.tier,
    };
    // the written distances may exceed r² by the write error
    let radius = (config.r * config.r + tol.eps1).sqrt();
    let pur = purification_prep(store_x, store_b, i, &diff, Some(radius)).map_err(|e| e.at_step(5))?;
    let nb = pur.neighbors.clone();
    let k = nb.len();
    let rho = pur.reduced().map_err(|e| e.at_step(5))?;
    let dim = rho.dim();

    let (anc, sys) = (pur.ancilla_qubits(), pur.system_qubits());
    let mut block_slack = None;
    let a = if config.tier == Tier::Circuit || anc + 2 * sys <= BLOCK_CHECK_QUBITS {
        let be = block_encoding_from_purification(&pur.prep_op()?, anc, sys).map_err(|e| e.at_step(5))?;
        block_slack = Some(be.epsilon);
        match config.tier {
            Tier::Circuit => be.block()?,
            Tier::Spectral => rho.matrix().clone(),
        }
    } else {
        rho.matrix().clone()
    };

    let lambdas = rho.eigenvalues();
    let top = lambdas.last().copied().unwrap_or(0.0);
    let lambda_min = lambdas
        .iter()
        .copied()
        .filter(|&l| l > 1e-9 * top)
        .fold(f64::INFINITY, f64::min);
    let kappa = (1.0 / lambda_min).max(2.0);

    let bi = store_b.row_state(i)?;
    let mut b = DVector::from_element(dim, C64::new(0.0, 0.0));
    for (slot, v) in b.iter_mut().zip(&bi) {
        *slot = C64::new(*v, 0.0);
    }
    let params = InversionParams {
        kappa,
        eps: tol.eps,
        t_bits: config.bits("inversion"),
        kernel: KernelPolicy::Project,
        tier: config.tier,
        unitary_cost: pur.queries,
        input_cost: 1,
    };
    let inv = invert_hermitian(&a, &b, &params, anc + sys).map_err(|e| e.at_step(6))?;

    // the support is known from the neighbor stage, so the state is
    // compacted onto its first k amplitudes
    let kt = next_pow2(k.max(1));
    let mut compact = DVector::from_element(kt, C64::new(0.0, 0.0));
    for (t, &j) in nb.iter().enumerate() {
        compact[t] = inv.state[j];
    }
    let kept = compact.norm();
    let support_leakage = (1.0 - kept * kept).max(0.0);
    compact /= C64::new(kept, 0.0);
    let (compact, imaginary_residue) = realign(&compact);

    let mut rng = rng_for(config.seed, stream_id(2, i as u64));
    let mut queries = 0;
    let mut samples = 0;
    let mut retries = 0;
    let (unit, sum) = loop {
        let tomo = tomography(&compact, config.tomography_delta, inv.queries, config.tier, &mut rng)
            .map_err(|e| e.at_step(7))?;
        queries += tomo.queries;
        samples += tomo.samples;
        let s: f64 = tomo.vector[..k].iter().sum();
        if s.abs() >= config.tomography_delta {
            break (tomo.vector, s);
        }
        if retries == TOMOGRAPHY_RETRIES {
            return Err(Error::Precision(format!(
                "row {i}: tomography sum {s:.3e} stayed below δ after {TOMOGRAPHY_RETRIES} retries"
            ))
            .at_step(7));
        }
        retries += 1;
    };
    let weights: Vec<f64> = unit[..k].iter().map(|v| v / sum).collect();

    let mut sets = vec![Vec::new(); x.rows()];
    sets[i] = nb.clone();
    let c = neighborhood_correlation(x, &NeighborSets::new(sets)?, i)?;
    let classical = solve_weights_row(&c)?;
    let error = weights
        .iter()
        .zip(&classical)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    // unit-vector error η becomes η(1 + √k/|s|)/|s| after division by the sum
    let eta = config.tomography_delta + tol.eps;
    let s = sum.abs();
    let bound = eta * (1.0 + (k as f64).sqrt() / s) / s;
    Ok(WeightRow {
        index: i,
        neighbors: nb,
        weights,
        classical,
        error,
        bound,
        ones_in_range: ones_range_fraction(&c),
        kappa,
        inversion_bits: inv.t_bits,
        inversion_success: inv.success_probability,
        support_leakage,
        imaginary_residue,
        block_slack,
        tomography_samples: samples,
        retries,
        queries,
    })
}

/// All weight rows in parallel, one random stream per row.
pub fn weight_matrix_quantum(
    store_x: &TreeStore,
    store_b: &TreeStore,
    config: &QnpeConfig,
) -> Result<WeightMatrix> {
    let x = dense_x(store_x)?;
    let tol = config.resolve(&x)?;
    Ok(weight_stage(store_x, store_b, &x, config, &tol)?.weights)
}

pub fn weight_stage(
    store_x: &TreeStore,
    store_b: &TreeStore,
    x: &DataMatrix,
    config: &QnpeConfig,
    tol: &ResolvedTolerances,
) -> Result<WeightStage> {
    let m = x.rows();
    let rows: Vec<WeightRow> = (0..m)
        .into_par_iter()
        .map(|i| {
            weight_row(store_x, store_b, x, i, config, tol).map_err(|e| match e {
                Error::Step { step, source } => Error::Step {
                    step,
                    source: Box::new(Error::Branch {
                        i,
                        j: i,
                        message: source.to_string(),
                    }),
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let mut entries = DMatrix::zeros(m, m);
    let mut sets = Vec::with_capacity(m);
    let mut ledger = StageLedger::new("weights", &[4, 5, 6, 7]);
    let mut errors = Vec::new();
    for r in &rows {
        for (&j, &w) in r.neighbors.iter().zip(&r.weights) {
            entries[(r.index, j)] = w;
        }
        sets.push(r.neighbors.clone());
        ledger.add("row_preparations", r.queries);
        errors.push(ErrorEntry::new(
            "weights",
            format!("row {} l2 error", r.index),
            r.error,
            r.bound,
        ));
        if let Some(slack) = r.block_slack {
            errors.push(ErrorEntry::new(
                "weights",
                format!("row {} block-encoding slack", r.index),
                slack,
                1e-8,
            ));
        }
    }
    let weights = WeightMatrix::new(entries, NeighborSets::new(sets)?)?;
    Ok(WeightStage {
        weights,
        rows,
        ledger,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::radius_neighbors;
    use crate::data::StoreKind;

    fn stores(rows: &[Vec<f64>], q: &NeighborSets) -> (DataMatrix, TreeStore, TreeStore) {
        let x = DataMatrix::from_rows(rows).unwrap();
        let sx = TreeStore::build(x.entries(), StoreKind::X).unwrap();
        let sb = TreeStore::build(&q.indicator(), StoreKind::B).unwrap();
        (x, sx, sb)
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, -1.0]];
        let q = NeighborSets::new(vec![vec![1, 2], vec![0], vec![0]]).unwrap();
        let (_, sx, sb) = stores(&rows, &q);
        for tier in [Tier::Spectral, Tier::Circuit] {
            let mut c = QnpeConfig::new(1.5, 1);
            c.eps0 = Some(1.0);
            c.tier = tier;
            let row = weight_row_quantum(&sx, &sb, 0, &c).unwrap();
            assert!((row.weights[0] - 0.5).abs() < 0.05, "{tier} {:?}", row.weights);
            assert!((row.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_row_gives_pseudo_inverse_weights() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        let q = NeighborSets::new(vec![vec![1, 2], vec![0], vec![0]]).unwrap();
        let (_, sx, sb) = stores(&rows, &q);
        let row = weight_row_quantum(&sx, &sb, 0, &QnpeConfig::new(2.5, 1)).unwrap();
        assert!((row.weights[0] - 1.0 / 3.0).abs() < 0.05, "{:?}", row.weights);
        assert!((row.weights[1] - 2.0 / 3.0).abs() < 0.05);
        assert!(row.ones_in_range < 1.0);
    }

    fn square() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0, 0.1, 0.0],
            vec![1.0, 0.0, 0.0, 0.2],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.3, 0.0],
            vec![3.0, 3.0, 0.0, 0.1],
            vec![4.0, 3.0, 0.2, 0.0],
            vec![3.0, 4.0, 0.0, 0.3],
            vec![4.0, 4.1, 0.1, 0.0],
        ]
    }

    #[test]
    fn square_corners_match_classical_rows() {
        let x = DataMatrix::from_rows(&square()).unwrap();
        let q = radius_neighbors(&x, 1.2).unwrap();
        let (x, sx, sb) = stores(&square(), &q);
        let c = QnpeConfig::new(1.2, 2);
        let tol = c.resolve(&x).unwrap();
        let st = weight_stage(&sx, &sb, &x, &c, &tol).unwrap();
        for r in &st.rows {
            assert!(r.error <= 0.05, "row {} error {}", r.index, r.error);
        }
        assert_eq!(st.ledger.total, st.rows.iter().map(|r| r.queries).sum::<u64>());
    }

    #[test]
    fn relabeling_permutes_rows() {
        let perm = [3, 0, 6, 1, 7, 2, 5, 4];
        let rows = square();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
        let c = QnpeConfig::new(1.2, 2);
        let run = |rows: &[Vec<f64>]| {
            let x = DataMatrix::from_rows(rows).unwrap();
            let q = radius_neighbors(&x, 1.2).unwrap();
            let (x, sx, sb) = stores(rows, &q);
            let tol = c.resolve(&x).unwrap();
            weight_stage(&sx, &sb, &x, &c, &tol).unwrap().weights
        };
        let w = run(&rows);
        let wp = run(&permuted);
        for a in 0..8 {
            for b in 0..8 {
                let d = (wp.entries()[(a, b)] - w.entries()[(perm[a], perm[b])]).abs();
                assert!(d < 0.1, "({a}, {b}) differs by {d}");
                assert_eq!(wp.entries()[(a, b)] == 0.0, w.entries()[(perm[a], perm[b])] == 0.0);
            }
        }
    }
}
