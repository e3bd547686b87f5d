use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, NeighborSets, TreeStore};
use crate::error::{Error, Result};
use crate::linalg::qubits_for;
use crate::pipeline::{QnpeConfig, StageLedger};
use crate::sim::{rng_for, sample_index, stream_id, Op};
use crate::subroutines::{
    amplitude_amplify, boosted_amplitude_estimation, boosting_repetitions, qae_error_bound,
    DistanceOracle,
};

/// Failure probability targeted by each boosted pair-count estimate.
const COUNT_FAILURE: f64 = 0.01;

/// Everything the neighbor stage measured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeighborStage {
    pub neighbors: NeighborSets,
    pub k_estimate: f64,
    /// Marked pairs under the ε₁-quantized predicate.
    pub k_marked: usize,
    /// Estimation bits of the accepted pair-count estimate.
    pub estimation_bits: u32,
    /// Grover iterations applied before each readout.
    pub iterations: u64,
    pub amplified_probability: f64,
    pub samples: u64,
    /// Pairs whose quantized decision differs from the exact one.
    pub margin_violations: Vec<(usize, usize)>,
    pub ledger: StageLedger,
}

/// Pair count estimate and neighbor sets from amplitude estimation,
/// amplification and repeated measurement over all (i, j) pairs.
pub fn find_neighbors_quantum(store_x: &TreeStore, r: f64, config: &QnpeConfig) -> Result<(NeighborSets, f64)> {
    let tol = config.resolve(&DataMatrix::new(store_x.to_dense())?)?;
    let s = neighbor_stage(store_x, r, tol.eps1, tol.delta, config)?;
    Ok((s.neighbors, s.k_estimate))
}

pub fn neighbor_stage(
    store_x: &TreeStore,
    r: f64,
    eps1: f64,
    delta: f64,
    config: &QnpeConfig,
) -> Result<NeighborStage> {
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("radius must be positive, got {r}")));
    }
    let m = store_x.rows();
    let mp = store_x.row_width();
    let q = qubits_for(mp);
    let oracle = DistanceOracle::new(store_x, store_x, eps1, delta).map_err(|e| e.at_step(1))?;
    let r2 = r * r;
    let mut marked = vec![false; mp * mp];
    let mut violations = Vec::new();
    let mut k_marked = 0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let quantized = oracle.format().quantize(oracle.exact(i, j)).map_err(|e| e.at_step(1))? <= r2;
            marked[i * mp + j] = quantized;
            k_marked += quantized as usize;
            if quantized != (oracle.exact(i, j) <= r2) {
                violations.push((i, j));
            }
        }
    }
    if !violations.is_empty() {
        log::warn!(
            "{} pair(s) sit within the distance-write error of r²; their neighbor status follows the quantized distance",
            violations.len()
        );
    }
    let prep = Op::hadamard(2 * q);
    let mut rng = rng_for(config.seed, stream_id(1, 0));
    let reps = boosting_repetitions(COUNT_FAILURE);

    // pair count: widen the estimation register until the estimate is
    // resolved to within a third of itself
    let mut grover = 0u64;
    let t_max = 2 * q as u32 + 4;
    let schedule: Vec<u32> = match config.bits("neighbor_estimation") {
        Some(t) => vec![t],
        None => (3..=t_max).collect(),
    };
    let mut accepted = None;
    for &t in &schedule {
        let est = boosted_amplitude_estimation(&prep, &marked, t, reps, config.tier, &mut rng)
            .map_err(|e| e.at_step(1))?;
        grover += est.queries;
        let a = est.point_estimate;
        if a > 0.0 && (schedule.len() == 1 || qae_error_bound(a, t) <= a / 3.0) {
            accepted = Some((a, t));
            break;
        }
    }
    let (a_hat, t_est) = match accepted {
        Some(v) => v,
        None => return Err(Error::NoNeighbors { estimate: 0.0 }.at_step(1)),
    };
    let k_estimate = a_hat * (mp * mp) as f64;
    let theta = a_hat.sqrt().asin();
    let iterations = (PI / (4.0 * theta)).floor() as u64;
    let amp = amplitude_amplify(&prep, &marked, iterations, config.tier).map_err(|e| e.at_step(2))?;
    // a = 1/2 (two points) stays at exactly 1/2 for every iteration count
    if amp.probability < 0.5 - 1e-12 {
        return Err(Error::Precision(format!(
            "amplified neighbor probability {:.3} is below 1/2 after {iterations} iterations; raise the neighbor_estimation bits",
            amp.probability
        ))
        .at_step(2));
    }
    let dist: Vec<f64> = amp.state.amplitudes().iter().map(|z| z.norm_sqr()).collect();
    let samples = (config.sample_factor * k_estimate * k_estimate.ln().max(1.0)).ceil() as u64;
    let mut sets = vec![Vec::new(); m];
    for _ in 0..samples {
        let idx = sample_index(&dist, &mut rng);
        // the comparison flag is measured together with the pair
        if marked[idx] {
            sets[idx / mp].push(idx % mp);
        }
    }
    grover += samples * iterations;
    // each Grover step computes and uncomputes the distance register, and
    // each readout computes it once more for the comparison flag
    oracle.bill_calls(oracle.all_pairs_cost(), 2 * grover + samples);

    let neighbors = NeighborSets::new(sets).map_err(|e| e.at_step(3))?;
    let mut ledger = StageLedger::new("neighbors", &[1, 2, 3]);
    ledger.add("grover_iterations", grover);
    ledger.add("distance_oracle", oracle.queries());
    Ok(NeighborStage {
        neighbors,
        k_estimate,
        k_marked,
        estimation_bits: t_est,
        iterations,
        amplified_probability: amp.probability,
        samples,
        margin_violations: violations,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::radius_neighbors;
    use crate::data::{DataMatrix, StoreKind};
    use crate::subroutines::Tier;

    fn stage(rows: &[Vec<f64>], r: f64, seed: u64, tier: Tier) -> Result<NeighborStage> {
        let x = DataMatrix::from_rows(rows).unwrap();
        let st = TreeStore::build(x.entries(), StoreKind::X).unwrap();
        let mut c = QnpeConfig::new(r, 1);
        c.seed = seed;
        c.tier = tier;
        neighbor_stage(&st, r, 1e-4, 0.01, &c)
    }

    #[test]
    fn two_points() {
        let rows = vec![vec![0.0, 0.0], vec![0.5, 0.0]];
        for tier in [Tier::Spectral, Tier::Circuit] {
            let s = stage(&rows, 1.0, 3, tier).unwrap();
            assert_eq!(s.k_marked, 2);
            assert_eq!(s.neighbors.get(0), &[1]);
            assert_eq!(s.neighbors.get(1), &[0]);
        }
    }

    #[test]
    fn all_pairs_leaves_amplification_idle() {
        let rows = vec![vec![0.0, 0.0], vec![0.3, 0.0], vec![0.0, 0.3], vec![0.3, 0.3]];
        let s = stage(&rows, 1.0, 5, Tier::Spectral).unwrap();
        assert_eq!(s.k_marked, 12);
        assert_eq!(s.iterations, 0);
        assert!((s.amplified_probability - 0.75).abs() < 1e-12);
        let x = DataMatrix::from_rows(&rows).unwrap();
        assert_eq!(s.neighbors, radius_neighbors(&x, 1.0).unwrap());
    }

    #[test]
    fn empty_radius_is_an_error() {
        let rows = vec![vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]];
        assert!(matches!(
            stage(&rows, 0.5, 1, Tier::Spectral),
            Err(e) if e.kind() == "no-neighbors"
        ));
    }

    #[test]
    fn tiers_agree() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![(i / 4) as f64 * 3.0 + 0.2 * (i % 4) as f64, 0.1 * (i % 2) as f64])
            .collect();
        let a = stage(&rows, 0.5, 11, Tier::Spectral).unwrap();
        let b = stage(&rows, 0.5, 11, Tier::Circuit).unwrap();
        assert_eq!(a.k_estimate, b.k_estimate);
        assert_eq!(a.neighbors, b.neighbors);
    }
}
