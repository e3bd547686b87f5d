use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qubits_for, C64};
use crate::sim::{sample_counts, Ctrl, Layout, Op, SimState};
use crate::subroutines::Tier;

/// Imaginary parts above this (after global-phase fixing) violate the
/// real-amplitude precondition.
pub const REAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyOutput {
    pub vector: Vec<f64>,
    /// Samples per measurement setting.
    pub samples: u64,
    /// State preparations used, times the preparation cost.
    pub queries: u64,
}

/// N = ⌈36 d ln d / δ²⌉ with d = max(d_t, 2).
pub fn tomography_samples(d_t: usize, delta: f64) -> u64 {
    let d = d_t.max(2) as f64;
    (36.0 * d * d.ln() / (delta * delta)).ceil() as u64
}

/// Removes the global phase (largest component made real positive, unless
/// the amplitudes are already real) and checks that what remains is real.
pub fn real_amplitudes(state: &DVector<C64>) -> Result<Vec<f64>> {
    if state.iter().all(|z| z.im.abs() <= REAL_TOLERANCE) {
        return Ok(state.iter().map(|z| z.re).collect());
    }
    let lead = state
        .iter()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .copied()
        .unwrap_or(C64::new(1.0, 0.0));
    let phase = if lead.norm() > 0.0 {
        lead / lead.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let mut out = Vec::with_capacity(state.len());
    for z in state.iter() {
        let w = z / phase;
        if w.im.abs() > REAL_TOLERANCE {
            return Err(Error::RealAmplitude { imag: w.im });
        }
        out.push(w.re);
    }
    Ok(out)
}

/// Outcome probabilities of the computational-basis setting and of the
/// interference setting (|0>|x> + |1>|r>)/√2 followed by a Hadamard on the
/// first qubit, r uniform; the latter indexed by (anc, j).
fn setting_probabilities(x: &[f64], tier: Tier) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x.len();
    match tier {
        Tier::Spectral => {
            let r = 1.0 / (d as f64).sqrt();
            let direct = x.iter().map(|v| v * v).collect();
            let mut inter = vec![0.0; 2 * d];
            for (j, &v) in x.iter().enumerate() {
                inter[j] = (v + r).powi(2) / 4.0;
                inter[d + j] = (v - r).powi(2) / 4.0;
            }
            Ok((direct, inter))
        }
        Tier::Circuit => {
            let q = qubits_for(d);
            let prep = Op::state_prep_real(x)?;
            let direct = SimState::init(Layout::new(&[("sys", q)])?)
                .apply(&prep, &["sys"])?
                .marginal("sys")?;
            let inter = SimState::init(Layout::new(&[("anc", 1), ("sys", q)])?)
                .apply(&Op::hadamard(1), &["anc"])?
                .apply_controlled(&prep, &[Ctrl::value("anc", 0)], &["sys"])?
                .apply_controlled(&Op::hadamard(q), &[Ctrl::value("anc", 1)], &["sys"])?
                .apply(&Op::hadamard(1), &["anc"])?
                .joint_marginal(&["anc", "sys"])?;
            Ok((direct, inter))
        }
    }
}

/// ℓ₂ tomography of a real state with d_t = 2^q amplitudes: magnitudes from
/// computational-basis counts, signs from interference with a uniform
/// reference preparation. `prep_cost` is the query cost of one preparation.
pub fn tomography<R: Rng>(
    state: &DVector<C64>,
    delta: f64,
    prep_cost: u64,
    tier: Tier,
    rng: &mut R,
) -> Result<TomographyOutput> {
    let d = state.len();
    if !d.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "tomography dimension {d} is not a power of two"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("tomography δ must be positive, got {delta}")));
    }
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Invariant(format!("tomography input has norm {norm}")));
    }
    let x = real_amplitudes(state)?;
    let n = tomography_samples(d, delta);
    let (direct, inter) = setting_probabilities(&x, tier)?;
    let counts = sample_counts(&direct, n, rng);
    let signs = sample_counts(&inter, n, rng);
    let vector = (0..d)
        .map(|j| {
            let mag = (counts[j] as f64 / n as f64).sqrt();
            if signs[j] >= signs[d + j] {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Ok(TomographyOutput {
        vector,
        samples: n,
        queries: 2 * n * prep_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng_for;
    use rand_distr::{Distribution, StandardNormal};

    fn cvec(v: &[f64]) -> DVector<C64> {
        DVector::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0)))
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn basis_state() {
        let mut rng = rng_for(1, 0);
        let out = tomography(&cvec(&[1.0, 0.0, 0.0, 0.0]), 0.05, 1, Tier::Spectral, &mut rng)
            .unwrap();
        assert_eq!(out.vector, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(out.queries, 2 * tomography_samples(4, 0.05));
    }

    #[test]
    fn uniform_state() {
        let mut rng = rng_for(2, 0);
        let x = [0.5; 4];
        let out = tomography(&cvec(&x), 0.05, 1, Tier::Circuit, &mut rng).unwrap();
        assert!(dist(&out.vector, &x) <= 0.05);
    }

    #[test]
    fn coverage_on_random_vectors() {
        let delta = 0.05;
        let mut hits = 0;
        for run in 0..100u64 {
            let mut rng = rng_for(3, run);
            let raw: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let x: Vec<f64> = raw.iter().map(|v| v / n).collect();
            let out = tomography(&cvec(&x), delta, 1, Tier::Spectral, &mut rng).unwrap();
            if dist(&out.vector, &x) <= delta {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn tiers_sample_the_same_distributions() {
        let x = [0.1, -0.7, 0.5, -0.5];
        let n = x.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        let x: Vec<f64> = x.iter().map(|v| v / n).collect();
        let (d1, i1) = setting_probabilities(&x, Tier::Spectral).unwrap();
        let (d2, i2) = setting_probabilities(&x, Tier::Circuit).unwrap();
        for (a, b) in d1.iter().chain(&i1).zip(d2.iter().chain(&i2)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn global_phase_is_removed_but_complex_rejected() {
        let mut rng = rng_for(4, 0);
        let ph = C64::from_polar(1.0, 0.7);
        let v = cvec(&[0.6, -0.8]) * ph;
        let out = tomography(&v, 0.05, 1, Tier::Spectral, &mut rng).unwrap();
        assert!(dist(&out.vector, &[0.6, -0.8]) <= 0.05 || dist(&out.vector, &[-0.6, 0.8]) <= 0.05);
        let bad = DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        assert!(matches!(
            tomography(&bad, 0.05, 1, Tier::Spectral, &mut rng),
            Err(Error::RealAmplitude { .. })
        ));
    }
}
