use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::{sample_index, Op};
use crate::subroutines::amplify::{good_mass, grover_operator, prepared};
use crate::subroutines::phase::{phase_estimation_circuit, qpe_distribution};
use crate::subroutines::{EstimateReport, Tier};

/// Success floor of a single amplitude estimation run.
pub const QAE_CONFIDENCE: f64 = 8.0 / (PI * PI);

/// sin²(πy/2^t).
pub fn qae_grid_value(y: usize, t: u32) -> f64 {
    (PI * y as f64 / (1u64 << t) as f64).sin().powi(2)
}

/// 2π√(a(1-a))/2^t + π²/4^t.
pub fn qae_error_bound(a: f64, t: u32) -> f64 {
    let n = (1u64 << t) as f64;
    2.0 * PI * (a * (1.0 - a)).max(0.0).sqrt() / n + PI * PI / (n * n)
}

/// Distribution of the estimation register when the good amplitude is a:
/// the initial state splits evenly over the two Grover eigenvectors with
/// phases ±θ/π.
pub fn qae_distribution(a: f64, t: u32) -> Vec<f64> {
    let phase = a.clamp(0.0, 1.0).sqrt().asin() / PI;
    let up = qpe_distribution(phase, t);
    let down = qpe_distribution(-phase, t);
    up.iter().zip(&down).map(|(u, d)| 0.5 * (u + d)).collect()
}

/// One estimation outcome y drawn from [`qae_distribution`].
pub fn sample_qae<R: Rng>(a: f64, t: u32, rng: &mut R) -> usize {
    sample_index(&qae_distribution(a, t), rng)
}

/// 2⌈ln(1/δ)⌉ + 1 repetitions lift the 8/π² floor to 1 - δ under a median.
pub fn boosting_repetitions(delta: f64) -> usize {
    2 * (1.0 / delta).ln().ceil().max(0.0) as usize + 1
}

pub(crate) fn estimation_distribution(prep: &Op, marked: &[bool], t: u32, tier: Tier) -> Result<Vec<f64>> {
    if t < 1 {
        return Err(Error::Parameter("t_bits must be at least 1".into()));
    }
    let dim = marked.len();
    prep.check_unitary()?;
    let s = prepared(prep, dim);
    match tier {
        Tier::Spectral => Ok(qae_distribution(good_mass(&s, marked), t)),
        Tier::Circuit => {
            let g = grover_operator(prep, marked);
            phase_estimation_circuit(&g, &s, t)?.marginal("est")
        }
    }
}

fn report(name: &str, estimate: f64, t: u32, confidence: f64, queries: u64) -> EstimateReport {
    let mut params = BTreeMap::new();
    params.insert("t_bits".to_string(), t as f64);
    EstimateReport {
        name: name.to_string(),
        params,
        point_estimate: estimate,
        grid_bits: t,
        confidence,
        queries,
        error_bound: qae_error_bound(estimate, t),
        measured_error: None,
    }
}

/// Estimates a = ‖Π_good A|0>‖² with t estimation bits. Uses 2^t - 1
/// applications of the Grover operator.
pub fn amplitude_estimation<R: Rng>(
    prep: &Op,
    marked: &[bool],
    t: u32,
    tier: Tier,
    rng: &mut R,
) -> Result<EstimateReport> {
    let dist = estimation_distribution(prep, marked, t, tier)?;
    let y = sample_index(&dist, rng);
    Ok(report(
        "amplitude_estimation",
        qae_grid_value(y, t),
        t,
        QAE_CONFIDENCE,
        (1u64 << t) - 1,
    ))
}

/// Median of `reps` independent estimates.
pub fn boosted_amplitude_estimation<R: Rng>(
    prep: &Op,
    marked: &[bool],
    t: u32,
    reps: usize,
    tier: Tier,
    rng: &mut R,
) -> Result<EstimateReport> {
    let reps = reps.max(1) | 1;
    let dist = estimation_distribution(prep, marked, t, tier)?;
    let mut values: Vec<f64> = (0..reps)
        .map(|_| qae_grid_value(sample_index(&dist, rng), t))
        .collect();
    values.sort_by(f64::total_cmp);
    let confidence = if reps == 1 {
        QAE_CONFIDENCE
    } else {
        1.0 - (-(((reps - 1) / 2) as f64)).exp()
    };
    let mut r = report(
        "amplitude_estimation_boosted",
        values[reps / 2],
        t,
        confidence,
        reps as u64 * ((1u64 << t) - 1),
    );
    r.params.insert("repetitions".to_string(), reps as f64);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng_for;

    fn hadamard_prep() -> Op {
        Op::hadamard(1)
    }

    #[test]
    fn on_grid_angle_is_exact() {
        let mut rng = rng_for(1, 0);
        for tier in [Tier::Circuit, Tier::Spectral] {
            for _ in 0..10 {
                let r = amplitude_estimation(&hadamard_prep(), &[false, true], 3, tier, &mut rng)
                    .unwrap();
                assert!((r.point_estimate - 0.5).abs() < 1e-12);
                assert_eq!(r.queries, 7);
            }
        }
    }

    #[test]
    fn nothing_marked_gives_zero() {
        let mut rng = rng_for(2, 0);
        for tier in [Tier::Circuit, Tier::Spectral] {
            let r =
                amplitude_estimation(&hadamard_prep(), &[false, false], 4, tier, &mut rng).unwrap();
            assert_eq!(r.point_estimate, 0.0);
        }
    }

    #[test]
    fn tiers_agree_on_distribution() {
        let v = [0.3f64.sqrt(), 0.5f64.sqrt(), 0.1f64.sqrt(), 0.1f64.sqrt()];
        let prep = Op::state_prep_real(&v).unwrap();
        let marked = [false, true, false, true];
        let c = estimation_distribution(&prep, &marked, 5, Tier::Circuit).unwrap();
        let s = estimation_distribution(&prep, &marked, 5, Tier::Spectral).unwrap();
        let bc: f64 = c.iter().zip(&s).map(|(a, b)| (a * b).sqrt()).sum();
        assert!(bc > 1.0 - 1e-10, "{bc}");
    }

    #[test]
    fn error_bound_holds_often() {
        let a = (PI / 5.0).sin().powi(2);
        let prep = Op::state_prep_real(&[(1.0 - a).sqrt(), a.sqrt()]).unwrap();
        let mut rng = rng_for(3, 0);
        let mut ok = 0;
        for _ in 0..200 {
            let r = amplitude_estimation(&prep, &[false, true], 6, Tier::Spectral, &mut rng).unwrap();
            if (r.point_estimate - a).abs() <= qae_error_bound(a, 6) {
                ok += 1;
            }
        }
        assert!(ok >= 162, "{ok}");
    }

    #[test]
    fn grid_law() {
        let prep = Op::state_prep_real(&[0.8, 0.6]).unwrap();
        let mut rng = rng_for(4, 0);
        for _ in 0..20 {
            let r = amplitude_estimation(&prep, &[false, true], 5, Tier::Spectral, &mut rng).unwrap();
            let y = ((r.point_estimate.sqrt().asin()) * 32.0 / PI).round() as usize;
            assert!((qae_grid_value(y, 5) - r.point_estimate).abs() < 1e-12);
        }
    }

    #[test]
    fn boosting_count() {
        assert_eq!(boosting_repetitions(0.05), 7);
        assert_eq!(boosting_repetitions(1.0), 1);
    }
}
