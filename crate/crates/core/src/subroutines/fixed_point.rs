use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qubits_for, C64};
use crate::sim::{Layout, Op, SimState};
use crate::subroutines::amplify::{good_mass, prepared, split_good_bad};
use crate::subroutines::Tier;

/// Chebyshev polynomial of the first kind, T_L(x), for real order L.
pub fn chebyshev_t(l: f64, x: f64) -> f64 {
    if x.abs() <= 1.0 {
        (l * x.acos()).cos()
    } else if x > 1.0 {
        (l * x.acosh()).cosh()
    } else {
        // T_L(-x) = (-1)^L T_L(x) for integer L
        let v = (l * (-x).acosh()).cosh();
        if (l.round() as i64) % 2 == 0 {
            v
        } else {
            -v
        }
    }
}

fn acot(x: f64) -> f64 {
    PI / 2.0 - x.atan()
}

/// Angle schedule of the fixed-point search.
///
/// The operator sequence G(α_l, β_l) ⋯ G(α_1, β_1) realizes a degree
/// L_eff = 2l + 1 Chebyshev filter. `l_budget` is the requested length L;
/// l = ⌈(L - 1)/2⌉ so L_eff ≥ L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSchedule {
    pub l_budget: usize,
    pub iterations: usize,
    pub effective_length: usize,
    pub delta_prime: f64,
    /// γ⁻¹ = T_{1/L_eff}(1/δ′).
    pub gamma_inv: f64,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl FixedPointSchedule {
    pub fn new(l_budget: usize, delta_prime: f64) -> Result<Self> {
        if !(delta_prime > 0.0 && delta_prime < 1.0) {
            return Err(Error::Parameter(format!(
                "fixed-point δ′ must lie in (0, 1), got {delta_prime}"
            )));
        }
        if l_budget < 1 {
            return Err(Error::Parameter("fixed-point length must be >= 1".into()));
        }
        let l = (l_budget.saturating_sub(1)).div_ceil(2);
        let len = 2 * l + 1;
        let gamma_inv = chebyshev_t(1.0 / len as f64, 1.0 / delta_prime);
        let gamma = 1.0 / gamma_inv;
        let root = (1.0 - gamma * gamma).max(0.0).sqrt();
        let alphas: Vec<f64> = (1..=l)
            .map(|k| 2.0 * acot((2.0 * PI * k as f64 / len as f64).tan() * root))
            .collect();
        let betas: Vec<f64> = (1..=l).map(|k| -alphas[l - k]).collect();
        Ok(Self {
            l_budget,
            iterations: l,
            effective_length: len,
            delta_prime,
            gamma_inv,
            alphas,
            betas,
        })
    }

    /// Schedule with L = 2⌈log₂(2/δ′)/|sin ψ|⌉, enough for any initial
    /// overlap of at least |sin ψ|.
    pub fn for_overlap(sin_psi: f64, delta_prime: f64) -> Result<Self> {
        if !(sin_psi > 0.0) {
            return Err(Error::NoOverlap);
        }
        let l = 2 * ((2.0 / delta_prime).log2() / sin_psi.min(1.0)).ceil() as usize;
        Self::new(l.max(1), delta_prime)
    }

    /// Smallest initial amplitude |sin ψ| = √(1 - γ²) for which the success
    /// probability is guaranteed to be at least 1 - δ′².
    pub fn guaranteed_overlap(&self) -> f64 {
        let g = 1.0 / self.gamma_inv;
        (1.0 - g * g).max(0.0).sqrt()
    }

    /// 1 - δ′² T_L²(γ⁻¹ √(1 - λ)) for initial success probability λ.
    pub fn predicted_success(&self, lambda: f64) -> f64 {
        let x = self.gamma_inv * (1.0 - lambda).max(0.0).sqrt();
        let t = chebyshev_t(self.effective_length as f64, x);
        1.0 - self.delta_prime * self.delta_prime * t * t
    }
}

/// Result of a fixed-point search.
#[derive(Debug, Clone)]
pub struct FixedPointOutput {
    pub state: SimState,
    /// |<good|out>|² with |good> the normalized good component of A|0>.
    pub fidelity: f64,
    /// <good|out>.
    pub good_amplitude: C64,
    /// G(α, β) applications.
    pub queries: u64,
}

/// Runs the schedule in the plane of |good> and |bad>; returns the final
/// (good, bad) amplitudes for initial amplitude sin ψ on |good>.
pub(crate) fn fixed_point_amplitudes(sin_psi: f64, sched: &FixedPointSchedule) -> (C64, C64) {
    let s = [C64::new(sin_psi, 0.0), C64::new((1.0 - sin_psi * sin_psi).max(0.0).sqrt(), 0.0)];
    let mut v = s;
    for (&alpha, &beta) in sched.alphas.iter().zip(&sched.betas) {
        // S_t(β): phase e^{iβ} on the good component
        v[0] *= C64::from_polar(1.0, beta);
        // S_s(α) = I - (1 - e^{-iα})|s><s|, then the overall sign
        let proj = s[0] * v[0] + s[1] * v[1];
        let k = (C64::new(1.0, 0.0) - C64::from_polar(1.0, -alpha)) * proj;
        v[0] = -(v[0] - k * s[0]);
        v[1] = -(v[1] - k * s[1]);
    }
    (v[0], v[1])
}

/// The operators G(α_k, β_k) = -S_s(α_k) S_t(β_k) for a prepared state `s`.
pub(crate) fn fixed_point_ops(
    s: &DVector<C64>,
    marked: &[bool],
    sched: &FixedPointSchedule,
) -> Vec<Op> {
    sched
        .alphas
        .iter()
        .zip(&sched.betas)
        .map(|(&alpha, &beta)| {
            let st = Op::Diagonal(
                marked
                    .iter()
                    .map(|&m| {
                        if m {
                            C64::from_polar(1.0, beta)
                        } else {
                            C64::new(1.0, 0.0)
                        }
                    })
                    .collect(),
            );
            let ss = Op::RankOne {
                v: s.clone(),
                c: C64::from_polar(1.0, -alpha) - C64::new(1.0, 0.0),
                scale: C64::new(-1.0, 0.0),
            };
            Op::Product(vec![st, ss])
        })
        .collect()
}

/// Fixed-point amplitude amplification of A|0> toward the marked subspace.
pub fn fixed_point_search(
    prep: &Op,
    marked: &[bool],
    schedule: &FixedPointSchedule,
    tier: Tier,
) -> Result<FixedPointOutput> {
    let dim = marked.len();
    prep.check_unitary()?;
    let s = prepared(prep, dim);
    let (a, g, b) = split_good_bad(&s, marked);
    if a <= 0.0 {
        return Err(Error::NoOverlap);
    }
    let layout = Layout::new(&[("sys", qubits_for(dim))])?;
    let state = match tier {
        Tier::Circuit => {
            let mut st = SimState::from_amplitudes(layout, s.as_slice().to_vec())?;
            for op in fixed_point_ops(&s, marked, schedule) {
                st = st.apply(&op, &["sys"])?;
            }
            st
        }
        Tier::Spectral => {
            let (ag, ab) = fixed_point_amplitudes(a.sqrt(), schedule);
            let v = &g * ag + &b * ab;
            SimState::from_amplitudes(layout, v.as_slice().to_vec())?
        }
    };
    let out = DVector::from_column_slice(state.amplitudes());
    let good_amplitude = g.dotc(&out);
    Ok(FixedPointOutput {
        fidelity: good_mass(&out, marked),
        good_amplitude,
        state,
        queries: schedule.iterations as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(sin_psi: f64) -> (Op, Vec<bool>) {
        let c = (1.0 - sin_psi * sin_psi).sqrt();
        (
            Op::state_prep_real(&[c, sin_psi, 0.0, 0.0]).unwrap(),
            vec![false, true, false, false],
        )
    }

    #[test]
    fn chebyshev_identity() {
        for l in [1.0, 3.0, 7.0, 12.0] {
            for k in 0..25 {
                let theta = k as f64 * 0.13;
                assert!((chebyshev_t(l, theta.cos()) - (l * theta).cos()).abs() < 1e-10);
            }
        }
        // inverse relation used by γ
        let x = 7.3;
        assert!((chebyshev_t(5.0, chebyshev_t(0.2, x)) - x).abs() < 1e-9);
    }

    #[test]
    fn angle_closed_form() {
        let s = FixedPointSchedule::new(14, 0.1).unwrap();
        assert_eq!(s.iterations, 7);
        assert_eq!(s.effective_length, 15);
        let g = 1.0 / s.gamma_inv;
        for k in 1..=s.iterations {
            let want = 2.0 * acot((2.0 * PI * k as f64 / 15.0).tan() * (1.0 - g * g).sqrt());
            assert!((s.alphas[k - 1] - want).abs() < 1e-12);
            assert!((s.betas[s.iterations - k] + s.alphas[k - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn already_good() {
        let (prep, marked) = two_level(1.0);
        let sched = FixedPointSchedule::new(9, 0.1).unwrap();
        let out = fixed_point_search(&prep, &marked, &sched, Tier::Circuit).unwrap();
        assert!((out.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn design_point() {
        let sched = FixedPointSchedule::for_overlap(0.3, 0.1).unwrap();
        assert_eq!(sched.l_budget, 2 * (20f64.log2() / 0.3).ceil() as usize);
        let (prep, marked) = two_level(0.3);
        for tier in [Tier::Circuit, Tier::Spectral] {
            let out = fixed_point_search(&prep, &marked, &sched, tier).unwrap();
            assert!(out.fidelity >= 0.99, "{}", out.fidelity);
            assert!((out.fidelity - sched.predicted_success(0.09)).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_above_design_overlap() {
        let dp = 0.1;
        let sched = FixedPointSchedule::for_overlap(0.2, dp).unwrap();
        for k in 0..20 {
            let sp = 0.2 + 0.8 * k as f64 / 19.0;
            let (prep, marked) = two_level(sp);
            let out = fixed_point_search(&prep, &marked, &sched, Tier::Spectral).unwrap();
            assert!(1.0 - out.fidelity <= dp * dp + 1e-12, "{sp}: {}", out.fidelity);
        }
    }

    #[test]
    fn tiers_agree() {
        let v = [0.5, 0.5, 0.5, 0.5];
        let prep = Op::state_prep_real(&v).unwrap();
        let marked = [false, true, false, false];
        let sched = FixedPointSchedule::new(11, 0.05).unwrap();
        let c = fixed_point_search(&prep, &marked, &sched, Tier::Circuit).unwrap();
        let s = fixed_point_search(&prep, &marked, &sched, Tier::Spectral).unwrap();
        assert!(c.state.fidelity(&s.state) > 1.0 - 1e-10);
    }

    #[test]
    fn zero_overlap_rejected() {
        let (prep, _) = two_level(0.5);
        let sched = FixedPointSchedule::new(5, 0.1).unwrap();
        assert!(matches!(
            fixed_point_search(&prep, &[false, false, true, false], &sched, Tier::Circuit),
            Err(Error::NoOverlap)
        ));
    }
}
