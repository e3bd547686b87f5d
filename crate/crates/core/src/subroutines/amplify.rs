use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{qubits_for, C64};
use crate::sim::{Layout, Op, SimState};
use crate::subroutines::Tier;

/// Result of `iterations` rounds of amplitude amplification.
#[derive(Debug, Clone)]
pub struct AmplifyOutput {
    pub state: SimState,
    /// Probability of the good subspace in `state`.
    pub probability: f64,
    /// Initial angle θ with sin²θ = a.
    pub theta: f64,
    /// Grover iterations applied.
    pub queries: u64,
}

/// G = A (2|0><0| - I) A† O with O the phase oracle of `marked`. Acts as a
/// rotation by 2θ in the plane of the good and bad components of A|0>.
pub fn grover_operator(prep: &Op, marked: &[bool]) -> Op {
    let dim = marked.len();
    let mut s0 = vec![C64::new(-1.0, 0.0); dim];
    s0[0] = C64::new(1.0, 0.0);
    Op::Product(vec![
        Op::phase_flip(marked),
        prep.adjoint(),
        Op::Diagonal(s0),
        prep.clone(),
    ])
}

/// sin²((2t+1)θ) with sin²θ = a.
pub fn grover_probability(a: f64, iterations: u64) -> f64 {
    let theta = a.clamp(0.0, 1.0).sqrt().asin();
    ((2 * iterations + 1) as f64 * theta).sin().powi(2)
}

pub(crate) fn prepared(prep: &Op, dim: usize) -> DVector<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[0] = C64::new(1.0, 0.0);
    prep.apply_to(&mut v);
    DVector::from_vec(v)
}

pub(crate) fn good_mass(v: &DVector<C64>, marked: &[bool]) -> f64 {
    v.iter()
        .zip(marked)
        .filter(|(_, &m)| m)
        .map(|(z, _)| z.norm_sqr())
        .sum()
}

/// Splits a state into normalized good and bad components.
pub(crate) fn split_good_bad(
    v: &DVector<C64>,
    marked: &[bool],
) -> (f64, DVector<C64>, DVector<C64>) {
    let a = good_mass(v, marked);
    let mut g = v.clone();
    let mut b = v.clone();
    for (k, &m) in marked.iter().enumerate() {
        if m {
            b[k] = C64::new(0.0, 0.0);
        } else {
            g[k] = C64::new(0.0, 0.0);
        }
    }
    if a > 0.0 {
        g /= C64::new(a.sqrt(), 0.0);
    }
    if a < 1.0 {
        b /= C64::new((1.0 - a).sqrt(), 0.0);
    }
    (a, g, b)
}

fn check_dims(prep: &Op, marked: &[bool]) -> Result<usize> {
    let dim = marked.len();
    if !dim.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "marking covers {dim} states, not a power of two"
        )));
    }
    if let Some(d) = prep.dim() {
        if d != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: d,
            });
        }
    }
    prep.check_unitary()?;
    Ok(dim)
}

/// Applies the Grover operator `iterations` times to A|0>.
pub fn amplitude_amplify(
    prep: &Op,
    marked: &[bool],
    iterations: u64,
    tier: Tier,
) -> Result<AmplifyOutput> {
    let dim = check_dims(prep, marked)?;
    let layout = Layout::new(&[("sys", qubits_for(dim))])?;
    let s = prepared(prep, dim);
    let (a, g, b) = split_good_bad(&s, marked);
    let theta = a.sqrt().asin();
    let state = match tier {
        Tier::Circuit => {
            let grover = grover_operator(prep, marked);
            let mut st = SimState::from_amplitudes(layout, s.as_slice().to_vec())?;
            for _ in 0..iterations {
                st = st.apply(&grover, &["sys"])?;
            }
            st
        }
        Tier::Spectral => {
            let angle = (2 * iterations + 1) as f64 * theta;
            let v = if a <= 0.0 || a >= 1.0 {
                s.clone()
            } else {
                g * C64::new(angle.sin(), 0.0) + b * C64::new(angle.cos(), 0.0)
            };
            SimState::from_amplitudes(layout, v.as_slice().to_vec())?
        }
    };
    let probability = good_mass(&DVector::from_column_slice(state.amplitudes()), marked);
    Ok(AmplifyOutput {
        state,
        probability,
        theta,
        queries: iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(dim: usize) -> Op {
        let v = vec![1.0 / (dim as f64).sqrt(); dim];
        Op::state_prep_real(&v).unwrap()
    }

    #[test]
    fn four_items_one_marked() {
        let marked = [false, false, true, false];
        for tier in [Tier::Circuit, Tier::Spectral] {
            let out = amplitude_amplify(&uniform(4), &marked, 1, tier).unwrap();
            assert!((out.probability - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_iterations_is_identity() {
        let marked = [true, false, false, false, false, false, true, false];
        let out = amplitude_amplify(&uniform(8), &marked, 0, Tier::Circuit).unwrap();
        assert!((out.probability - 0.25).abs() < 1e-12);
    }

    #[test]
    fn closed_form_on_pair_register() {
        let mut marked = vec![false; 64];
        for k in [1, 5, 9, 12, 20, 22, 33, 40, 41, 50, 58, 63] {
            marked[k] = true;
        }
        let t = ((std::f64::consts::PI / 4.0) * (64.0f64 / 12.0).sqrt()).ceil() as u64;
        let circ = amplitude_amplify(&uniform(64), &marked, t, Tier::Circuit).unwrap();
        let spec = amplitude_amplify(&uniform(64), &marked, t, Tier::Spectral).unwrap();
        let want = grover_probability(12.0 / 64.0, t);
        assert!((circ.probability - want).abs() < 1e-10);
        assert!(circ.probability > 0.5);
        assert!(circ.state.fidelity(&spec.state) > 1.0 - 1e-10);
    }
}
