//! Phase estimation kernel shared by amplitude estimation, singular value
//! estimation and the eigenvalue-filtering routines.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{qubits_for, C64};
use crate::sim::{Ctrl, Layout, Op, SimState};

/// Amplitude of outcome `y` after `t`-bit phase estimation of an eigenvector
/// with eigenphase e^{2πi·phase}.
pub fn qpe_amplitude(phase: f64, y: usize, t: u32) -> C64 {
    let n = (1usize << t) as f64;
    let delta = phase - y as f64 / n;
    let z = C64::from_polar(1.0, 2.0 * PI * delta);
    let denom = C64::new(1.0, 0.0) - z;
    if denom.norm() < 1e-13 {
        return C64::new(1.0, 0.0);
    }
    (C64::new(1.0, 0.0) - C64::from_polar(1.0, 2.0 * PI * n * delta)) / (denom * n)
}

/// Outcome distribution of `t`-bit phase estimation on an eigenvector with
/// the given phase (in turns).
pub fn qpe_distribution(phase: f64, t: u32) -> Vec<f64> {
    let n = 1usize << t;
    let nf = n as f64;
    let mut p: Vec<f64> = (0..n)
        .map(|y| {
            let delta = phase - y as f64 / nf;
            let s = (PI * delta).sin();
            if s.abs() < 1e-13 {
                1.0
            } else {
                let num = (PI * nf * delta).sin();
                num * num / (nf * nf * s * s)
            }
        })
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Σ_y P(y | phase) f(y): the factor an eigencomponent picks up from phase
/// estimation, a controlled rotation with |1>-amplitude f(y), uncomputation
/// and post-selection of the rotation flag on |1> and the estimation register
/// on |0>.
pub fn filtered_average<F: Fn(usize) -> f64>(phase: f64, t: u32, f: F) -> f64 {
    qpe_distribution(phase, t)
        .iter()
        .enumerate()
        .map(|(y, p)| p * f(y))
        .sum()
}

/// Distribution of the median of `reps` independent draws (reps odd) from
/// `p`, with outcomes ordered by `key`.
pub fn median_distribution<K: Fn(usize) -> usize>(p: &[f64], reps: usize, key: K) -> Vec<f64> {
    if reps <= 1 {
        return p.to_vec();
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by_key(|&y| (key(y), y));
    // group outcomes sharing a key: the median is taken over keys
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &y in &order {
        let k = key(y);
        match groups.last_mut() {
            Some((gk, members)) if *gk == k => members.push(y),
            _ => groups.push((k, vec![y])),
        }
    }
    let need = reps / 2 + 1;
    let cdf_at = |f: f64| -> f64 {
        // P(at least `need` of `reps` draws are <= the cut)
        let f = f.clamp(0.0, 1.0);
        let mut total = 0.0;
        for k in need..=reps {
            total += binomial(reps, k) * f.powi(k as i32) * (1.0 - f).powi((reps - k) as i32);
        }
        total
    };
    let mut out = vec![0.0; p.len()];
    let mut below = 0.0;
    for (_, members) in &groups {
        let mass: f64 = members.iter().map(|&y| p[y]).sum();
        let above = below + mass;
        let med_mass = cdf_at(above) - cdf_at(below);
        if mass > 0.0 {
            for &y in members {
                out[y] = med_mass * p[y] / mass;
            }
        }
        below = above;
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `op` applied `power` times, squaring dense matrices instead of chaining.
fn op_power(op: &Op, power: usize) -> Op {
    match op {
        Op::Dense(m) => {
            let mut acc = DMatrix::<C64>::identity(m.nrows(), m.ncols());
            let mut base = m.clone();
            let mut e = power;
            while e > 0 {
                if e & 1 == 1 {
                    acc = &acc * &base;
                }
                base = &base * &base;
                e >>= 1;
            }
            Op::Dense(acc)
        }
        Op::Diagonal(d) => Op::Diagonal(d.iter().map(|z| z.powu(power as u32)).collect()),
        _ => op.repeat(power),
    }
}

/// Textbook phase estimation: `t` estimation qubits, controlled powers of
/// `u`, inverse QFT. Returns the joint state over `est` and `sys`.
pub fn phase_estimation_circuit(u: &Op, input: &DVector<C64>, t: u32) -> Result<SimState> {
    if t == 0 {
        return Err(Error::Parameter("phase estimation needs t >= 1".into()));
    }
    let dim = input.len();
    if !dim.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "system dimension {dim} is not a power of two"
        )));
    }
    let layout = Layout::new(&[("est", t as usize), ("sys", qubits_for(dim))])?;
    let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
    amps[..dim].copy_from_slice(input.as_slice());
    let mut s = SimState::from_amplitudes(layout, amps)?;
    s = s.apply(&Op::hadamard(t as usize), &["est"])?;
    for b in 0..t as usize {
        let pw = op_power(u, 1usize << b);
        s = s.apply_controlled(&pw, &[Ctrl::bit("est", b)], &["sys"])?;
    }
    s.apply(
        &Op::Fourier {
            dim: 1usize << t,
            inverse: true,
        },
        &["est"],
    )
}

/// Circuit version of [`filtered_average`] applied to a whole input state:
/// phase estimation of `u`, rotation of a flag qubit by f(y), inverse phase
/// estimation, post-selection of flag = 1 and est = 0. Returns the
/// normalized system state and the post-selection probability.
pub fn qpe_filter_circuit<F: Fn(usize) -> f64>(
    u: &Op,
    input: &DVector<C64>,
    t: u32,
    f: F,
) -> Result<(DVector<C64>, f64)> {
    let dim = input.len();
    let q = qubits_for(dim);
    let layout = Layout::new(&[("flag", 1), ("est", t as usize), ("sys", q)])?;
    let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
    amps[..dim].copy_from_slice(input.as_slice());
    let mut s = SimState::from_amplitudes(layout, amps)?;
    let fourier = Op::Fourier {
        dim: 1usize << t,
        inverse: true,
    };
    let h = Op::hadamard(t as usize);
    let powers: Vec<Op> = (0..t as usize).map(|b| op_power(u, 1usize << b)).collect();
    s = s.apply(&h, &["est"])?;
    for (b, pw) in powers.iter().enumerate() {
        s = s.apply_controlled(pw, &[Ctrl::bit("est", b)], &["sys"])?;
    }
    s = s.apply(&fourier, &["est"])?;
    let rotations: Vec<Op> = (0..1usize << t)
        .map(|y| {
            let a = f(y);
            Op::ry(a.clamp(-1.0, 1.0).asin())
        })
        .collect();
    s = s.apply_per_branch(&["est"], &["flag"], |v| Some(&rotations[v[0]]))?;
    s = s.apply(&fourier.adjoint(), &["est"])?;
    for (b, pw) in powers.iter().enumerate().rev() {
        s = s.apply_controlled(&pw.adjoint(), &[Ctrl::bit("est", b)], &["sys"])?;
    }
    s = s.apply(&h, &["est"])?;
    let (s1, p_flag) = s.project("flag", 1)?;
    let (s2, p_est) = s1.project("est", 0)?;
    let out = s2.slice(&["sys"], &[("flag", 1), ("est", 0)])?;
    Ok((DVector::from_vec(out), p_flag * p_est))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_grid_phase_is_exact() {
        let p = qpe_distribution(0.25, 3);
        assert!((p[2] - 1.0).abs() < 1e-12);
        let a = qpe_amplitude(0.25, 2, 3);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_matches_distribution() {
        let p = qpe_distribution(0.3141, 5);
        for (y, py) in p.iter().enumerate() {
            assert!((qpe_amplitude(0.3141, y, 5).norm_sqr() - py).abs() < 1e-12);
        }
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circuit_matches_kernel() {
        // diagonal unitary with two eigenphases, input the first eigenvector
        let phases = [0.17, 0.61];
        let u = Op::Diagonal(
            phases
                .iter()
                .map(|&f| C64::from_polar(1.0, 2.0 * PI * f))
                .collect(),
        );
        let input = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let s = phase_estimation_circuit(&u, &input, 4).unwrap();
        let got = s.marginal("est").unwrap();
        let want = qpe_distribution(0.17, 4);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_circuit_matches_average() {
        let phases = [0.13, 0.37];
        let u = Op::Diagonal(
            phases
                .iter()
                .map(|&f| C64::from_polar(1.0, 2.0 * PI * f))
                .collect(),
        );
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let input = DVector::from_vec(vec![C64::new(h, 0.0), C64::new(h, 0.0)]);
        let f = |y: usize| if y == 0 { 0.0 } else { 1.0 / y as f64 };
        let (out, _) = qpe_filter_circuit(&u, &input, 4, f).unwrap();
        let g: Vec<f64> = phases.iter().map(|&ph| filtered_average(ph, 4, f)).collect();
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let fid = (out[0].conj() * C64::new(g[0] / norm, 0.0)
            + out[1].conj() * C64::new(g[1] / norm, 0.0))
        .norm();
        assert!(fid > 1.0 - 1e-10, "{fid}");
    }

    #[test]
    fn median_concentrates() {
        let p = qpe_distribution(0.3, 4);
        let m = median_distribution(&p, 9, |y| y);
        let total: f64 = m.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // mass outside the two nearest cells shrinks under the median
        let tail = |d: &[f64]| 1.0 - d[4] - d[5];
        assert!(tail(&m) < tail(&p));
        assert_eq!(median_distribution(&p, 1, |y| y), p);
    }
}
