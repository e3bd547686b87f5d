use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{Mapping, TreeStore};
use crate::error::{Error, Result};
use crate::linalg::{qubits_for, C64};
use crate::sim::{Ctrl, Layout, Op, SimState};
use crate::subroutines::amplify::{good_mass, split_good_bad};
use crate::subroutines::estimation::{estimation_distribution, qae_distribution};
use crate::subroutines::fixed_point::{
    fixed_point_amplitudes, fixed_point_ops, FixedPointSchedule,
};
use crate::subroutines::{DistanceOracle, Tier};

/// Preparation attached to one branch of a superposed index register.
#[derive(Debug, Clone)]
pub struct BranchPrep {
    /// A|0> over the work register.
    pub state: DVector<C64>,
    pub marked: Vec<bool>,
    /// |sin ψ| recomputed from classically stored data. When present, the
    /// overlap-dependent phase of the fixed-point output is removed so that
    /// branches stay coherent with each other.
    pub reference_overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub branch: Vec<usize>,
    /// Probability of the branch in the input state.
    pub weight: f64,
    pub sin_psi: f64,
    pub sin_estimate: f64,
    pub qae_outcome: usize,
    pub l_budget: usize,
    /// Good-subspace probability of the branch after the search.
    pub fidelity: f64,
}

#[derive(Debug, Clone)]
pub struct ParallelOutput {
    /// Input registers followed by a `work` register.
    pub state: SimState,
    pub branches: Vec<BranchReport>,
    /// Largest number of fixed-point iterations over the branches.
    pub max_iterations: usize,
}

struct Branch {
    index: usize,
    amp: C64,
    prep: BranchPrep,
    schedule: FixedPointSchedule,
    correction: C64,
    report: BranchReport,
}

fn branch_error(vals: &[usize], message: String) -> Error {
    Error::Branch {
        i: vals.first().copied().unwrap_or(0),
        j: vals.get(1).copied().unwrap_or(0),
        message,
    }
}

/// Amplifies, in every branch of `input` at once, the marked part of a
/// branch-dependent preparation.
///
/// Each branch runs amplitude estimation with `t_bits` bits on its own
/// preparation, sizes a fixed-point schedule L = 2⌈log₂(2/δ′)/ŝ⌉ from the
/// estimate and applies it. The estimate used is the modal outcome of the
/// estimation register. Branch amplitudes keep their modulus; the work
/// register ends up in the good subspace with probability ≥ 1 - δ′².
pub fn parallel_amplitude_handling<F>(
    input: &SimState,
    prep: F,
    delta_prime: f64,
    t_bits: u32,
    tier: Tier,
) -> Result<ParallelOutput>
where
    F: Fn(&[usize]) -> Result<BranchPrep>,
{
    if t_bits < 1 {
        return Err(Error::Parameter("t_bits must be at least 1".into()));
    }
    let layout = input.layout().clone();
    let mut work_dim = None;
    let mut branches = Vec::new();
    for (index, &amp) in input.amplitudes().iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let vals = layout.values(index);
        let bp = prep(&vals)?;
        let d = bp.state.len();
        if d != bp.marked.len() || !d.is_power_of_two() {
            return Err(branch_error(
                &vals,
                format!("preparation of size {d} with {} marks", bp.marked.len()),
            ));
        }
        match work_dim {
            None => work_dim = Some(d),
            Some(w) if w != d => {
                return Err(Error::Dimension {
                    expected: w,
                    found: d,
                })
            }
            _ => {}
        }
        let (a, _, _) = split_good_bad(&bp.state, &bp.marked);
        let dist = match tier {
            Tier::Spectral => qae_distribution(a, t_bits),
            Tier::Circuit => {
                estimation_distribution(&Op::state_prep(&bp.state)?, &bp.marked, t_bits, tier)?
            }
        };
        let y = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(y, _)| y)
            .unwrap_or(0);
        let s_hat = (PI * y as f64 / (1u64 << t_bits) as f64).sin().abs();
        if s_hat < 1e-12 {
            return Err(branch_error(
                &vals,
                format!("overlap estimate is zero with {t_bits} estimation bits"),
            ));
        }
        let schedule = FixedPointSchedule::for_overlap(s_hat, delta_prime)?;
        let correction = match bp.reference_overlap {
            Some(r) if r > 0.0 => {
                let (ag, _) = fixed_point_amplitudes(r.min(1.0), &schedule);
                C64::from_polar(1.0, -ag.arg())
            }
            _ => C64::new(1.0, 0.0),
        };
        let report = BranchReport {
            branch: vals,
            weight: amp.norm_sqr(),
            sin_psi: a.sqrt(),
            sin_estimate: s_hat,
            qae_outcome: y,
            l_budget: schedule.l_budget,
            fidelity: 0.0,
        };
        branches.push(Branch {
            index,
            amp,
            prep: bp,
            schedule,
            correction,
            report,
        });
    }
    let wdim = work_dim.ok_or_else(|| Error::Parameter("input state is empty".into()))?;
    let mut regs: Vec<(&str, usize)> = layout
        .registers()
        .iter()
        .map(|r| (r.name.as_str(), r.qubits))
        .collect();
    regs.push(("work", qubits_for(wdim)));
    let out_layout = Layout::new(&regs)?;
    let max_iterations = branches
        .iter()
        .map(|b| b.schedule.iterations)
        .max()
        .unwrap_or(0);

    let state = match tier {
        Tier::Spectral => {
            let mut amps = vec![C64::new(0.0, 0.0); out_layout.dim()];
            for b in &branches {
                let (a, g, bad) = split_good_bad(&b.prep.state, &b.prep.marked);
                let (ag, ab) = fixed_point_amplitudes(a.sqrt(), &b.schedule);
                let local = (&g * ag + &bad * ab) * b.correction;
                for (k, z) in local.iter().enumerate() {
                    amps[b.index * wdim + k] = b.amp * z;
                }
            }
            SimState::from_amplitudes(out_layout, amps)?
        }
        Tier::Circuit => {
            let mut amps = vec![C64::new(0.0, 0.0); out_layout.dim()];
            for b in &branches {
                amps[b.index * wdim] = b.amp;
            }
            let mut st = SimState::from_amplitudes(out_layout, amps)?;
            let selector: Vec<&str> = regs[..regs.len() - 1].iter().map(|r| r.0).collect();
            let preps: HashMap<Vec<usize>, Op> = branches
                .iter()
                .map(|b| Ok((b.report.branch.clone(), Op::state_prep(&b.prep.state)?)))
                .collect::<Result<_>>()?;
            st = st.apply_per_branch(&selector, &["work"], |v| preps.get(v))?;
            let ops: HashMap<Vec<usize>, Vec<Op>> = branches
                .iter()
                .map(|b| {
                    (
                        b.report.branch.clone(),
                        fixed_point_ops(&b.prep.state, &b.prep.marked, &b.schedule),
                    )
                })
                .collect();
            for k in 0..max_iterations {
                st = st.apply_per_branch(&selector, &["work"], |v| {
                    ops.get(v).and_then(|seq| seq.get(k))
                })?;
            }
            let phases: HashMap<Vec<usize>, Op> = branches
                .iter()
                .map(|b| (b.report.branch.clone(), Op::Diagonal(vec![b.correction; wdim])))
                .collect();
            st.apply_per_branch(&selector, &["work"], |v| phases.get(v))?
        }
    };
    let amps = state.amplitudes();
    let reports = branches
        .into_iter()
        .map(|b| {
            let local = DVector::from_column_slice(&amps[b.index * wdim..(b.index + 1) * wdim]);
            let mass = local.norm_squared();
            let mut r = b.report;
            r.fidelity = if mass > 0.0 {
                good_mass(&local, &b.prep.marked) / mass
            } else {
                0.0
            };
            r
        })
        .collect();
    Ok(ParallelOutput {
        state,
        branches: reports,
        max_iterations,
    })
}

/// Settings of the difference-state preparation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceParams {
    pub eps: f64,
    pub delta_prime: f64,
    /// Estimation bits; defaults to ⌈log₂(4πh/ε₀)⌉ (at least 3).
    pub t_bits: Option<u32>,
    /// Distance-oracle precision; defaults to ε·ε₀².
    pub eps1: Option<f64>,
    pub tier: Tier,
}

impl DifferenceParams {
    pub fn new(eps: f64, delta_prime: f64) -> Self {
        Self {
            eps,
            delta_prime,
            t_bits: None,
            eps1: None,
            tier: Tier::Spectral,
        }
    }

    pub fn with_tier(mut self, tier: Tier) -> Self {
        self.tier = tier;
        self
    }
}

#[derive(Debug, Clone)]
pub struct DifferenceOutput {
    /// Registers (i, j, x).
    pub state: SimState,
    pub branches: Vec<BranchReport>,
    pub t_bits: u32,
    /// Probability of the final flag post-selection.
    pub success_probability: f64,
    /// Store queries, counting one row-state load per store for each
    /// application of the branch preparation plus the distance-oracle cost.
    pub queries: u64,
}

/// Store-query count of one branch preparation (a row-state load from each
/// store).
const PREP_QUERIES: u64 = 2;

/// Prepares Σ √p_ij |i>|j>|x_i - y_j> (normalized differences) from two
/// stores and branch weights p_ij.
pub fn difference_state_prep(
    x: &TreeStore,
    y: &TreeStore,
    weights: &[(usize, usize, f64)],
    params: &DifferenceParams,
) -> Result<DifferenceOutput> {
    let (eps0, _) = difference_scales(x, y, weights)?;
    let eps1 = params
        .eps1
        .unwrap_or(params.eps * eps0 * eps0)
        .max(f64::MIN_POSITIVE);
    let oracle = DistanceOracle::new(x, y, eps1, params.eps.clamp(1e-12, 0.5))?;
    difference_with_oracle(&oracle, weights, params)
}

/// Smallest difference norm ε₀ and largest row norm h over the weighted
/// branches.
pub fn difference_scales(
    x: &TreeStore,
    y: &TreeStore,
    weights: &[(usize, usize, f64)],
) -> Result<(f64, f64)> {
    let xd = x.to_dense();
    let yd = y.to_dense();
    let mut eps0 = f64::INFINITY;
    let mut h: f64 = 0.0;
    for &(i, j, p) in weights {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::Parameter(format!("branch weight {p} for ({i}, {j})")));
        }
        if i >= xd.nrows() {
            return Err(Error::Bounds {
                index: i,
                len: xd.nrows(),
            });
        }
        if j >= yd.nrows() {
            return Err(Error::Bounds {
                index: j,
                len: yd.nrows(),
            });
        }
        if p == 0.0 {
            continue;
        }
        let d = (xd.row(i) - yd.row(j)).norm();
        if d == 0.0 {
            return Err(Error::ZeroDifference { i, j });
        }
        eps0 = eps0.min(d);
        h = h.max(xd.row(i).norm()).max(yd.row(j).norm());
    }
    if !eps0.is_finite() {
        return Err(Error::Parameter("no branch has positive weight".into()));
    }
    Ok((eps0, h))
}

/// Local (flag, x) preparation of branch (i, j):
/// [(cos θ x̂ + sin θ ŷ) ; (cos θ x̂ - sin θ ŷ)] / √2 with
/// cos θ = ‖x‖/√(‖x‖² + ‖y‖²). The flag = 1 half is (x - y)/√(2(‖x‖² + ‖y‖²)).
fn branch_prep(oracle: &DistanceOracle, i: usize, j: usize, tier: Tier) -> Result<DVector<C64>> {
    let xu = oracle.unit_x(i)?;
    let yu = oracle.unit_y(j)?;
    let lw = xu.len();
    let (nx, ny) = (oracle.norm_x(i), oracle.norm_y(j));
    let theta = ny.atan2(nx);
    match tier {
        Tier::Spectral => {
            let (s, c) = theta.sin_cos();
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let mut v = DVector::zeros(2 * lw);
            for k in 0..lw {
                v[k] = C64::new(h * (c * xu[k] + s * yu[k]), 0.0);
                v[lw + k] = C64::new(h * (c * xu[k] - s * yu[k]), 0.0);
            }
            Ok(v)
        }
        Tier::Circuit => {
            let layout = Layout::new(&[("flag", 1), ("x", qubits_for(lw))])?;
            let st = SimState::init(layout)
                .apply(&Op::ry(theta), &["flag"])?
                .apply_controlled(&Op::state_prep_real(&xu)?, &[Ctrl::value("flag", 0)], &["x"])?
                .apply_controlled(&Op::state_prep_real(&yu)?, &[Ctrl::value("flag", 1)], &["x"])?
                .apply(&Op::hadamard(1), &["flag"])?;
            Ok(DVector::from_column_slice(st.amplitudes()))
        }
    }
}

/// Difference-state preparation with a caller-supplied distance oracle.
pub fn difference_with_oracle(
    oracle: &DistanceOracle,
    weights: &[(usize, usize, f64)],
    params: &DifferenceParams,
) -> Result<DifferenceOutput> {
    let (x, y) = oracle.stores();
    let (eps0, h) = difference_scales(x, y, weights)?;
    let t = params
        .t_bits
        .unwrap_or_else(|| ((4.0 * PI * h / eps0).log2().ceil().max(3.0)) as u32);

    let qi = qubits_for(x.row_width());
    let qj = qubits_for(y.row_width());
    let layout = Layout::new(&[("i", qi), ("j", qj)])?;
    let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
    let mut total = 0.0;
    let mut pairs = Vec::new();
    for &(i, j, p) in weights {
        if p > 0.0 {
            let idx = layout.index(&[i, j]);
            if amps[idx].re == 0.0 {
                pairs.push((i, j));
            }
            amps[idx].re += p;
            total += p;
        }
    }
    for a in amps.iter_mut() {
        a.re = (a.re / total).sqrt();
    }
    let input = SimState::from_amplitudes(layout, amps)?;

    // phase references from the quantized distance register (compute and
    // uncompute)
    let d2 = oracle.values_superposed(&pairs)?;
    oracle.bill_superposed(&pairs);
    let reference: HashMap<(usize, usize), f64> = pairs
        .iter()
        .zip(&d2)
        .map(|(&(i, j), &d)| {
            let n2 = oracle.norm_x(i).powi(2) + oracle.norm_y(j).powi(2);
            ((i, j), (d / (2.0 * n2)).max(0.0).sqrt().min(1.0))
        })
        .collect();

    let lw = x.leaf_width();
    let marked: Vec<bool> = (0..2 * lw).map(|k| k >= lw).collect();
    let par = parallel_amplitude_handling(
        &input,
        |v| {
            let (i, j) = (v[0], v[1]);
            Ok(BranchPrep {
                state: branch_prep(oracle, i, j, params.tier)?,
                marked: marked.clone(),
                reference_overlap: reference.get(&(i, j)).copied(),
            })
        },
        params.delta_prime,
        t,
        params.tier,
    )?;

    // keep flag = 1 (upper half of each branch's work register)
    let pa = par.state.amplitudes();
    let nbranch = pa.len() / (2 * lw);
    let mut out = vec![C64::new(0.0, 0.0); nbranch * lw];
    for b in 0..nbranch {
        out[b * lw..(b + 1) * lw].copy_from_slice(&pa[b * 2 * lw + lw..(b + 1) * 2 * lw]);
    }
    let success: f64 = out.iter().map(|z| z.norm_sqr()).sum();
    if success < 1e-12 {
        return Err(Error::PostSelection {
            probability: success,
            floor: 1e-12,
        });
    }
    let scale = C64::new(success.sqrt().recip(), 0.0);
    out.iter_mut().for_each(|z| *z *= scale);
    let out_layout = Layout::new(&[("i", qi), ("j", qj), ("x", qubits_for(lw))])?;
    let state = SimState::from_amplitudes(out_layout, out)?;

    let prep_calls = 1 + 2 * 2 * ((1u64 << t) - 1) + 2 * par.max_iterations as u64;
    x.meter(Mapping::RowState, prep_calls);
    y.meter(Mapping::RowState, prep_calls);
    let distance_cost = 2 * pairs
        .iter()
        .map(|&(i, j)| oracle.cost(i, j))
        .max()
        .unwrap_or(0);
    Ok(DifferenceOutput {
        state,
        branches: par.branches,
        t_bits: t,
        success_probability: success,
        queries: PREP_QUERIES * prep_calls + distance_cost,
    })
}

/// Dense Σ √p_ij |i>|j>|(x_i - y_j)/‖x_i - y_j‖> over the same layout as the
/// preparation output.
pub fn difference_target(
    x: &TreeStore,
    y: &TreeStore,
    weights: &[(usize, usize, f64)],
) -> Result<SimState> {
    difference_scales(x, y, weights)?;
    let (xd, yd) = (x.to_dense(), y.to_dense());
    let lw = x.leaf_width();
    let layout = Layout::new(&[
        ("i", qubits_for(x.row_width())),
        ("j", qubits_for(y.row_width())),
        ("x", qubits_for(lw)),
    ])?;
    let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
    let total: f64 = weights.iter().map(|w| w.2).sum();
    let mut mass: HashMap<(usize, usize), f64> = HashMap::new();
    for &(i, j, p) in weights {
        *mass.entry((i, j)).or_default() += p / total;
    }
    for (&(i, j), &p) in &mass {
        if p == 0.0 {
            continue;
        }
        let d = xd.row(i) - yd.row(j);
        let n = d.norm();
        for (k, v) in d.iter().enumerate() {
            amps[layout.index(&[i, j, k])] = C64::new(p.sqrt() * v / n, 0.0);
        }
    }
    SimState::from_amplitudes(layout, amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::StoreKind;
    use crate::linalg::from_rows;
    use crate::sim::rng_for;
    use rand_distr::{Distribution, StandardNormal};

    fn store(rows: &[Vec<f64>]) -> TreeStore {
        TreeStore::build(&from_rows(rows), StoreKind::X).unwrap()
    }

    fn fid2(a: &SimState, b: &SimState) -> f64 {
        a.fidelity(b).powi(2)
    }

    #[test]
    fn symmetric_difference() {
        let x = store(&[vec![1.0, 0.0]]);
        let y = store(&[vec![0.0, 1.0]]);
        for tier in [Tier::Spectral, Tier::Circuit] {
            let p = DifferenceParams::new(0.05, 0.05).with_tier(tier);
            let out = difference_state_prep(&x, &y, &[(0, 0, 1.0)], &p).unwrap();
            let a = out.state.amplitudes();
            let h = std::f64::consts::FRAC_1_SQRT_2;
            // global phase fixed by the first component
            let ph = a[0] / a[0].norm();
            assert!((a[0] / ph - C64::new(h, 0.0)).norm() < 1e-9);
            assert!((a[1] / ph - C64::new(-h, 0.0)).norm() < 1e-9);
            assert!(out.branches[0].fidelity >= 1.0 - 0.05f64.powi(2));
        }
    }

    #[test]
    fn antipodal_points_give_x_direction() {
        let x = store(&[vec![0.6, 0.8]]);
        let y = store(&[vec![-0.6, -0.8]]);
        let out =
            difference_state_prep(&x, &y, &[(0, 0, 1.0)], &DifferenceParams::new(0.05, 0.05))
                .unwrap();
        let a = out.state.amplitudes();
        assert!((a[0].norm() - 0.6).abs() < 1e-9);
        assert!((a[1].norm() - 0.8).abs() < 1e-9);
        assert!((a[0].conj() * a[1]).re > 0.0);
        // sin ψ = 1 for antipodal points
        assert!((out.branches[0].sin_psi - 1.0).abs() < 1e-12);
    }

    fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_for(seed, 0);
        (0..n)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn grid_matches_dense_target() {
        let x = store(&random_rows(2, 4, 3));
        let y = store(&random_rows(2, 4, 4));
        let w = [(0, 0, 0.1), (0, 1, 0.2), (1, 0, 0.3), (1, 1, 0.4)];
        let target = difference_target(&x, &y, &w).unwrap();
        let eps = 0.05;
        let mut states = Vec::new();
        for tier in [Tier::Spectral, Tier::Circuit] {
            let p = DifferenceParams::new(eps, eps).with_tier(tier);
            let out = difference_state_prep(&x, &y, &w, &p).unwrap();
            assert!(fid2(&out.state, &target) >= 1.0 - eps, "{tier}");
            states.push(out.state);
        }
        assert!(fid2(&states[0], &states[1]) >= 1.0 - 1e-6);
    }

    #[test]
    fn four_branch_joint_fidelity() {
        let x = store(&random_rows(2, 2, 7));
        let y = store(&random_rows(2, 2, 8));
        let w = [(0, 0, 0.25), (0, 1, 0.25), (1, 0, 0.25), (1, 1, 0.25)];
        let dp = 0.1;
        let out = difference_state_prep(&x, &y, &w, &DifferenceParams::new(0.01, dp)).unwrap();
        let target = difference_target(&x, &y, &w).unwrap();
        assert!(fid2(&out.state, &target) >= 1.0 - 4.0 * dp * dp);
        for b in &out.branches {
            assert!(b.fidelity >= 1.0 - dp * dp);
        }
    }

    #[test]
    fn equal_overlaps_equal_budgets() {
        // second branch is the first rotated by 90 degrees
        let x = store(&[vec![1.0, 0.2], vec![-0.2, 1.0]]);
        let y = store(&[vec![0.3, 0.9], vec![-0.9, 0.3]]);
        let w = [(0, 0, 0.5), (1, 1, 0.5)];
        let out = difference_state_prep(&x, &y, &w, &DifferenceParams::new(0.05, 0.05)).unwrap();
        let (a, b) = (&out.branches[0], &out.branches[1]);
        assert_eq!(a.l_budget, b.l_budget);
        assert!((a.fidelity - b.fidelity).abs() < 1e-12);
    }

    #[test]
    fn rough_estimate_keeps_budget() {
        let dp = 0.05;
        let need = (2.0 / dp as f64).log2();
        for k in 1..=20 {
            let s = 0.045 * k as f64;
            for f in [0.5, 0.75, 1.0, 1.25, 1.5] {
                let sched = FixedPointSchedule::for_overlap((s * f).min(1.0), dp).unwrap();
                assert!(sched.l_budget as f64 >= need / s);
                assert!(sched.predicted_success(s * s) >= 1.0 - dp * dp - 1e-12);
            }
        }
    }

    #[test]
    fn coincident_branch_rejected() {
        let x = store(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let err = difference_state_prep(
            &x,
            &x,
            &[(0, 1, 0.5), (1, 1, 0.5)],
            &DifferenceParams::new(0.05, 0.05),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroDifference { i: 1, j: 1 }));
    }

    #[test]
    fn zero_estimate_names_branch() {
        let x = store(&[vec![1.0, 0.0]]);
        let y = store(&[vec![0.99, 0.0]]);
        let mut p = DifferenceParams::new(0.05, 0.05);
        p.t_bits = Some(2);
        let err = difference_state_prep(&x, &y, &[(0, 0, 1.0)], &p).unwrap_err();
        assert!(matches!(err, Error::Branch { i: 0, j: 0, .. }));
    }

    #[test]
    fn queries_are_metered() {
        let x = store(&[vec![1.0, 0.0]]);
        let y = store(&[vec![0.0, 1.0]]);
        let out =
            difference_state_prep(&x, &y, &[(0, 0, 1.0)], &DifferenceParams::new(0.05, 0.05))
                .unwrap();
        assert!(out.queries > 0);
        assert!(x.query_counts().row_state > 0);
    }
}
