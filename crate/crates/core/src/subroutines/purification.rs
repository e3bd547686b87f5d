use nalgebra::{DMatrix, DVector};

use crate::data::{Mapping, TreeStore};
use crate::error::{Error, Result};
use crate::linalg::{qubits_for, C64};
use crate::sim::{DensityOp, Layout, Op, SimState};
use crate::subroutines::difference::{difference_scales, difference_with_oracle};
use crate::subroutines::{DifferenceOutput, DifferenceParams, DistanceOracle, Tier};

/// Below this flag probability the circuit tier refuses to post-select.
pub const POST_SELECTION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PurificationOutput {
    pub row: usize,
    /// Registers (i, j, x): |i> Σ_j ‖x_i - x_j‖/√c |j>|x_i - x_j>.
    pub state: SimState,
    pub neighbors: Vec<usize>,
    /// Rotation radius r.
    pub radius: f64,
    /// Flag probability Σ_j q_ij / (k r²) before amplification.
    pub post_selection: f64,
    /// Amplitude-amplification rounds used to lift the flag probability.
    pub amplification_rounds: u64,
    pub difference: DifferenceOutput,
    /// Store queries of one preparation.
    pub queries: u64,
}

impl PurificationOutput {
    /// Amplitudes over (x, j) with the fixed i register dropped: the x
    /// register is the purifying ancilla and j the system.
    pub fn ancilla_system_vector(&self) -> Result<DVector<C64>> {
        let v = self.state.slice(&["x", "j"], &[("i", self.row)])?;
        Ok(DVector::from_vec(v))
    }

    pub fn ancilla_qubits(&self) -> usize {
        self.state.layout().qubits("x").unwrap_or(0)
    }

    pub fn system_qubits(&self) -> usize {
        self.state.layout().qubits("j").unwrap_or(0)
    }

    /// Unitary G with G|0> = the purification over (x, j).
    pub fn prep_op(&self) -> Result<Op> {
        Op::state_prep(&self.ancilla_system_vector()?)
    }

    /// Reduced state on the j register.
    pub fn reduced(&self) -> Result<DensityOp> {
        self.state.partial_trace(&["j"])
    }
}

/// Dense C/tr(C) for row i over the padded j register, with
/// C_jk = (x_i - x_j)·(x_i - x_k) on the neighbor set.
pub fn dense_local_density(x: &DMatrix<f64>, i: usize, neighbors: &[usize], width: usize) -> DMatrix<f64> {
    let mut rho = DMatrix::zeros(width, width);
    for &j in neighbors {
        for &k in neighbors {
            rho[(j, k)] = (x.row(i) - x.row(j)).dot(&(x.row(i) - x.row(k)));
        }
    }
    let tr = rho.trace();
    if tr > 0.0 {
        rho /= tr;
    }
    rho
}

/// Prepares the purification of the local Gram density of row `i`.
///
/// Loads |B_i> from the neighbor store, writes the ε₁-quantized squared
/// distances q_ij, rotates a flag by √q_ij / r and keeps flag = 1, then
/// appends the normalized differences by branch-parallel difference-state
/// preparation. `radius` defaults to the largest √q_ij.
pub fn purification_prep(
    x: &TreeStore,
    b: &TreeStore,
    i: usize,
    params: &DifferenceParams,
    radius: Option<f64>,
) -> Result<PurificationOutput> {
    if b.rows() != x.rows() {
        return Err(Error::Dimension {
            expected: x.rows(),
            found: b.rows(),
        });
    }
    let bi = match b.row_state(i) {
        Ok(v) => v,
        Err(Error::ZeroNorm { .. }) => return Err(Error::IsolatedPoint { index: i }),
        Err(e) => return Err(e),
    };
    let neighbors: Vec<usize> = (0..b.cols()).filter(|&j| bi[j] != 0.0).collect();
    let k = neighbors.len();
    let probe: Vec<(usize, usize, f64)> = neighbors.iter().map(|&j| (i, j, 1.0)).collect();
    let (eps0, _) = difference_scales(x, x, &probe)?;
    let eps1 = params
        .eps1
        .unwrap_or(params.eps * eps0 * eps0)
        .max(f64::MIN_POSITIVE);
    let oracle = DistanceOracle::new(x, x, eps1, params.eps.clamp(1e-12, 0.5))?;
    let pairs: Vec<(usize, usize)> = neighbors.iter().map(|&j| (i, j)).collect();
    // compute and uncompute of the distance register
    let q = oracle.values_superposed(&pairs)?;
    oracle.bill_superposed(&pairs);
    let qmax = q.iter().cloned().fold(0.0, f64::max);
    if qmax <= 0.0 {
        return Err(Error::ZeroDifference { i, j: neighbors[0] });
    }
    let r = radius.unwrap_or(qmax.sqrt());
    if !(r > 0.0) || qmax.sqrt() > r * (1.0 + 1e-12) {
        return Err(Error::Parameter(format!(
            "rotation radius {r} is below the largest neighbor distance {}",
            qmax.sqrt()
        )));
    }

    let (amps, p) = match params.tier {
        Tier::Spectral => {
            let p: f64 = q.iter().sum::<f64>() / (k as f64 * r * r);
            let c: f64 = q.iter().sum();
            let amps: Vec<f64> = q.iter().map(|v| (v / c).sqrt()).collect();
            (amps, p)
        }
        Tier::Circuit => {
            let qj = qubits_for(b.row_width());
            let layout = Layout::new(&[("j", qj), ("flag", 1)])?;
            let mut bfull = vec![0.0; 1 << qj];
            bfull[..bi.len()].copy_from_slice(&bi[..]);
            let mut st = SimState::init(layout).apply(&Op::state_prep_real(&bfull)?, &["j"])?;
            let rots: Vec<Option<Op>> = (0..1 << qj)
                .map(|j| {
                    neighbors
                        .iter()
                        .position(|&n| n == j)
                        .map(|t| Op::ry((q[t].sqrt() / r).min(1.0).asin()))
                })
                .collect();
            st = st.apply_per_branch(&["j"], &["flag"], |v| rots[v[0]].as_ref())?;
            let p = st.marginal("flag")?[1];
            if p < POST_SELECTION_FLOOR {
                return Err(Error::PostSelection {
                    probability: p,
                    floor: POST_SELECTION_FLOOR,
                });
            }
            let (kept, _) = st.project("flag", 1)?;
            let slice = kept.slice(&["j"], &[("flag", 1)])?;
            let amps = neighbors.iter().map(|&j| slice[j].re).collect();
            (amps, p)
        }
    };
    let theta = p.sqrt().asin();
    let rounds = if p >= 1.0 {
        0
    } else {
        (std::f64::consts::FRAC_PI_4 / theta - 0.5).round().max(0.0) as u64
    };
    let amplified = ((2 * rounds + 1) as f64 * theta).sin().powi(2);

    let weights: Vec<(usize, usize, f64)> = neighbors
        .iter()
        .zip(&amps)
        .map(|(&j, a)| (i, j, a * a))
        .collect();
    let difference = difference_with_oracle(&oracle, &weights, params)?;

    // one flag preparation = |B_i> load + distance compute/uncompute
    let prep_cost = 1 + 2 * pairs.iter().map(|&(a, c)| oracle.cost(a, c)).max().unwrap_or(0);
    let tries = (1.0 / amplified).ceil() as u64;
    let flag_queries = tries * (2 * rounds + 1) * prep_cost;
    b.meter(Mapping::RowState, tries * (2 * rounds + 1) - 1);
    Ok(PurificationOutput {
        row: i,
        state: difference.state.clone(),
        neighbors,
        radius: r,
        post_selection: p,
        amplification_rounds: rounds,
        queries: flag_queries + difference.queries,
        difference,
    })
}
