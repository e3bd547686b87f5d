use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::data::{Mapping, TreeStore};
use crate::error::{Error, Result};
use crate::linalg::{qubits_for, to_complex, C64, RANK_TOL};
use crate::sim::{Layout, Op, SimState};
use crate::subroutines::{
    filtered_average, phase_estimation_circuit, qpe_amplitude, qpe_filter_circuit, Tier,
};

/// Largest X̄ dimension the circuit tier will exponentiate densely.
pub const EXTENDED_CIRCUIT_MAX_DIM: usize = 16;

const EMBEDDING_TOLERANCE: f64 = 1e-8;

/// Power of two strictly above ‖X‖_F. Evolving e^{iX̄τ} with τ = π/scale
/// keeps every eigenphase of X̄ inside (-1/2, 1/2) turns.
pub fn extended_scale(frobenius: f64) -> f64 {
    if frobenius <= 0.0 {
        return 1.0;
    }
    (frobenius.log2().floor() + 1.0).exp2()
}

/// Signed eigenvalue read from label y on a t-bit grid of the given scale.
pub fn extended_label(y: usize, t: u32, scale: f64) -> f64 {
    let n = 1usize << t;
    let y = y as f64;
    let nf = n as f64;
    if y <= nf / 2.0 {
        2.0 * scale * y / nf
    } else {
        2.0 * scale * (y - nf) / nf
    }
}

/// Padded square copy of the stored matrix with its SVD, plus the
/// symmetrized operator X̄ = [[0, X], [Xᵀ, 0]].
#[derive(Debug, Clone)]
struct Extended {
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    gamma: Vec<f64>,
    scale: f64,
    frobenius: f64,
}

impl Extended {
    fn new(store: &TreeStore) -> Self {
        let d = store.to_dense();
        let s = store.row_width().max(store.leaf_width());
        let mut x = DMatrix::zeros(s, s);
        x.view_mut((0, 0), (d.nrows(), d.ncols())).copy_from(&d);
        let svd = SVD::new(x.clone(), true, true);
        let u = svd.u.expect("requested U");
        let v = svd.v_t.expect("requested Vᵀ").transpose();
        let gamma = svd.singular_values.iter().copied().collect();
        let frobenius = store.frobenius_norm();
        Self {
            x,
            u,
            v,
            gamma,
            scale: extended_scale(frobenius),
            frobenius,
        }
    }

    fn side(&self) -> usize {
        self.x.nrows()
    }

    fn bar(&self) -> DMatrix<f64> {
        let s = self.side();
        let mut b = DMatrix::zeros(2 * s, 2 * s);
        b.view_mut((0, s), (s, s)).copy_from(&self.x);
        b.view_mut((s, 0), (s, s)).copy_from(&self.x.transpose());
        b
    }

    fn tau(&self) -> f64 {
        PI / self.scale
    }

    /// Eigenphase in turns of e^{iX̄τ} for eigenvalue ±γ.
    fn phase(&self, gamma: f64) -> f64 {
        (gamma * self.tau() / (2.0 * PI)).rem_euclid(1.0)
    }

    /// Coefficients β_i = <u_i|w> of a top-block input.
    fn betas(&self, w: &DVector<f64>) -> Vec<f64> {
        (0..self.side()).map(|i| self.u.column(i).dot(w)).collect()
    }

    /// |ψ_{i±}> = (|0,u_i> ± |1,v_i>)/√2.
    fn psi(&self, i: usize, sign: f64) -> DVector<f64> {
        let s = self.side();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut p = DVector::zeros(2 * s);
        for k in 0..s {
            p[k] = h * self.u[(k, i)];
            p[s + k] = sign * h * self.v[(k, i)];
        }
        p
    }
}

/// Splits an input over (flag, idx) into its top block, rejecting weight on
/// flag = 1 or imaginary parts.
fn top_block(input: &DVector<C64>, s: usize) -> Result<DVector<f64>> {
    if input.len() != 2 * s {
        return Err(Error::Dimension {
            expected: 2 * s,
            found: input.len(),
        });
    }
    let leakage: f64 = input.iter().skip(s).map(|z| z.norm_sqr()).sum::<f64>()
        + input.iter().take(s).map(|z| z.im * z.im).sum::<f64>();
    if leakage.sqrt() > EMBEDDING_TOLERANCE {
        return Err(Error::Embedding {
            leakage: leakage.sqrt(),
        });
    }
    Ok(DVector::from_iterator(s, input.iter().take(s).map(|z| z.re)))
}

/// Phase estimation of e^{iX̄τ} on a top-block input |0, w>.
#[derive(Debug, Clone)]
pub struct ExtendedPe {
    /// Registers (est, flag, idx).
    pub state: SimState,
    pub t_bits: u32,
    pub scale: f64,
    /// Singular values γ_i of the padded X with input weights β_i.
    pub components: Vec<(f64, f64)>,
    pub queries: u64,
}

impl ExtendedPe {
    /// Signed eigenvalue for each label of the estimation register.
    pub fn label_values(&self) -> Vec<f64> {
        (0..1usize << self.t_bits)
            .map(|y| extended_label(y, self.t_bits, self.scale))
            .collect()
    }
}

/// Block-encoding queries to simulate e^{iX̄τ·(2^t - 1)} across the
/// controlled powers, error ε₂ per power.
fn simulation_queries(frobenius: f64, tau: f64, t: u32, eps2: f64) -> u64 {
    let time = tau * ((1u64 << t) - 1) as f64;
    (frobenius * time).ceil() as u64 + t as u64 * (1.0 / eps2).log2().ceil().max(1.0) as u64
}

pub fn extended_matrix_phase_estimation(
    store: &TreeStore,
    input: &DVector<C64>,
    t_bits: u32,
    eps2: f64,
    tier: Tier,
) -> Result<ExtendedPe> {
    if t_bits == 0 || !(eps2 > 0.0) {
        return Err(Error::Parameter(format!(
            "extended phase estimation needs t >= 1 and ε₂ > 0, got t = {t_bits}, ε₂ = {eps2}"
        )));
    }
    let ext = Extended::new(store);
    let s = ext.side();
    let w = top_block(input, s)?;
    let betas = ext.betas(&w);
    let queries = simulation_queries(ext.frobenius, ext.tau(), t_bits, eps2);
    store.meter(Mapping::RowState, queries);
    store.meter(Mapping::NormState, queries);
    let n = 1usize << t_bits;
    let state = match tier {
        Tier::Spectral => {
            let layout = Layout::new(&[("est", t_bits as usize), ("flag", 1), ("idx", qubits_for(s))])?;
            let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
            let h = std::f64::consts::FRAC_1_SQRT_2;
            for (i, (&g, &b)) in ext.gamma.iter().zip(&betas).enumerate() {
                if b == 0.0 {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let psi = ext.psi(i, sign);
                    let phi = ext.phase(sign * g);
                    for y in 0..n {
                        let c = qpe_amplitude(phi, y, t_bits) * (b * h);
                        if c.norm_sqr() == 0.0 {
                            continue;
                        }
                        for (k, &pk) in psi.iter().enumerate() {
                            amps[y * 2 * s + k] += c * pk;
                        }
                    }
                }
            }
            SimState::from_amplitudes(layout, amps)?
        }
        Tier::Circuit => {
            if 2 * s > EXTENDED_CIRCUIT_MAX_DIM {
                return Err(Error::Parameter(format!(
                    "circuit tier handles X̄ up to dimension {EXTENDED_CIRCUIT_MAX_DIM}, got {}",
                    2 * s
                )));
            }
            let u = Op::exp_hermitian(&to_complex(&ext.bar()), ext.tau());
            let pe = phase_estimation_circuit(&u, input, t_bits)?;
            let layout = Layout::new(&[("est", t_bits as usize), ("flag", 1), ("idx", qubits_for(s))])?;
            SimState::from_amplitudes(layout, pe.amplitudes().to_vec())?
        }
    };
    Ok(ExtendedPe {
        state,
        t_bits,
        scale: ext.scale,
        components: ext.gamma.iter().copied().zip(betas).collect(),
        queries,
    })
}

#[derive(Debug, Clone)]
pub struct RidgeParams {
    pub alpha: f64,
    pub eps: f64,
    pub t_bits: Option<u32>,
    /// Rotation constant; defaults to min_i (γ̄_i² + α)/γ̄_i over the
    /// estimated nonzero spectrum.
    pub c1: Option<f64>,
    pub eps2: f64,
    pub tier: Tier,
}

impl RidgeParams {
    pub fn new(alpha: f64, eps: f64) -> Self {
        Self {
            alpha,
            eps,
            t_bits: None,
            c1: None,
            eps2: eps,
            tier: Tier::Spectral,
        }
    }

    pub fn with_tier(mut self, tier: Tier) -> Self {
        self.tier = tier;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeOutput {
    /// Unit vector over the padded column register.
    pub direction: Vec<f64>,
    pub success_probability: f64,
    pub c1: f64,
    pub t_bits: u32,
    pub amplification_rounds: u64,
    pub queries: u64,
}

/// Estimation bits so the eigenvalue grid spacing 2·scale/2^t is at most
/// ε·γ_min / 2.
pub fn ridge_bits(scale: f64, gamma_min: f64, eps: f64) -> u32 {
    ((4.0 * scale / (eps * gamma_min)).log2().ceil().max(1.0)) as u32
}

/// |a> ∝ (XᵀX + αI)⁻¹ Xᵀ|v> through phase estimation of X̄ on |0, v>, a
/// rotation by C₁γ̄/(γ̄² + α), uncomputation, post-selection of the rotation
/// flag and projection onto the right-singular block.
pub fn ridge_regress_quantum(store: &TreeStore, v: &DVector<f64>, params: &RidgeParams) -> Result<RidgeOutput> {
    if !(params.alpha >= 0.0) || !(params.eps > 0.0) {
        return Err(Error::Parameter(format!(
            "ridge regression needs α >= 0 and ε > 0, got α = {}, ε = {}",
            params.alpha, params.eps
        )));
    }
    let ext = Extended::new(store);
    let s = ext.side();
    if v.len() > s {
        return Err(Error::Dimension {
            expected: s,
            found: v.len(),
        });
    }
    let mut w = DVector::zeros(s);
    w.rows_mut(0, v.len()).copy_from(v);
    let norm = w.norm();
    if norm == 0.0 {
        return Err(Error::Parameter("ridge input is the zero vector".into()));
    }
    w /= norm;
    let gmax = ext.gamma.iter().copied().fold(0.0, f64::max);
    let nonzero: Vec<f64> = ext
        .gamma
        .iter()
        .copied()
        .filter(|&g| g > RANK_TOL * gmax.max(1.0))
        .collect();
    let gamma_min = nonzero.iter().copied().fold(f64::INFINITY, f64::min);
    if !gamma_min.is_finite() {
        return Err(Error::Parameter("ridge regression on a zero matrix".into()));
    }
    let t = params
        .t_bits
        .unwrap_or_else(|| ridge_bits(ext.scale, gamma_min, params.eps));
    let n = 1usize << t;
    let alpha = params.alpha;
    // estimated spectrum: the modal label of each nonzero singular value
    let modal = |g: f64| -> f64 {
        let y = (ext.phase(g) * n as f64).round() as usize % n;
        extended_label(y, t, ext.scale)
    };
    let c1 = params.c1.unwrap_or_else(|| {
        nonzero
            .iter()
            .map(|&g| modal(g))
            .filter(|&g| g > 0.0)
            .map(|g| (g * g + alpha) / g)
            .fold(f64::INFINITY, f64::min)
    });
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(Error::Precision(format!(
            "no nonzero eigenvalue label on a {t}-bit grid; raise the estimation bits"
        )));
    }
    let f = |y: usize| -> f64 {
        let g = extended_label(y, t, ext.scale);
        if g == 0.0 {
            0.0
        } else {
            (c1 * g / (g * g + alpha)).clamp(-1.0, 1.0)
        }
    };
    let betas = ext.betas(&w);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // flag-selected state over (flag, idx) after uncomputation
    let filtered: DVector<f64> = match params.tier {
        Tier::Spectral => {
            let mut out = DVector::zeros(2 * s);
            for (i, (&g, &b)) in ext.gamma.iter().zip(&betas).enumerate() {
                if b == 0.0 {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let factor = filtered_average(ext.phase(sign * g), t, f);
                    out += ext.psi(i, sign) * (b * h * factor);
                }
            }
            out
        }
        Tier::Circuit => {
            if 2 * s > EXTENDED_CIRCUIT_MAX_DIM {
                return Err(Error::Parameter(format!(
                    "circuit tier handles X̄ up to dimension {EXTENDED_CIRCUIT_MAX_DIM}, got {}",
                    2 * s
                )));
            }
            let u = Op::exp_hermitian(&to_complex(&ext.bar()), ext.tau());
            let mut input = DVector::zeros(2 * s);
            for k in 0..s {
                input[k] = C64::new(w[k], 0.0);
            }
            let (state, p) = qpe_filter_circuit(&u, &input, t, f)?;
            state.map(|z| z.re * p.sqrt())
        }
    };
    let bottom = filtered.rows(s, s).into_owned();
    let p = bottom.norm_squared();
    if p < 1e-14 {
        return Err(Error::Precision(format!(
            "ridge post-selection probability {p:e} is numerically zero"
        )));
    }
    let direction: Vec<f64> = (bottom / p.sqrt()).iter().copied().collect();
    let theta = p.sqrt().min(1.0).asin();
    let rounds = ((PI / (4.0 * theta) - 0.5).round().max(0.0)) as u64;
    let per_round = 2 * simulation_queries(ext.frobenius, ext.tau(), t, params.eps2);
    let queries = per_round * (2 * rounds + 1);
    store.meter(Mapping::RowState, queries);
    store.meter(Mapping::NormState, queries);
    Ok(RidgeOutput {
        direction,
        success_probability: p,
        c1,
        t_bits: t,
        amplification_rounds: rounds,
        queries,
    })
}
