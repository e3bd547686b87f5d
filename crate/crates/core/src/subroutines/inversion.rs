use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{herm_eigen_sorted, C64};
use crate::sim::Op;
use crate::subroutines::phase::qpe_filter_circuit;
use crate::subroutines::{filtered_average, BlockEncoding, EstimateReport, Tier};

/// Tolerance on the part of |b> lying in the kernel of A.
pub const SPAN_TOLERANCE: f64 = 1e-8;

/// Largest system dimension run through the circuit tier.
pub const CIRCUIT_MAX_DIM: usize = 4;

/// What to do with the component of |b> in the kernel of A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelPolicy {
    /// Span error when the kernel component exceeds [`SPAN_TOLERANCE`].
    Reject,
    /// Drop it: the zero-eigenvalue filter value removes it, giving the
    /// pseudo-inverse direction.
    Project,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionParams {
    /// Condition-number bound: nonzero eigenvalues assumed in [1/κ, 1].
    pub kappa: f64,
    pub eps: f64,
    /// Eigenvalue register width; defaults to ⌈log₂(4κ/ε)⌉ + 1.
    pub t_bits: Option<u32>,
    pub kernel: KernelPolicy,
    pub tier: Tier,
    /// Query cost of one application of the block-encoding unitary.
    pub unitary_cost: u64,
    /// Query cost of preparing |b>.
    pub input_cost: u64,
}

impl InversionParams {
    pub fn new(kappa: f64, eps: f64) -> Self {
        Self {
            kappa,
            eps,
            t_bits: None,
            kernel: KernelPolicy::Reject,
            tier: Tier::Spectral,
            unitary_cost: 1,
            input_cost: 1,
        }
    }

    pub fn with_tier(mut self, tier: Tier) -> Self {
        self.tier = tier;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelPolicy) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn bits(&self) -> u32 {
        self.t_bits
            .unwrap_or_else(|| (4.0 * self.kappa / self.eps).log2().ceil().max(1.0) as u32 + 1)
    }
}

#[derive(Debug, Clone)]
pub struct InversionOutput {
    /// Normalized A⁻¹|b> estimate.
    pub state: DVector<C64>,
    /// Probability of the filter post-selection.
    pub success_probability: f64,
    pub t_bits: u32,
    /// Norm of the kernel component of |b>.
    pub kernel_residual: f64,
    /// Smallest nonzero |λ| when it falls below 1/κ.
    pub kappa_violation: Option<f64>,
    pub eigenvalues: Vec<f64>,
    pub queries: u64,
}

impl InversionOutput {
    pub fn report(&self, params: &InversionParams) -> EstimateReport {
        let mut p = BTreeMap::new();
        p.insert("kappa".to_string(), params.kappa);
        p.insert("eps".to_string(), params.eps);
        p.insert("t_bits".to_string(), self.t_bits as f64);
        EstimateReport {
            name: "invert_block_encoded".into(),
            params: p,
            point_estimate: self.success_probability,
            grid_bits: self.t_bits,
            confidence: 1.0,
            queries: self.queries,
            error_bound: params.eps,
            measured_error: None,
        }
    }
}

/// ⌈κ((T_U + a)·log₂²(κ/ε) + T_b)·log₂κ⌉ with α = 1 and each logarithm
/// floored at 1.
pub fn lemma4_queries(kappa: f64, eps: f64, unitary_cost: u64, ancillas: usize, input_cost: u64) -> u64 {
    let l1 = (kappa / eps).log2().max(1.0);
    let l2 = kappa.log2().max(1.0);
    let c = kappa * (((unitary_cost + ancillas as u64) as f64) * l1 * l1 + input_cost as f64) * l2;
    c.ceil() as u64
}

/// Filter value applied to estimation outcome y: (1/κ)/λ̃ with
/// λ̃ = 2y/N for y ≤ N/2 and 2(y - N)/N above, clipped to [-1, 1], 0 at y = 0.
fn inverse_filter(kappa: f64, t: u32) -> impl Fn(usize) -> f64 {
    let n = (1usize << t) as f64;
    move |y| {
        if y == 0 {
            return 0.0;
        }
        let yf = y as f64;
        let lam = if yf <= n / 2.0 { 2.0 * yf / n } else { 2.0 * (yf - n) / n };
        (1.0 / (kappa * lam)).clamp(-1.0, 1.0)
    }
}

fn kernel_cut(kappa: f64) -> f64 {
    (1e-3 / kappa).min(1e-9)
}

/// Inverts a Hermitian A with ‖A‖ ≤ 1 on |b> by phase estimation of e^{iπA},
/// eigenvalue filtering and uncomputation.
pub fn invert_hermitian(
    a: &DMatrix<C64>,
    b: &DVector<C64>,
    params: &InversionParams,
    ancillas: usize,
) -> Result<InversionOutput> {
    let d = a.nrows();
    if a.ncols() != d || b.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: b.len(),
        });
    }
    if !(params.kappa >= 1.0) || !(params.eps > 0.0) {
        return Err(Error::Parameter(format!(
            "inversion needs κ ≥ 1 and ε > 0, got κ = {}, ε = {}",
            params.kappa, params.eps
        )));
    }
    let bn = b.norm();
    if bn == 0.0 {
        return Err(Error::Parameter("input state is zero".into()));
    }
    let b = b / C64::new(bn, 0.0);
    let (vals, vecs) = herm_eigen_sorted(a);
    if let Some(l) = vals.iter().find(|l| l.abs() > 1.0 + 1e-9) {
        return Err(Error::Parameter(format!(
            "eigenvalue {l} outside [-1, 1]; block-encoding scale too small"
        )));
    }
    let cut = kernel_cut(params.kappa);
    let beta = vecs.adjoint() * &b;
    let kernel_residual = vals
        .iter()
        .zip(beta.iter())
        .filter(|(l, _)| l.abs() <= cut)
        .map(|(_, z)| z.norm_sqr())
        .sum::<f64>()
        .sqrt();
    if kernel_residual > SPAN_TOLERANCE && params.kernel == KernelPolicy::Reject {
        return Err(Error::Span {
            residual: kernel_residual,
        });
    }
    let min_nonzero = vals
        .iter()
        .map(|l| l.abs())
        .filter(|&l| l > cut)
        .fold(f64::INFINITY, f64::min);
    let kappa_violation = if min_nonzero * params.kappa < 1.0 - 1e-12 {
        log::warn!(
            "smallest nonzero eigenvalue {min_nonzero:e} is below 1/κ = {:e}",
            1.0 / params.kappa
        );
        Some(min_nonzero)
    } else {
        None
    };

    let t = params.bits();
    let f = inverse_filter(params.kappa, t);
    let (state, success) = match params.tier {
        Tier::Spectral => {
            let mut out = DVector::zeros(d);
            for (j, &l) in vals.iter().enumerate() {
                let phase = (l / 2.0).rem_euclid(1.0);
                let g = filtered_average(phase, t, &f);
                out += vecs.column(j) * (beta[j] * g);
            }
            let p = out.norm_squared();
            (out, p)
        }
        Tier::Circuit => {
            if d > CIRCUIT_MAX_DIM || !d.is_power_of_two() {
                return Err(Error::Parameter(format!(
                    "circuit-tier inversion supports power-of-two dimension ≤ {CIRCUIT_MAX_DIM}, got {d}"
                )));
            }
            let u = Op::exp_hermitian(a, std::f64::consts::PI);
            let (v, p) = qpe_filter_circuit(&u, &b, t, &f)?;
            (v * C64::new(p.sqrt(), 0.0), p)
        }
    };
    if success <= 0.0 {
        return Err(Error::PostSelection {
            probability: success,
            floor: 0.0,
        });
    }
    let state = state / C64::new(success.sqrt(), 0.0);
    Ok(InversionOutput {
        state,
        success_probability: success,
        t_bits: t,
        kernel_residual,
        kappa_violation,
        eigenvalues: vals,
        queries: lemma4_queries(
            params.kappa,
            params.eps,
            params.unitary_cost,
            ancillas,
            params.input_cost,
        ),
    })
}

/// Inverts the matrix held by a block-encoding on |b>.
pub fn invert_block_encoded(
    be: &BlockEncoding,
    b: &DVector<C64>,
    params: &InversionParams,
) -> Result<InversionOutput> {
    let a = be.block()?;
    invert_hermitian(&a, b, params, be.ancillas)
}

/// Dense A⁺b normalized, for comparisons.
pub fn pseudo_inverse_direction(a: &DMatrix<C64>, b: &DVector<C64>, cut: f64) -> DVector<C64> {
    let (vals, vecs) = herm_eigen_sorted(a);
    let beta = vecs.adjoint() * b;
    let mut out = DVector::zeros(b.len());
    for (j, &l) in vals.iter().enumerate() {
        if l.abs() > cut {
            out += vecs.column(j) * (beta[j] / l);
        }
    }
    let n = out.norm();
    if n > 0.0 {
        out / C64::new(n, 0.0)
    } else {
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_complex;
    use crate::sim::rng_for;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cvec(v: &[f64]) -> DVector<C64> {
        DVector::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0)))
    }

    fn fid(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
        a.dotc(b).norm_sqr() / (a.norm_squared() * b.norm_squared())
    }

    #[test]
    fn identity_returns_input() {
        let a = DMatrix::<C64>::identity(4, 4);
        let b = cvec(&[0.5, -0.5, 0.5, 0.5]);
        for tier in [Tier::Spectral, Tier::Circuit] {
            let out = invert_hermitian(&a, &b, &InversionParams::new(2.0, 0.01).with_tier(tier), 0)
                .unwrap();
            assert!(fid(&out.state, &b) > 1.0 - 1e-12, "{tier}");
        }
    }

    #[test]
    fn two_level_hand_inversion() {
        let a = to_complex(&DMatrix::from_diagonal(&nalgebra::dvector![2.0 / 3.0, 1.0 / 3.0]));
        let b = cvec(&[1.0, 1.0]) / C64::new(2f64.sqrt(), 0.0);
        let want = cvec(&[1.0, 2.0]) / C64::new(5f64.sqrt(), 0.0);
        let eps = 0.01;
        let mut outs = Vec::new();
        for tier in [Tier::Spectral, Tier::Circuit] {
            let out = invert_hermitian(&a, &b, &InversionParams::new(3.0, eps).with_tier(tier), 0)
                .unwrap();
            assert!(fid(&out.state, &want) >= 1.0 - eps, "{tier}");
            outs.push(out.state);
        }
        assert!(fid(&outs[0], &outs[1]) >= 1.0 - 1e-6);
    }

    fn random_psd(d: usize, rank: usize, kappa: f64, rng: &mut impl Rng) -> DMatrix<f64> {
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        let q = g.qr().q();
        let mut m = DMatrix::zeros(d, d);
        for k in 0..rank {
            let l = if k == 0 { 1.0 } else { rng.random_range(1.0 / kappa..=1.0) };
            let lam = if k == 1 { 1.0 / kappa } else { l };
            m += q.column(k) * q.column(k).transpose() * lam;
        }
        m
    }

    #[test]
    fn random_psd_matches_pseudo_inverse() {
        let mut rng = rng_for(5, 1);
        let eps = 0.01;
        for trial in 0..50 {
            let d = rng.random_range(2..=8);
            let rank = if trial % 3 == 0 { (d - 1).max(2) } else { d };
            let kappa = 10.0;
            let a = to_complex(&random_psd(d, rank, kappa, &mut rng));
            // keep b inside the range of A
            let raw = cvec(&(0..d).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>());
            let b = &a * raw;
            let b = &b / C64::new(b.norm(), 0.0);
            let out = invert_hermitian(&a, &b, &InversionParams::new(kappa, eps), 0).unwrap();
            let want = pseudo_inverse_direction(&a, &b, 1e-9);
            assert!(fid(&out.state, &want) >= 1.0 - eps, "trial {trial}");
        }
    }

    #[test]
    fn tiers_agree_on_small_instances() {
        let mut rng = rng_for(6, 0);
        for _ in 0..5 {
            let a = to_complex(&random_psd(4, 4, 5.0, &mut rng));
            let b = cvec(&[0.3, -0.4, 0.5, 0.1]);
            let b = &b / C64::new(b.norm(), 0.0);
            let p = InversionParams::new(5.0, 0.05);
            let s = invert_hermitian(&a, &b, &p, 0).unwrap();
            let c = invert_hermitian(&a, &b, &p.with_tier(Tier::Circuit), 0).unwrap();
            assert!(fid(&s.state, &c.state) >= 1.0 - 1e-6);
            assert!((s.success_probability - c.success_probability).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_component_policy() {
        let a = to_complex(&DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]));
        let b = cvec(&[1.0, 1.0]) / C64::new(2f64.sqrt(), 0.0);
        let p = InversionParams::new(2.0, 0.01);
        assert!(matches!(invert_hermitian(&a, &b, &p, 0), Err(Error::Span { .. })));
        let out = invert_hermitian(&a, &b, &p.with_kernel(KernelPolicy::Project), 0).unwrap();
        assert!(fid(&out.state, &cvec(&[1.0, 0.0])) > 1.0 - 1e-12);
        assert!((out.kernel_residual - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn kappa_violation_is_reported() {
        let a = to_complex(&DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.05]));
        let b = cvec(&[1.0, 0.0]);
        let out = invert_hermitian(&a, &b, &InversionParams::new(10.0, 0.01), 0).unwrap();
        assert_eq!(out.kappa_violation, Some(0.05));
    }

    #[test]
    fn lemma4_formula() {
        // κ = 4, ε = 1/4: log₂(16) = 4, log₂ 4 = 2
        assert_eq!(lemma4_queries(4.0, 0.25, 3, 1, 2), (4.0 * ((4.0 * 16.0) + 2.0) * 2.0) as u64);
    }
}
