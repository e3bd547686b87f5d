use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::sim::{Layout, Op, SimState};

/// Largest Definition-1 deviation accepted at construction.
pub const BLOCK_TOLERANCE: f64 = 1e-8;

/// (α, a, ε) block-encoding U = (G† ⊗ I)(I ⊗ SWAP)(G ⊗ I) of the reduced
/// state of G|0>, acting on registers (anc, sys, copy). The encoded matrix
/// lives on `copy` with `anc` and `sys` in |0>.
#[derive(Debug, Clone)]
pub struct BlockEncoding {
    pub alpha: f64,
    /// Number of ancilla qubits a (the `anc` and `sys` registers).
    pub ancillas: usize,
    /// Measured ‖α·block - target‖.
    pub epsilon: f64,
    pub encoded_dim: usize,
    prep: Op,
    anc_qubits: usize,
    sys_qubits: usize,
}

/// Summary of a block-encoding for reports.
#[derive(Debug, Clone, Serialize)]
pub struct BlockEncodingReport {
    pub alpha: f64,
    pub ancillas: usize,
    pub epsilon: f64,
    pub encoded_dim: usize,
}

fn swap_op(qubits: usize) -> Op {
    let s = 1usize << qubits;
    Op::Permutation((0..s * s).map(|idx| (idx % s) * s + idx / s).collect())
}

/// Spectral norm of a complex matrix.
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Tr_anc |G><G| for G|0> over (anc, sys).
fn reduced_of(g: &DVector<C64>, anc_qubits: usize, sys_qubits: usize) -> DMatrix<C64> {
    let (na, ns) = (1usize << anc_qubits, 1usize << sys_qubits);
    let psi = DMatrix::from_fn(na, ns, |a, s| g[a * ns + s]);
    psi.transpose() * psi.map(|z| z.conj())
}

impl BlockEncoding {
    fn layout(&self) -> Result<Layout> {
        Layout::new(&[
            ("anc", self.anc_qubits),
            ("sys", self.sys_qubits),
            ("copy", self.sys_qubits),
        ])
    }

    /// Applies U to a state over (anc, sys, copy).
    pub fn apply(&self, state: &SimState) -> Result<SimState> {
        state
            .apply(&self.prep, &["anc", "sys"])?
            .apply(&swap_op(self.sys_qubits), &["sys", "copy"])?
            .apply(&self.prep.adjoint(), &["anc", "sys"])
    }

    /// α (<0|^a ⊗ I) U (|0>^a ⊗ I), built column by column from the circuit.
    pub fn block(&self) -> Result<DMatrix<C64>> {
        let layout = self.layout()?;
        let d = self.encoded_dim;
        let mut m = DMatrix::zeros(d, d);
        for k in 0..d {
            let out = self.apply(&SimState::basis(layout.clone(), &[0, 0, k]))?;
            let col = out.slice(&["copy"], &[("anc", 0), ("sys", 0)])?;
            for (r, z) in col.iter().enumerate() {
                m[(r, k)] = z * self.alpha;
            }
        }
        Ok(m)
    }

    /// Checks Definition 1 against `target`; returns the measured slack and
    /// records it as ε.
    pub fn verify(&mut self, target: &DMatrix<C64>) -> Result<f64> {
        let dev = operator_norm(&(self.block()? - target));
        if dev > BLOCK_TOLERANCE {
            return Err(Error::Construction {
                deviation: dev,
                tolerance: BLOCK_TOLERANCE,
            });
        }
        self.epsilon = dev;
        Ok(dev)
    }

    pub fn prep(&self) -> &Op {
        &self.prep
    }

    pub fn report(&self) -> BlockEncodingReport {
        BlockEncodingReport {
            alpha: self.alpha,
            ancillas: self.ancillas,
            epsilon: self.epsilon,
            encoded_dim: self.encoded_dim,
        }
    }
}

/// Builds the block-encoding of Tr_anc(G|0><0|G†) from a preparation G over
/// (anc, sys) and verifies it densely.
pub fn block_encoding_from_purification(
    prep: &Op,
    anc_qubits: usize,
    sys_qubits: usize,
) -> Result<BlockEncoding> {
    let dim = 1usize << (anc_qubits + sys_qubits);
    if let Some(d) = prep.dim() {
        if d != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: d,
            });
        }
    }
    prep.check_unitary()?;
    let mut g = vec![C64::new(0.0, 0.0); dim];
    g[0] = C64::new(1.0, 0.0);
    prep.apply_to(&mut g);
    let rho = reduced_of(&DVector::from_vec(g), anc_qubits, sys_qubits);
    let mut be = BlockEncoding {
        alpha: 1.0,
        ancillas: anc_qubits + sys_qubits,
        epsilon: 0.0,
        encoded_dim: 1 << sys_qubits,
        prep: prep.clone(),
        anc_qubits,
        sys_qubits,
    };
    be.verify(&rho)?;
    Ok(be)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_complex;
    use crate::subroutines::{dense_local_density, purification_prep, DifferenceParams};

    #[test]
    fn bell_pair_encodes_maximally_mixed() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let g = Op::state_prep_real(&[h, 0.0, 0.0, h]).unwrap();
        let be = block_encoding_from_purification(&g, 1, 1).unwrap();
        let want = DMatrix::<C64>::identity(2, 2) * C64::new(0.5, 0.0);
        assert!(operator_norm(&(be.block().unwrap() - want)) < 1e-12);
        assert_eq!(be.ancillas, 2);
        assert_eq!(be.alpha, 1.0);
    }

    #[test]
    fn pure_state_encodes_projector() {
        let g = Op::identity(4);
        let be = block_encoding_from_purification(&g, 1, 1).unwrap();
        let b = be.block().unwrap();
        assert!((b[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(b[(1, 1)].norm() < 1e-12 && b[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn wrong_target_is_rejected() {
        let g = Op::identity(4);
        let mut be = block_encoding_from_purification(&g, 1, 1).unwrap();
        let wrong = DMatrix::<C64>::identity(2, 2);
        assert!(matches!(be.verify(&wrong), Err(Error::Construction { .. })));
    }

    #[test]
    fn purification_block_matches_local_density() {
        let pts = vec![
            vec![0.1, 0.2, -0.3],
            vec![0.9, 0.1, 0.0],
            vec![-0.2, 0.8, 0.4],
            vec![0.3, -0.5, 0.6],
        ];
        let bm = vec![
            vec![0.0, 1.0, 1.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
        ];
        let x = crate::data::TreeStore::build(
            &crate::linalg::from_rows(&pts),
            crate::data::StoreKind::X,
        )
        .unwrap();
        let b = crate::data::TreeStore::build(
            &crate::linalg::from_rows(&bm),
            crate::data::StoreKind::B,
        )
        .unwrap();
        let mut p = DifferenceParams::new(1e-3, 1e-5);
        p.eps1 = Some(1e-10);
        let pur = purification_prep(&x, &b, 0, &p, None).unwrap();
        let be = block_encoding_from_purification(
            &pur.prep_op().unwrap(),
            pur.ancilla_qubits(),
            pur.system_qubits(),
        )
        .unwrap();
        assert!(be.epsilon <= BLOCK_TOLERANCE);
        let dense = to_complex(&dense_local_density(&crate::linalg::from_rows(&pts), 0, &[1, 2, 3], 4));
        assert!(operator_norm(&(be.block().unwrap() - dense)) < 1e-8);
    }
}
