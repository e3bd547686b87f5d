use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::data::{Mapping, TreeStore};
use crate::error::{Error, Result};
use crate::linalg::{qubits_for, sym_eigen_sorted, C64};
use crate::sim::{Layout, Op, SimState};
use crate::subroutines::{median_distribution, phase_estimation_circuit, qpe_distribution, Tier};

/// Estimation bits for singular-value precision δ‖D‖_F: ⌈log₂(1/δ)⌉ + 2.
pub fn qsve_bits(delta: f64) -> u32 {
    ((1.0 / delta).log2().ceil().max(0.0) as u32) + 2
}

/// σ̄ written for label y: ‖D‖_F |cos(πy/2^t)|.
pub fn qsve_label(frobenius: f64, y: usize, t: u32) -> f64 {
    frobenius * (PI * y as f64 / (1u64 << t) as f64).cos().abs()
}

/// Exact singular structure of a stored matrix together with the
/// estimation-grid parameters of singular value estimation.
#[derive(Debug, Clone)]
pub struct QsveModel {
    pub frobenius: f64,
    pub t_bits: u32,
    pub delta: f64,
    /// Median-of-`boost` repetitions (1 = plain estimation).
    pub boost: usize,
    /// σ_j for each column of `right_vectors`, ascending.
    pub singular_values: Vec<f64>,
    /// Right singular vectors over the padded column register.
    pub right_vectors: DMatrix<f64>,
    /// Columns of the unpadded matrix.
    pub cols: usize,
}

impl QsveModel {
    pub fn new(store: &TreeStore, delta: f64, boost: usize) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Parameter(format!("QSVE δ must be positive, got {delta}")));
        }
        let d = store.to_dense();
        let w = store.leaf_width();
        let mut g = DMatrix::zeros(w, w);
        let dtd = d.transpose() * &d;
        g.view_mut((0, 0), (d.ncols(), d.ncols())).copy_from(&dtd);
        let (vals, vecs) = sym_eigen_sorted(&g);
        Ok(Self {
            frobenius: store.frobenius_norm(),
            t_bits: qsve_bits(delta),
            delta,
            boost: boost.max(1) | 1,
            singular_values: vals.iter().map(|l| l.max(0.0).sqrt()).collect(),
            right_vectors: vecs,
            cols: d.ncols(),
        })
    }

    pub fn labels(&self) -> usize {
        1usize << self.t_bits
    }

    pub fn label_value(&self, y: usize) -> f64 {
        qsve_label(self.frobenius, y, self.t_bits)
    }

    /// Eigenphase θ/(2π) of the walk operator for singular value σ,
    /// with cos(θ/2) = σ/‖D‖_F.
    pub fn walk_phase(&self, sigma: f64) -> f64 {
        if self.frobenius == 0.0 {
            return 0.5;
        }
        let c = (sigma / self.frobenius).clamp(0.0, 1.0);
        2.0 * c.acos() / (2.0 * PI)
    }

    /// Label distribution for a right singular vector with value σ: the even
    /// mixture of the ±θ estimation kernels, median-boosted over the folded
    /// label min(y, N - y).
    pub fn label_distribution(&self, sigma: f64) -> Vec<f64> {
        let n = self.labels();
        let phi = self.walk_phase(sigma);
        let plus = qpe_distribution(phi, self.t_bits);
        let minus = qpe_distribution((1.0 - phi).rem_euclid(1.0), self.t_bits);
        let p: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| 0.5 * (a + b)).collect();
        median_distribution(&p, self.boost, |y| y.min(n - y))
    }

    /// Metered query cost of one estimation: ⌈1/δ⌉ walk steps per repetition.
    pub fn cost(&self) -> u64 {
        (1.0 / self.delta).ceil() as u64 * self.boost as u64
    }

    /// Folded grid cell of a label: y and N - y carry the same σ̄.
    pub fn cell(&self, y: usize) -> usize {
        y.min(self.labels() - y)
    }

    /// Label distribution of the value register for the uniform entangled
    /// input (1/√w) Σ_j |v_j>|v_j> over the padded register of width w.
    pub fn entangled_label_mass(&self) -> Vec<f64> {
        let w = self.singular_values.len() as f64;
        let mut mass = vec![0.0; self.labels()];
        for &s in &self.singular_values {
            for (m, p) in mass.iter_mut().zip(self.label_distribution(s)) {
                *m += p / w;
            }
        }
        mass
    }

    /// Entangled input post-selected on label y: Σ_j √P_j(y) |v_j>|v_j>,
    /// normalized, with registers (sys, copy).
    pub fn post_selected_state(&self, y: usize) -> Result<SimState> {
        let w = self.right_vectors.nrows();
        let q = qubits_for(w);
        let layout = Layout::new(&[("sys", q), ("copy", q)])?;
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        let mut total = 0.0;
        for (j, &s) in self.singular_values.iter().enumerate() {
            let p = self.label_distribution(s)[y];
            if p == 0.0 {
                continue;
            }
            total += p;
            let v = self.right_vectors.column(j);
            for a in 0..w {
                for b in 0..w {
                    amps[a * w + b] += C64::new(p.sqrt() * v[a] * v[b], 0.0);
                }
            }
        }
        if total == 0.0 {
            return Err(Error::ImpossibleOutcome {
                register: "sigma".into(),
                outcome: y,
            });
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut amps {
            *z /= norm;
        }
        SimState::from_amplitudes(layout, amps)
    }

    /// Reduced state of one copy after observing grid cell `cell`:
    /// Σ_j P_j(cell) |v_j><v_j| / Σ_j P_j(cell).
    pub fn post_selected_density(&self, cell: usize) -> Result<DMatrix<f64>> {
        let n = self.labels();
        let w = self.right_vectors.nrows();
        let mut rho = DMatrix::zeros(w, w);
        let mut total = 0.0;
        for (j, &s) in self.singular_values.iter().enumerate() {
            let dist = self.label_distribution(s);
            let mut p = dist[cell];
            if cell != 0 && n - cell != cell {
                p += dist[n - cell];
            }
            if p == 0.0 {
                continue;
            }
            total += p;
            let v = self.right_vectors.column(j);
            rho += v * v.transpose() * p;
        }
        if total == 0.0 {
            return Err(Error::ImpossibleOutcome {
                register: "sigma".into(),
                outcome: cell,
            });
        }
        Ok(rho / total)
    }

    /// Σ_j β_j |v_j>|σ̄_j> for an input over the padded column register, with
    /// registers (sys, sigma).
    pub fn apply(&self, input: &DVector<C64>) -> Result<SimState> {
        let w = self.right_vectors.nrows();
        if input.len() != w {
            return Err(Error::Dimension {
                expected: w,
                found: input.len(),
            });
        }
        let n = self.labels();
        let layout = Layout::new(&[("sys", qubits_for(w)), ("sigma", self.t_bits as usize)])?;
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        for (j, &s) in self.singular_values.iter().enumerate() {
            let v = self.right_vectors.column(j);
            let beta: C64 = v.iter().zip(input.iter()).map(|(a, z)| z * *a).sum();
            if beta.norm_sqr() == 0.0 {
                continue;
            }
            let p = self.label_distribution(s);
            for (y, &py) in p.iter().enumerate() {
                if py == 0.0 {
                    continue;
                }
                let c = beta * py.sqrt();
                for k in 0..w {
                    amps[k * n + y] += c * v[k];
                }
            }
        }
        SimState::from_amplitudes(layout, amps)
    }
}

#[derive(Debug, Clone)]
pub struct QsveOutput {
    /// Spectral tier: registers (sys, sigma). Circuit tier: registers
    /// (sigma, walk) with walk = (row, col) of the stored matrix.
    pub state: SimState,
    pub label_marginal: Vec<f64>,
    /// σ̄ for each label.
    pub values: Vec<f64>,
    pub t_bits: u32,
    pub queries: u64,
}

/// Walk operator W = (2PP† - I)(2QQ† - I) with P|i> = |i, D_i/‖D_i‖> and
/// Q|j> = |Ã, j>, |Ã> the row-norm state.
pub fn qsve_walk(store: &TreeStore) -> Result<(Op, DMatrix<C64>)> {
    let (m, w) = (store.row_width(), store.leaf_width());
    let norms = store.norm_state()?;
    let mut p = DMatrix::<C64>::zeros(m * w, m);
    for i in 0..store.rows() {
        // zero rows carry no norm amplitude and need no column
        if store.row_norm_sq(i) == 0.0 {
            continue;
        }
        let row = store.row_state(i)?;
        for (j, a) in row.iter().enumerate() {
            p[(i * w + j, i)] = C64::new(*a, 0.0);
        }
    }
    let mut q = DMatrix::<C64>::zeros(m * w, w);
    for (i, a) in norms.iter().enumerate() {
        for j in 0..w {
            q[(i * w + j, j)] = C64::new(*a, 0.0);
        }
    }
    let id = DMatrix::<C64>::identity(m * w, m * w);
    let two = C64::new(2.0, 0.0);
    let rp = &p * p.adjoint() * two - &id;
    let rq = &q * q.adjoint() * two - &id;
    Ok((Op::Dense(rp * rq), q))
}

/// Singular value estimation of the stored matrix on `input` (over the
/// padded column register) with precision δ‖D‖_F.
pub fn qsve(store: &TreeStore, input: &DVector<C64>, delta: f64, tier: Tier) -> Result<QsveOutput> {
    let model = QsveModel::new(store, delta, 1)?;
    let n = model.labels();
    let values: Vec<f64> = (0..n).map(|y| model.label_value(y)).collect();
    let cost = model.cost();
    store.meter(Mapping::RowState, cost);
    store.meter(Mapping::NormState, cost);
    let (state, label_marginal) = match tier {
        Tier::Spectral => {
            let st = model.apply(input)?;
            let marg = st.marginal("sigma")?;
            (st, marg)
        }
        Tier::Circuit => {
            if model.frobenius == 0.0 {
                let st = model.apply(input)?;
                let marg = st.marginal("sigma")?;
                (st, marg)
            } else {
                let (walk, q) = qsve_walk(store)?;
                let start = &q * input;
                let st = phase_estimation_circuit(&walk, &start, model.t_bits)?;
                let marg = st.marginal("est")?;
                (st, marg)
            }
        }
    };
    Ok(QsveOutput {
        state,
        label_marginal,
        values,
        t_bits: model.t_bits,
        queries: cost,
    })
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

    fn basis(w: usize, k: usize) -> DVector<C64> {
        let mut v = DVector::zeros(w);
        v[k] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn diagonal_singular_value() {
        let s = store(&[vec![0.6, 0.0], vec![0.0, 0.8]]);
        let delta = 0.05;
        for tier in [Tier::Spectral, Tier::Circuit] {
            let out = qsve(&s, &basis(2, 0), delta, tier).unwrap();
            let within: f64 = out
                .label_marginal
                .iter()
                .zip(&out.values)
                .filter(|(_, v)| (*v - 0.6).abs() <= delta)
                .map(|(p, _)| p)
                .sum();
            assert!(within >= 8.0 / (PI * PI), "{tier} {within}");
            let mode = out
                .label_marginal
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!((out.values[mode] - 0.6).abs() <= delta);
        }
    }

    #[test]
    fn zero_matrix_gives_zero_labels() {
        let s = store(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let out = qsve(&s, &basis(2, 1), 0.1, Tier::Spectral).unwrap();
        for (p, v) in out.label_marginal.iter().zip(&out.values) {
            if *p > 0.0 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn entangled_input_gives_uniform_values() {
        // on-grid values cos(π/8), sin(π/8) with t = 3
        let (a, b) = ((PI / 8.0).cos(), (PI / 8.0).sin());
        let s = store(&[vec![a, 0.0], vec![0.0, b]]);
        let model = QsveModel::new(&s, 0.5, 1).unwrap();
        assert_eq!(model.t_bits, 3);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // (|0,0> + |1,1>)/√2 with QSVE on the first register
        let mut mass_a = 0.0;
        let mut mass_b = 0.0;
        for k in 0..2 {
            let st = model.apply(&(basis(2, k) * C64::new(h, 0.0) * C64::new(2f64.sqrt(), 0.0))).unwrap();
            for (y, p) in st.marginal("sigma").unwrap().iter().enumerate() {
                let v = model.label_value(y);
                if (v - a).abs() < 1e-12 {
                    mass_a += p / 2.0;
                } else if (v - b).abs() < 1e-12 {
                    mass_b += p / 2.0;
                } else {
                    assert!(*p < 1e-12);
                }
            }
        }
        assert!((mass_a - 0.5).abs() < 1e-12 && (mass_b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tiers_agree_on_label_distribution() {
        let mut rng = rng_for(9, 0);
        for dim in [2usize, 4] {
            let rows: Vec<Vec<f64>> = (0..dim)
                .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let s = store(&rows);
            let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let input = DVector::from_iterator(dim, raw.iter().map(|v| C64::new(v / n, 0.0)));
            let a = qsve(&s, &input, 0.1, Tier::Spectral).unwrap();
            let b = qsve(&s, &input, 0.1, Tier::Circuit).unwrap();
            let bc: f64 = a
                .label_marginal
                .iter()
                .zip(&b.label_marginal)
                .map(|(p, q)| (p * q).sqrt())
                .sum();
            assert!(bc >= 1.0 - 1e-6, "dim {dim}: {bc}");
        }
    }

    #[test]
    fn rejects_nonpositive_delta() {
        let s = store(&[vec![1.0]]);
        assert!(matches!(
            qsve(&s, &basis(1, 0), 0.0, Tier::Spectral),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn boosting_concentrates_labels() {
        let s = store(&[vec![0.6, 0.0], vec![0.0, 0.8]]);
        let plain = QsveModel::new(&s, 0.05, 1).unwrap();
        let boosted = QsveModel::new(&s, 0.05, 7).unwrap();
        let inside = |m: &QsveModel| -> f64 {
            m.label_distribution(0.6)
                .iter()
                .enumerate()
                .filter(|(y, _)| (m.label_value(*y) - 0.6).abs() <= 0.05)
                .map(|(_, p)| p)
                .sum()
        };
        assert!(inside(&boosted) > inside(&plain));
    }

    #[test]
    fn post_selection_recovers_singular_vector() {
        let (a, b) = ((PI / 8.0).cos(), (PI / 8.0).sin());
        let s = store(&[vec![0.0, b], vec![a, 0.0]]);
        let model = QsveModel::new(&s, 0.5, 1).unwrap();
        let mass = model.entangled_label_mass();
        assert!((mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let y = (0..model.labels())
            .find(|&y| (model.label_value(y) - b).abs() < 1e-12 && mass[y] > 0.0)
            .unwrap();
        let rho = model.post_selected_density(model.cell(y)).unwrap();
        assert!((rho[(1, 1)] - 1.0).abs() < 1e-12);
        let st = model.post_selected_state(y).unwrap();
        assert!((st.amplitudes()[3].re.abs() - 1.0).abs() < 1e-12);
    }
}
