use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::ridge_regress;
use crate::data::{DataMatrix, TreeStore};
use crate::error::{Error, Result};
use crate::linalg::{next_pow2, orient_largest, sym_eigen_sorted, C64};
use crate::pipeline::{ErrorEntry, QnpeConfig, ResolvedTolerances, StageLedger};
use crate::sim::{rng_for, stream_id};
use crate::subroutines::{
    find_minimum, ridge_regress_quantum, tomography, LabelMass, MinimumOutput, QsveModel,
    RidgeOutput, RidgeParams,
};

/// Eigenvalues of the post-selected density above this fraction of the
/// largest count as tied directions of one σ̄ cell.
const TIE_FRACTION: f64 = 1e-3;

/// One embedding direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Direction {
    /// Index into the stage's σ̄ list.
    pub sigma_index: usize,
    /// Right singular vector of D used as the ridge input.
    pub input: Vec<f64>,
    /// Eigenvalue share of `input` in the post-selected density.
    pub weight: f64,
    pub ridge: RidgeOutput,
    /// Exact ridge solution for `input`, unit norm.
    pub exact: Vec<f64>,
    /// Classical readout of the ridge output, unit norm, largest component
    /// positive.
    pub readout: Vec<f64>,
    pub readout_samples: u64,
    pub readout_queries: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaFind {
    pub value: f64,
    pub cell: usize,
    /// tr ρ² of the one-copy state after observing the cell.
    pub purity: f64,
    pub minimum: MinimumOutput,
}

#[derive(Debug, Clone)]
pub struct TransformStage {
    /// Distinct σ̄, ascending.
    pub sigma_list: Vec<f64>,
    pub finds: Vec<SigmaFind>,
    pub directions: Vec<Direction>,
    pub qsve_bits: u32,
    pub ledger: StageLedger,
    pub readout: StageLedger,
    pub errors: Vec<ErrorEntry>,
}

impl TransformStage {
    /// Readouts as an n×d matrix.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let n = self.directions.first().map_or(0, |d| d.readout.len());
        DMatrix::from_fn(n, self.directions.len(), |r, c| self.directions[c].readout[r])
    }
}

/// σ̄_1..σ̄_d and the readouts of |a_1>..|a_d>.
pub fn transformation_quantum(
    store_d: &TreeStore,
    store_x: &TreeStore,
    config: &QnpeConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let x = DataMatrix::new(store_x.to_dense())?;
    let tol = config.resolve(&x)?;
    let st = transform_stage(store_d, store_x, &x, config, &tol)?;
    Ok((
        st.sigma_list,
        st.directions.into_iter().map(|d| d.readout).collect(),
    ))
}

pub fn transform_stage(
    store_d: &TreeStore,
    store_x: &TreeStore,
    x: &DataMatrix,
    config: &QnpeConfig,
    tol: &ResolvedTolerances,
) -> Result<TransformStage> {
    let frob = store_d.frobenius_norm();
    if !(frob > 0.0) {
        return Err(Error::Parameter("the residual matrix is zero".into()).at_step(8));
    }
    let delta = match config.bits("qsve") {
        Some(t) => 4.0 * (-(t as f64)).exp2(),
        None => tol.sigma_eps / frob,
    };
    let model = QsveModel::new(store_d, delta, config.qsve_boost).map_err(|e| e.at_step(8))?;
    let labels = LabelMass::from_qsve(&model);
    let items = model.right_vectors.nrows();
    let mut rng = rng_for(config.seed, stream_id(3, 0));

    // minimum finding, one distinct σ̄ at a time, until d directions
    let mut found: Vec<f64> = Vec::new();
    let mut finds = Vec::new();
    let mut inputs: Vec<(usize, DVector<f64>, f64)> = Vec::new();
    let mut searches = 0u64;
    while inputs.len() < config.d {
        let min = match find_minimum(
            &labels,
            tol.zero_threshold,
            &found,
            2.0 * tol.sigma_eps,
            items,
            config.min_repetitions,
            &mut rng,
        ) {
            Ok(m) => m,
            Err(Error::Exhausted) => {
                return Err(Error::Parameter(format!(
                    "only {} of d = {} directions lie above the zero threshold {:.3e}",
                    inputs.len(),
                    config.d,
                    tol.zero_threshold
                ))
                .at_step(9))
            }
            Err(e) => return Err(e.at_step(9)),
        };
        searches += min.iterations;
        let rho = model.post_selected_density(min.cell).map_err(|e| e.at_step(9))?;
        let purity = (&rho * &rho).trace();
        let (vals, vecs) = sym_eigen_sorted(&rho);
        let top = vals.last().copied().unwrap_or(0.0);
        let sigma_index = found.len();
        for k in (0..vals.len()).rev() {
            if vals[k] < TIE_FRACTION * top || inputs.len() == config.d {
                break;
            }
            inputs.push((sigma_index, vecs.column(k).into_owned(), vals[k]));
        }
        found.push(min.value);
        finds.push(SigmaFind {
            value: min.value,
            cell: min.cell,
            purity,
            minimum: min,
        });
    }

    let alpha = tol.alpha;
    let n = x.cols();
    let directions: Vec<Direction> = inputs
        .into_par_iter()
        .enumerate()
        .map(|(j, (sigma_index, v, weight))| {
            let params = RidgeParams {
                alpha,
                eps: tol.eps,
                t_bits: config.bits("ridge"),
                c1: None,
                eps2: tol.eps,
                tier: config.tier,
            };
            let ridge = ridge_regress_quantum(store_x, &v, &params).map_err(|e| e.at_step(10))?;
            let mut exact = ridge_regress(x, &v.rows(0, x.rows().min(v.len())).into_owned(), alpha)?;
            let en = exact.norm();
            if en > 0.0 {
                exact /= en;
            }
            orient_largest(&mut exact);

            let mut state = DVector::from_element(next_pow2(ridge.direction.len()), C64::new(0.0, 0.0));
            for (slot, &a) in state.iter_mut().zip(&ridge.direction) {
                *slot = C64::new(a, 0.0);
            }
            let mut rng = rng_for(config.seed, stream_id(4, j as u64));
            let tomo = tomography(&state, config.readout_delta, ridge.queries, config.tier, &mut rng)
                .map_err(|e| e.at_step(10))?;
            let mut a = DVector::from_iterator(n, tomo.vector.iter().copied().take(n));
            let an = a.norm();
            if an == 0.0 {
                return Err(Error::Precision(format!("readout of direction {j} is zero")).at_step(10));
            }
            a /= an;
            orient_largest(&mut a);
            Ok(Direction {
                sigma_index,
                input: v.iter().copied().collect(),
                weight,
                ridge,
                exact: exact.iter().copied().collect(),
                readout: a.iter().copied().collect(),
                readout_samples: tomo.samples,
                readout_queries: tomo.queries,
            })
        })
        .collect::<Result<_>>()?;

    let mut ledger = StageLedger::new("transformation", &[8, 9, 10]);
    // every search step prepares the estimation state twice
    ledger.add("qsve", model.cost() * (finds.len() as u64 + 2 * searches));
    ledger.add("minimum_finding", searches);
    ledger.add("ridge", directions.iter().map(|d| d.ridge.queries).sum());
    let mut readout = StageLedger::new("readout", &[10]);
    readout.add("tomography", directions.iter().map(|d| d.readout_queries).sum());

    let mut errors = Vec::new();
    let exact_sigma = &model.singular_values;
    for (k, f) in finds.iter().enumerate() {
        let nearest = exact_sigma
            .iter()
            .map(|s| (s - f.value).abs())
            .fold(f64::INFINITY, f64::min);
        errors.push(ErrorEntry::new(
            "transformation",
            format!("sigma {k} distance to nearest singular value"),
            nearest,
            delta * frob,
        ));
    }
    for (j, d) in directions.iter().enumerate() {
        let cos: f64 = d.readout.iter().zip(&d.exact).map(|(a, b)| a * b).sum();
        errors.push(ErrorEntry::new(
            "transformation",
            format!("a_{j} angle to exact ridge solution (rad)"),
            cos.abs().min(1.0).acos(),
            2.0 * (tol.eps + config.readout_delta),
        ));
    }
    Ok(TransformStage {
        sigma_list: found,
        finds,
        directions,
        qsve_bits: model.t_bits,
        ledger,
        readout,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{assemble_weight_matrix, radius_neighbors, spectral_problem};
    use crate::data::StoreKind;
    use crate::linalg::max_principal_angle;
    use crate::sim::rng_for;
    use rand_distr::{Distribution, StandardNormal};

    fn residual_store(d: &DMatrix<f64>) -> TreeStore {
        TreeStore::build(d, StoreKind::D).unwrap()
    }

    #[test]
    fn identity_design_returns_the_singular_vectors() {
        // D with σ = 0.5 on e_0, 1 on e_1, 2 on e_2, 0 on e_3
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 2.0, 0.0]));
        let sd = residual_store(&d);
        let x = DataMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let sx = TreeStore::build(x.entries(), StoreKind::X).unwrap();
        for alpha in [0.0, 1.0] {
            let mut c = QnpeConfig::new(1.0, 2);
            c.alpha = Some(alpha);
            c.eps0 = Some(1.0);
            let tol = c.resolve(&x).unwrap();
            let st = transform_stage(&sd, &sx, &x, &c, &tol).unwrap();
            assert_eq!(st.sigma_list.len(), 2);
            assert!((st.sigma_list[0] - 0.5).abs() <= tol.sigma_eps);
            assert!((st.sigma_list[1] - 1.0).abs() <= tol.sigma_eps);
            for (j, dir) in st.directions.iter().enumerate() {
                assert!((dir.readout[j].abs() - 1.0).abs() < 0.01, "{:?}", dir.readout);
            }
        }
    }

    #[test]
    fn random_instance_matches_classical_ridge() {
        let mut rng = rng_for(17, 0);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..8).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let q = radius_neighbors(&x, 4.0).unwrap();
        let w = assemble_weight_matrix(&x, &q).unwrap().weights;
        let sd = TreeStore::build_residual(&w).unwrap();
        let sx = TreeStore::build(x.entries(), StoreKind::X).unwrap();
        let c = QnpeConfig::new(4.0, 2);
        let tol = c.resolve(&x).unwrap();
        let st = transform_stage(&sd, &sx, &x, &c, &tol).unwrap();
        let sp = spectral_problem(&w, 2).unwrap();
        for (j, dir) in st.directions.iter().enumerate() {
            let z = sp.vectors.column(j).into_owned();
            let mut a = ridge_regress(&x, &z, tol.alpha).unwrap();
            a /= a.norm();
            let cos: f64 = a.iter().zip(&dir.readout).map(|(p, q)| p * q).sum();
            assert!(cos.abs() >= 0.98, "direction {j}: |cos| = {}", cos.abs());
        }
        let angle = max_principal_angle(&st.a_matrix(), &{
            let mut a = DMatrix::zeros(8, 2);
            for j in 0..2 {
                let z = sp.vectors.column(j).into_owned();
                a.set_column(j, &ridge_regress(&x, &z, tol.alpha).unwrap());
            }
            a
        });
        assert!(angle.to_degrees() < 5.0);
        assert!(st.ledger.total > 0 && st.readout.total > 0);
    }

    #[test]
    fn asking_past_the_spectrum_is_a_parameter_error() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0]));
        let sd = residual_store(&d);
        let x = DataMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let sx = TreeStore::build(x.entries(), StoreKind::X).unwrap();
        let mut c = QnpeConfig::new(1.0, 2);
        c.eps0 = Some(1.0);
        let tol = c.resolve(&x).unwrap();
        let err = transform_stage(&sd, &sx, &x, &c, &tol).unwrap_err();
        assert_eq!(err.kind(), "parameter");
    }
}
