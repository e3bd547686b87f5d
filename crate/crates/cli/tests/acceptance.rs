//! End-to-end acceptance: each criterion prints one PASS/FAIL line with its
//! measured values and runtime, then the test fails if any criterion did.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use common::{ok, s};
use qnpe_core::classical::{
    assemble_weight_matrix, radius_neighbors, run_classical_npe, ClassicalParams, NeighborRule,
};
use qnpe_core::data::{DataMatrix, StoreKind, TreeStore};
use qnpe_core::harness::{
    default_scaling_dataset, run_scaling, sha256_file, Axis, ClassicalReport, DatasetKind,
    DatasetSpec, RunManifest, MANIFEST_FILE,
};
use qnpe_core::linalg::{to_complex, C64};
use qnpe_core::nalgebra::{DMatrix, DVector, SymmetricEigen};
use qnpe_core::pipeline::{neighbor_stage, run_quantum_npe, weight_matrix_quantum, QnpeConfig};
use qnpe_core::sim::{rng_for, Op};
use qnpe_core::subroutines::{
    amplitude_estimation, block_encoding_from_purification, fixed_point_search, invert_hermitian,
    operator_norm, qae_error_bound, FixedPointSchedule, InversionParams, KernelPolicy, Tier,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const RUNS: u64 = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u8, name: &str, budget_secs: f64, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let secs = start.elapsed().as_secs_f64();
    let in_time = secs < budget_secs;
    let pass = out.pass && in_time;
    // written past the test harness capture so the lines show in every run
    let _ = writeln!(
        std::io::stdout(),
        "criterion {id} {name}: {} ({}; {secs:.1} s of {budget_secs:.0} s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail
    );
    pass
}

fn clusters(m: usize, n: usize, noise: f64, seed: u64) -> DataMatrix {
    DatasetSpec {
        noise,
        seed,
        ..DatasetSpec::new(DatasetKind::Clusters, m, n)
    }
    .generate()
    .unwrap()
}

fn classical_oracle() -> Outcome {
    let x = DatasetSpec::new(DatasetKind::Plane, 16, 5).generate().unwrap();
    let params = ClassicalParams {
        neighbors: NeighborRule::Knn(4),
        d: 2,
        alpha: None,
    };
    let run = run_classical_npe(&x, &params).unwrap();
    let r = ClassicalReport::from_run(&run, &x.fingerprint());
    // residual recomputed straight from the data
    let w = run.weights();
    let e = x.entries();
    let resid = (e - w * e).norm_squared();
    let pass = resid <= 1e-8
        && r.reconstruction_residual <= 1e-8
        && r.row_sum_deviation <= 1e-9
        && r.kernel_residual <= 1e-9;
    Outcome {
        pass,
        detail: format!(
            "residual {resid:.1e}, row sums off by {:.1e}, |M1|/|M|_F {:.1e}",
            r.row_sum_deviation, r.kernel_residual
        ),
    }
}

fn neighbor_margin(x: &DataMatrix, r: f64) -> (f64, f64) {
    let mut inside: f64 = 0.0;
    let mut outside = f64::INFINITY;
    for i in 0..x.rows() {
        for j in 0..x.rows() {
            if i != j {
                let d = x.dist2(i, j).sqrt();
                if d <= r {
                    inside = inside.max(d);
                } else {
                    outside = outside.min(d);
                }
            }
        }
    }
    (inside / r, outside / r)
}

fn quantum_neighbors() -> Outcome {
    let x = clusters(8, 4, 0.0, 0);
    let r = 1.0;
    let (inside, outside) = neighbor_margin(&x, r);
    let truth = radius_neighbors(&x, r).unwrap();
    let k = truth.total() as f64;
    let store = TreeStore::build(x.entries(), StoreKind::X).unwrap();
    let (mut sets_ok, mut k_ok) = (0, 0);
    for seed in 0..RUNS {
        let mut c = QnpeConfig::new(r, 2);
        c.seed = seed;
        let tol = c.resolve(&x).unwrap();
        if let Ok(st) = neighbor_stage(&store, r, tol.eps1, tol.delta, &c) {
            sets_ok += usize::from(st.neighbors == truth);
            k_ok += usize::from((st.k_estimate - k).abs() <= k / 2.0);
        }
    }
    Outcome {
        pass: inside <= 0.8 && outside >= 1.2 && sets_ok >= 90 && k_ok >= 95,
        detail: format!(
            "distances within {inside:.2}r / beyond {outside:.2}r; Q_i exact in {sets_ok}/{RUNS}, K within K/2 in {k_ok}/{RUNS}"
        ),
    }
}

fn quantum_weights() -> Outcome {
    let x = clusters(8, 4, 0.03, 1);
    let q = radius_neighbors(&x, 1.0).unwrap();
    let classical = assemble_weight_matrix(&x, &q).unwrap().weights;
    let store_x = TreeStore::build(x.entries(), StoreKind::X).unwrap();
    let store_b = TreeStore::build(&q.indicator(), StoreKind::B).unwrap();
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..RUNS {
        let mut c = QnpeConfig::new(1.0, 2);
        c.seed = seed;
        c.tomography_delta = 0.03;
        let Ok(w) = weight_matrix_quantum(&store_x, &store_b, &c) else {
            continue;
        };
        let diff = w.entries() - classical.entries();
        let row_max = (0..diff.nrows())
            .map(|i| diff.row(i).norm())
            .fold(0.0, f64::max);
        worst = worst.max(row_max);
        good += usize::from(row_max <= 0.05);
    }
    Outcome {
        pass: good >= 90,
        detail: format!("max_i |W'_i - W_i| <= 0.05 in {good}/{RUNS}, worst {worst:.4}"),
    }
}

fn quantum_embedding() -> Outcome {
    let x = clusters(8, 8, 0.03, 1);
    let mut good = 0;
    let mut worst_angle: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    let mut failures = 0;
    for seed in 0..RUNS {
        let mut c = QnpeConfig::new(1.0, 2);
        c.seed = seed;
        c.compare = true;
        let Ok(r) = run_quantum_npe(&x, &c) else {
            failures += 1;
            continue;
        };
        let classical = run_classical_npe(
            &x,
            &ClassicalParams {
                neighbors: NeighborRule::Radius(1.0),
                d: 2,
                alpha: Some(r.tolerances.alpha),
            },
        )
        .unwrap();
        let want = classical.spectral.selected_sigma();
        let got: Vec<f64> = r.sigma_index.iter().map(|&k| r.sigma_list[k]).collect();
        // the QSVE grid step is δ‖D‖_F = sigma_eps
        let within = r.tolerances.sigma_eps;
        let sigma_dev = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let sigma_ok = got.len() == 2
            && got[0] <= got[1]
            && got.iter().all(|&v| v > r.tolerances.zero_threshold)
            && sigma_dev <= within;
        let angle = r.comparison.as_ref().unwrap().max_angle_deg;
        worst_angle = worst_angle.max(angle);
        worst_sigma = worst_sigma.max(sigma_dev);
        good += usize::from(sigma_ok && angle <= 5.0);
    }
    Outcome {
        pass: good >= 90,
        detail: format!(
            "angles <= 5 deg with valid sigma in {good}/{RUNS} ({failures} errors), worst angle {worst_angle:.2} deg, worst sigma offset {worst_sigma:.4}"
        ),
    }
}

fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn subroutine_bounds() -> Outcome {
    let mut rng = rng_for(2024, 0);

    // amplitude estimation against the analytic error bound
    let trials = 200;
    let t = 6;
    let mut qae_ok = 0;
    for _ in 0..trials {
        let a: f64 = rng.random_range(0.02..0.98);
        let prep = Op::state_prep_real(&[(1.0 - a).sqrt(), a.sqrt(), 0.0, 0.0]).unwrap();
        let est = amplitude_estimation(&prep, &[false, true, false, false], t, Tier::Circuit, &mut rng)
            .unwrap();
        qae_ok += usize::from((est.point_estimate - a).abs() <= qae_error_bound(a, t));
    }
    let qae_rate = qae_ok as f64 / trials as f64;

    // fixed-point search over 20 overlaps above the guaranteed one
    let delta_prime = 0.1;
    let sched = FixedPointSchedule::for_overlap(0.2, delta_prime).unwrap();
    let floor = sched.guaranteed_overlap();
    let mut fp_worst: f64 = 0.0;
    for k in 0..20 {
        let sp = floor + (0.99 - floor) * k as f64 / 19.0;
        let prep = Op::state_prep_real(&[(1.0 - sp * sp).sqrt(), 0.0, sp, 0.0]).unwrap();
        let out = fixed_point_search(&prep, &[false, false, true, false], &sched, Tier::Circuit).unwrap();
        fp_worst = fp_worst.max(1.0 - out.fidelity);
    }
    let fp_ok = fp_worst <= delta_prime * delta_prime + 1e-12;

    // block-encoding of reduced states, compared against Ψᵀ Ψ̄ built here
    let mut be_worst: f64 = 0.0;
    for trial in 0..20 {
        let (anc, sys) = (1 + trial % 2, 1 + (trial / 2) % 2);
        let (na, ns) = (1usize << anc, 1usize << sys);
        let g = random_unit(na * ns, &mut rng);
        let prep = Op::state_prep_real(&g).unwrap();
        let be = block_encoding_from_purification(&prep, anc, sys).unwrap();
        let psi = DMatrix::from_fn(na, ns, |a, s| g[a * ns + s]);
        let rho = to_complex(&(psi.transpose() * &psi));
        be_worst = be_worst.max(operator_norm(&(be.block().unwrap() - rho)));
    }
    let be_ok = be_worst <= 1e-8;

    // inversion against a pseudo-inverse computed from SymmetricEigen
    let eps = 0.01;
    let kappa = 10.0;
    let mut inv_worst: f64 = 1.0;
    for trial in 0..50 {
        let d = rng.random_range(2..=8);
        let rank = if trial % 3 == 0 { d - 1 } else { d }.max(1);
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let mut a = DMatrix::<f64>::zeros(d, d);
        for k in 0..rank {
            let lam = match k {
                0 => 1.0,
                1 => 1.0 / kappa,
                _ => rng.random_range(1.0 / kappa..=1.0),
            };
            a += q.column(k) * q.column(k).transpose() * lam;
        }
        let b = DVector::from_vec(random_unit(d, &mut rng));
        let eig = SymmetricEigen::new(a.clone());
        let mut want = DVector::<f64>::zeros(d);
        for (j, &l) in eig.eigenvalues.iter().enumerate() {
            if l > 1e-9 {
                let v = eig.eigenvectors.column(j);
                want += v * (v.dot(&b) / l);
            }
        }
        want /= want.norm();
        let bc = b.map(|v| C64::new(v, 0.0));
        let params = InversionParams::new(kappa, eps).with_kernel(KernelPolicy::Project);
        let out = invert_hermitian(&to_complex(&a), &bc, &params, 0).unwrap();
        let overlap: C64 = out
            .state
            .iter()
            .zip(want.iter())
            .map(|(z, &w)| z.conj() * w)
            .sum();
        inv_worst = inv_worst.min(overlap.norm_sqr());
    }
    let inv_ok = inv_worst >= 1.0 - eps;

    Outcome {
        pass: qae_rate >= 0.81 && fp_ok && be_ok && inv_ok,
        detail: format!(
            "QAE within bound {:.1}% of {trials}; fixed-point worst infidelity {fp_worst:.2e} (<= {:.0e}); block slack {be_worst:.1e}; inversion worst fidelity {inv_worst:.5}",
            100.0 * qae_rate,
            delta_prime * delta_prime
        ),
    }
}

fn scaling() -> Outcome {
    let config = QnpeConfig::default();
    let m_rec = run_scaling(Axis::M, &[8, 16, 32, 64], &default_scaling_dataset(), &config).unwrap();
    let n_data = DatasetSpec {
        m: 16,
        ..default_scaling_dataset()
    };
    let n_rec = run_scaling(Axis::N, &[4, 8, 16, 32], &n_data, &config).unwrap();
    let e = &m_rec.fitted_exponent;
    let growth = n_rec.max_growth("weights") - 1.0;
    let pass = (e["neighbors"] - 1.5).abs() <= 0.3
        && (e["weights"] - 1.0).abs() <= 0.3
        && (e["transformation"] - 1.0).abs() <= 0.3
        && growth < 0.25;
    Outcome {
        pass,
        detail: format!(
            "m-exponents {:.2} / {:.2} / {:.2} (ref 1.5 / 1 / 1); stage-2 growth per n-doubling {:+.1}%",
            e["neighbors"],
            e["weights"],
            e["transformation"],
            100.0 * growth
        ),
    }
}

fn output_hashes(dir: &Path) -> BTreeMap<String, String> {
    let m = RunManifest::read(&dir.join(MANIFEST_FILE)).unwrap();
    m.outputs
        .iter()
        .map(|o| (o.path.clone(), sha256_file(&dir.join(&o.path)).unwrap().1))
        .collect()
}

fn determinism() -> Outcome {
    let t = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for rep in 0..2 {
        let base = t.path().join(format!("rep{rep}"));
        let [g, c, q, cmp, sc] = ["gen", "classical", "quantum", "compare", "scaling"].map(|d| base.join(d));
        ok(&["gen", "--dataset", "clusters", "--m", "8", "--n", "8", "--noise", "0.03", "--seed", "4", "--out-dir", s(&g)]);
        let data = g.join("clusters.csv");
        ok(&["run", "--mode", "classical", "--dataset", s(&data), "--r", "1", "--out-dir", s(&c)]);
        ok(&["run", "--mode", "quantum", "--dataset", s(&data), "--seed", "9", "--compare", "--dump-states", "--out-dir", s(&q)]);
        ok(&["compare", s(&c.join("classical.json")), s(&q.join("quantum.json")), "--out-dir", s(&cmp)]);
        ok(&["scaling", "--axis", "d", "--sizes", "1,2,3,4", "--m", "16", "--out-dir", s(&sc)]);
        runs.push([&g, &c, &q, &cmp, &sc].map(|d| output_hashes(d)));
    }
    let files: usize = runs[0].iter().map(BTreeMap::len).sum();
    let same = runs[0] == runs[1];
    Outcome {
        pass: same && files > 0,
        detail: format!("{files} output files over 5 commands, hashes {}", if same { "identical" } else { "differ" }),
    }
}

#[test]
fn acceptance() {
    let results = [
        check(1, "classical oracle validity", 1.0, classical_oracle),
        check(2, "quantum neighbor finding", 120.0, quantum_neighbors),
        check(3, "quantum weight matrix", 300.0, quantum_weights),
        check(4, "quantum embedding", 300.0, quantum_embedding),
        check(5, "subroutine bounds", 180.0, subroutine_bounds),
        check(6, "scaling", 900.0, scaling),
        check(7, "determinism", 60.0, determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    let _ = writeln!(std::io::stdout(), "acceptance: {passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len());
}
