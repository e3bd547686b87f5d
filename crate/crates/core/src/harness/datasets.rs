use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::sim::{rng_for, SimRng};

/// Edge length of the regular simplices in the clusters dataset.
pub const CLUSTER_EDGE: f64 = 0.79;
/// Distance of each cluster center from the origin.
pub const CLUSTER_RADIUS: f64 = 3.0;
/// Default points per cluster.
pub const CLUSTER_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    SwissRoll,
    Plane,
    Clusters,
    SCurve,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 4] = [
        DatasetKind::SwissRoll,
        DatasetKind::Plane,
        DatasetKind::Clusters,
        DatasetKind::SCurve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::SwissRoll => "swiss-roll",
            DatasetKind::Plane => "plane",
            DatasetKind::Clusters => "clusters",
            DatasetKind::SCurve => "s-curve",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown dataset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub m: usize,
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
    /// Points per cluster, clusters dataset only.
    #[serde(default = "default_cluster_size")]
    pub cluster_size: usize,
}

fn default_cluster_size() -> usize {
    CLUSTER_SIZE
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, m: usize, n: usize) -> Self {
        Self {
            kind,
            m,
            n,
            noise: 0.0,
            seed: 0,
            cluster_size: CLUSTER_SIZE,
        }
    }

    pub fn generate(&self) -> Result<DataMatrix> {
        generate(self)
    }
}

fn gaussian(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Deterministic synthetic dataset with `noise`·N(0, 1) added to every entry.
pub fn generate(spec: &DatasetSpec) -> Result<DataMatrix> {
    let DatasetSpec { kind, m, n, noise, seed, cluster_size } = *spec;
    if m < 2 {
        return Err(Error::Parameter(format!("need at least 2 points, got m = {m}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Parameter(format!("noise must be >= 0, got {noise}")));
    }
    let min_n = match kind {
        DatasetKind::Plane => 2,
        DatasetKind::SwissRoll | DatasetKind::SCurve => 3,
        DatasetKind::Clusters => cluster_size.max(2),
    };
    if n < min_n {
        return Err(Error::Parameter(format!("{kind} needs n >= {min_n}, got {n}")));
    }
    let mut rng = rng_for(seed, 0);
    let mut x = match kind {
        DatasetKind::SwissRoll | DatasetKind::SCurve => DMatrix::zeros(m, n),
        DatasetKind::Plane => plane(m, n, &mut rng),
        DatasetKind::Clusters => clusters(m, n, cluster_size)?,
    };
    match kind {
        DatasetKind::SwissRoll => {
            for i in 0..m {
                let t = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
                let h = 21.0 * rng.random::<f64>();
                x[(i, 0)] = t * t.cos() / 10.0;
                x[(i, 1)] = h / 10.0;
                x[(i, 2)] = t * t.sin() / 10.0;
            }
        }
        DatasetKind::SCurve => {
            for i in 0..m {
                let t = 3.0 * PI * (rng.random::<f64>() - 0.5);
                x[(i, 0)] = t.sin();
                x[(i, 1)] = 2.0 * rng.random::<f64>();
                x[(i, 2)] = t.signum() * (t.cos() - 1.0);
            }
        }
        _ => {}
    }
    if noise > 0.0 {
        for v in x.iter_mut() {
            *v += noise * gaussian(&mut rng);
        }
    }
    DataMatrix::new(x)
}

/// Uniform points of [-1, 1]² on a random 2-plane through a random offset.
fn plane(m: usize, n: usize, rng: &mut SimRng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, 2, |_, _| gaussian(rng));
    let basis = g.qr().q();
    let offset: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
    let mut x = DMatrix::zeros(m, n);
    for i in 0..m {
        let u = [2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0];
        for c in 0..n {
            x[(i, c)] = offset[c] + basis[(c, 0)] * u[0] + basis[(c, 1)] * u[1];
        }
    }
    x
}

/// Center of cluster `l`: ±e_a first, then (±e_a ± e_b)/√2, all at distance
/// [`CLUSTER_RADIUS`] from the origin and at least 2.29 apart.
fn cluster_center(l: usize, n: usize) -> Option<(Vec<f64>, usize)> {
    let mut c = vec![0.0; n];
    if l < 2 * n {
        let a = l / 2;
        c[a] = if l % 2 == 0 { CLUSTER_RADIUS } else { -CLUSTER_RADIUS };
        return Some((c, a));
    }
    let mut idx = l - 2 * n;
    for a in 0..n {
        for b in a + 1..n {
            if idx < 4 {
                let s = CLUSTER_RADIUS / 2f64.sqrt();
                c[a] = if idx & 1 == 0 { s } else { -s };
                c[b] = if idx & 2 == 0 { s } else { -s };
                return Some((c, b));
            }
            idx -= 4;
        }
    }
    None
}

/// Regular simplices of `size` points (edge [`CLUSTER_EDGE`]) around
/// well-separated centers, so at r = 1 every point has exactly the other
/// members of its cluster as neighbors.
fn clusters(m: usize, n: usize, size: usize) -> Result<DMatrix<f64>> {
    if size < 2 || m % size != 0 {
        return Err(Error::Parameter(format!(
            "clusters needs cluster size >= 2 dividing m, got size {size}, m = {m}"
        )));
    }
    // c·(e_p − centroid) has pairwise distance c√2
    let c = CLUSTER_EDGE / 2f64.sqrt();
    let mut x = DMatrix::zeros(m, n);
    for l in 0..m / size {
        let (center, axis) = cluster_center(l, n).ok_or_else(|| {
            Error::Parameter(format!("clusters supports at most {} clusters in n = {n}", 2 * n * n))
        })?;
        for p in 0..size {
            let i = l * size + p;
            for q in 0..n {
                x[(i, q)] = center[q];
            }
            for q in 0..size {
                let v = if q == p { 1.0 } else { 0.0 } - 1.0 / size as f64;
                x[(i, (axis + 1 + q) % n)] += c * v;
            }
        }
    }
    Ok(x)
}
