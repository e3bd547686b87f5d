use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{DatasetKind, DatasetSpec};
use crate::pipeline::{run_quantum_npe, QnpeConfig};

/// Stages whose query counts are fitted.
pub const FITTED_STAGES: [&str; 3] = ["neighbors", "weights", "transformation"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    M,
    N,
    K,
    D,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::M => "m",
            Axis::N => "n",
            Axis::K => "k",
            Axis::D => "d",
        }
    }

    /// Exponent of each stage's query complexity in this parameter, with
    /// polylogarithmic factors dropped.
    pub fn reference_exponents(self) -> BTreeMap<String, f64> {
        let e = match self {
            Axis::M => [1.5, 1.0, 1.0],
            Axis::N => [0.0, 0.0, 0.0],
            Axis::K => [0.5, 2.0, 0.5],
            Axis::D => [0.0, 0.0, 1.0],
        };
        FITTED_STAGES
            .iter()
            .zip(e)
            .map(|(s, v)| (s.to_string(), v))
            .collect()
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Axis::M, Axis::N, Axis::K, Axis::D]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown scaling axis `{s}` (m, n, k or d)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub size: usize,
    /// Metered queries per ledger stage.
    pub queries: BTreeMap<String, u64>,
    /// Kept out of the JSON so scaling output is byte-stable; the CLI puts it in the manifest.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub axis: Axis,
    pub dataset: DatasetSpec,
    pub config: QnpeConfig,
    pub points: Vec<ScalingPoint>,
    pub fitted_exponent: BTreeMap<String, f64>,
    pub reference_exponent: BTreeMap<String, f64>,
}

impl ScalingRecord {
    pub fn series(&self, stage: &str) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| (p.size as f64, p.queries.get(stage).copied().unwrap_or(0) as f64))
            .collect()
    }

    /// Largest ratio of consecutive query counts of `stage`.
    pub fn max_growth(&self, stage: &str) -> f64 {
        self.series(stage)
            .windows(2)
            .map(|w| w[1].1 / w[0].1)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Wide table: one row per size, one column per stage.
    pub fn to_csv(&self) -> String {
        let stages: Vec<&String> = self
            .points
            .first()
            .map(|p| p.queries.keys().collect())
            .unwrap_or_default();
        let mut out = String::from(self.axis.name());
        for s in &stages {
            out.push(',');
            out.push_str(s);
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&p.size.to_string());
            for s in &stages {
                out.push_str(&format!(",{}", p.queries.get(*s).copied().unwrap_or(0)));
            }
            out.push('\n');
        }
        out
    }
}

/// Least-squares slope of ln y against ln x.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::Fit(format!("non-positive point ({}, {})", p.0, p.1)));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-12 {
        return Err(Error::Fit("sizes have zero variance".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Fixed-density clusters: n = 8, noise 0.03 so the residual spectrum has
/// distinct singular values.
pub fn default_scaling_dataset() -> DatasetSpec {
    DatasetSpec {
        noise: 0.03,
        seed: 3,
        ..DatasetSpec::new(DatasetKind::Clusters, 32, 8)
    }
}

/// Runs the quantum pipeline at each size along `axis`, everything else
/// held at `dataset` and `config`. On the k axis the cluster size is k + 1.
pub fn run_scaling(
    axis: Axis,
    sizes: &[usize],
    dataset: &DatasetSpec,
    config: &QnpeConfig,
) -> Result<ScalingRecord> {
    if sizes.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 sizes, got {}", sizes.len())));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Fit(format!("sizes must be strictly increasing, got {sizes:?}")));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut spec = *dataset;
        let mut cfg = config.clone();
        match axis {
            Axis::M => spec.m = size,
            Axis::N => spec.n = size,
            Axis::K => spec.cluster_size = size + 1,
            Axis::D => cfg.d = size,
        }
        let x = spec.generate()?;
        let start = std::time::Instant::now();
        let result = run_quantum_npe(&x, &cfg)?;
        let wall_time = start.elapsed().as_secs_f64();
        log::info!("scaling {axis} = {size}: {} queries", result.query_ledger.total);
        points.push(ScalingPoint {
            size,
            queries: result
                .query_ledger
                .stages
                .iter()
                .map(|s| (s.stage.clone(), s.total))
                .collect(),
            wall_time,
        });
    }
    let mut record = ScalingRecord {
        axis,
        dataset: *dataset,
        config: config.clone(),
        points,
        fitted_exponent: BTreeMap::new(),
        reference_exponent: axis.reference_exponents(),
    };
    for stage in FITTED_STAGES {
        let e = fit_exponent(&record.series(stage))?;
        record.fitted_exponent.insert(stage.to_string(), e);
    }
    Ok(record)
}
