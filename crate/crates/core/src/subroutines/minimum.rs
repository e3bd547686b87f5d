use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::sample_index;
use crate::subroutines::QsveModel;

/// Query budget of one minimum-finding attempt over `items` entries:
/// ⌈22.5√N + 1.4 log₂²N⌉.
pub fn durr_hoyer_budget(items: usize) -> u64 {
    let n = items.max(2) as f64;
    (22.5 * n.sqrt() + 1.4 * n.log2().powi(2)).ceil() as u64
}

/// Measurement distribution of a value register: outcome y has probability
/// `mass[y]`, reads as `values[y]` and falls in grid cell `cells[y]`.
#[derive(Debug, Clone)]
pub struct LabelMass {
    pub mass: Vec<f64>,
    pub values: Vec<f64>,
    pub cells: Vec<usize>,
}

impl LabelMass {
    pub fn new(mass: Vec<f64>, values: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if mass.len() != values.len() || mass.len() != cells.len() {
            return Err(Error::Dimension {
                expected: mass.len(),
                found: values.len().min(cells.len()),
            });
        }
        Ok(Self {
            mass,
            values,
            cells,
        })
    }

    /// One label per item with equal mass; each label is its own cell.
    pub fn uniform(values: &[f64]) -> Self {
        let k = values.len();
        Self {
            mass: vec![1.0 / k as f64; k],
            values: values.to_vec(),
            cells: (0..k).collect(),
        }
    }

    /// Value register of the entangled singular value estimation state.
    pub fn from_qsve(model: &QsveModel) -> Self {
        let n = model.labels();
        let cells: Vec<usize> = (0..n).map(|y| model.cell(y)).collect();
        Self {
            mass: model.entangled_label_mass(),
            values: cells.iter().map(|&c| model.label_value(c)).collect(),
            cells,
        }
    }

    fn len(&self) -> usize {
        self.mass.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimumOutput {
    pub value: f64,
    pub cell: usize,
    /// Labels of the returned cell that carry mass.
    pub labels: Vec<usize>,
    /// Best value of each independent attempt, `None` when an attempt saw no
    /// qualifying outcome.
    pub attempts: Vec<Option<f64>>,
    /// Search steps over all attempts; each costs two state preparations and
    /// one comparison oracle.
    pub iterations: u64,
}

const MASS_FLOOR: f64 = 1e-300;

/// Smallest value above `threshold` that is not within `exclusion` of an
/// entry of `already_found`, by `repetitions` independent threshold-descent
/// searches with randomized Grover counts. The returned value is the minimum
/// over attempts.
pub fn find_minimum<R: Rng>(
    labels: &LabelMass,
    threshold: f64,
    already_found: &[f64],
    exclusion: f64,
    items: usize,
    repetitions: usize,
    rng: &mut R,
) -> Result<MinimumOutput> {
    let excluded = |v: f64| {
        already_found
            .iter()
            .any(|&f| (f - v).abs() <= exclusion.max(1e-12 * (1.0 + f.abs())))
    };
    let qualifies: Vec<bool> = (0..labels.len())
        .map(|y| labels.mass[y] > MASS_FLOOR && labels.values[y] > threshold && !excluded(labels.values[y]))
        .collect();
    if !qualifies.iter().any(|&q| q) {
        return Err(Error::Exhausted);
    }
    let budget = durr_hoyer_budget(items);
    let cap = (items.max(1) as f64).sqrt();
    let mut attempts = Vec::with_capacity(repetitions.max(1));
    let mut iterations = 0;
    for _ in 0..repetitions.max(1) {
        // initial threshold from one measurement of the prepared state
        let y0 = sample_index(&labels.mass, rng);
        let mut best = qualifies[y0].then_some(y0);
        let mut spent = 1u64;
        let mut window = 1.0f64;
        while spent < budget {
            let good: Vec<f64> = (0..labels.len())
                .map(|y| {
                    let better = best.is_none_or(|b| labels.values[y] < labels.values[b]);
                    if qualifies[y] && better {
                        labels.mass[y]
                    } else {
                        0.0
                    }
                })
                .collect();
            let p: f64 = good.iter().sum();
            if p == 0.0 {
                // nothing better exists; the search runs out its budget
                spent = budget;
                break;
            }
            let k = rng.random_range(0..window.ceil() as u64);
            spent += k + 1;
            let theta = p.min(1.0).sqrt().asin();
            let hit = ((2 * k + 1) as f64 * theta).sin().powi(2);
            if rng.random::<f64>() < hit {
                best = Some(sample_index(&good, rng));
                window = 1.0;
            } else {
                window = (window * 1.2).min(cap);
            }
        }
        iterations += spent;
        attempts.push(best);
    }
    let winner = attempts
        .iter()
        .flatten()
        .copied()
        .min_by(|&a, &b| labels.values[a].total_cmp(&labels.values[b]))
        .ok_or(Error::Exhausted)?;
    let cell = labels.cells[winner];
    Ok(MinimumOutput {
        value: labels.values[winner],
        cell,
        labels: (0..labels.len())
            .filter(|&y| labels.cells[y] == cell && labels.mass[y] > MASS_FLOOR)
            .collect(),
        attempts: attempts.iter().map(|a| a.map(|y| labels.values[y])).collect(),
        iterations,
    })
}
