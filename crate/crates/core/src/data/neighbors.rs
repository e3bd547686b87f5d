use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Per-point neighbor index lists, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborSets {
    sets: Vec<Vec<usize>>,
}

impl NeighborSets {
    /// Wraps raw lists, sorting and deduplicating each one. Self-loops and
    /// out-of-range indices are rejected.
    pub fn new(mut sets: Vec<Vec<usize>>) -> Result<Self> {
        let m = sets.len();
        for (i, s) in sets.iter_mut().enumerate() {
            s.sort_unstable();
            s.dedup();
            if let Some(&j) = s.iter().find(|&&j| j >= m) {
                return Err(Error::Bounds { index: j, len: m });
            }
            if s.contains(&i) {
                return Err(Error::Invariant(format!(
                    "point {i} lists itself as a neighbor"
                )));
            }
        }
        Ok(Self { sets })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn get(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn counts(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    /// Total number of ordered neighbor pairs.
    pub fn total(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn k_max(&self) -> usize {
        self.sets.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.sets[i].binary_search(&j).is_ok()
    }

    /// Indices with no neighbors.
    pub fn isolated(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.sets[i].is_empty())
            .collect()
    }

    /// Indicator matrix with B[i][j] = 1 iff j is a neighbor of i.
    pub fn indicator(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut b = DMatrix::zeros(m, m);
        for (i, s) in self.sets.iter().enumerate() {
            for &j in s {
                b[(i, j)] = 1.0;
            }
        }
        b
    }

    /// Applies a relabeling `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut sets = vec![Vec::new(); self.len()];
        for (old, s) in self.sets.iter().enumerate() {
            let mut t: Vec<usize> = s.iter().map(|&j| perm[j]).collect();
            t.sort_unstable();
            sets[perm[old]] = t;
        }
        Self { sets }
    }

    /// Checks the radius predicate j in Q_i iff j != i and d^2 <= r^2.
    pub fn verify_radius(&self, x: &DataMatrix, r: f64) -> Result<()> {
        for i in 0..self.len() {
            for j in 0..self.len() {
                let expected = i != j && x.dist2(i, j) <= r * r;
                if expected != self.contains(i, j) {
                    return Err(Error::Invariant(format!(
                        "pair ({i}, {j}) membership disagrees with the radius predicate"
                    )));
                }
            }
        }
        Ok(())
    }
}
