use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;

use crate::data::{Mapping, TreeStore};
use crate::error::{Error, Result};
use crate::sim::{oracle_from_function, FixedPoint, Op};

/// Emulation of the squared-distance oracle |i>|j>|0> -> |i>|j>|d²(x_i, y_j)>
/// built from two stores.
///
/// The written value is the exact squared distance rounded onto a
/// fixed-point grid with spacing at most ε₁, so it is within ε₁/2 of the
/// truth. Each invocation on branch (i, j) bills
/// ⌈‖x_i‖‖y_j‖ ln(1/δ)/ε₁⌉ row-state queries to each store.
#[derive(Debug)]
pub struct DistanceOracle<'a> {
    x: &'a TreeStore,
    y: &'a TreeStore,
    xd: DMatrix<f64>,
    yd: DMatrix<f64>,
    eps1: f64,
    delta: f64,
    fp: FixedPoint,
    calls: AtomicU64,
    queries: AtomicU64,
}

impl<'a> DistanceOracle<'a> {
    pub fn new(x: &'a TreeStore, y: &'a TreeStore, eps1: f64, delta: f64) -> Result<Self> {
        if !(eps1 > 0.0) || !eps1.is_finite() {
            return Err(Error::Parameter(format!("ε₁ must be positive, got {eps1}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!(
                "oracle failure probability must lie in (0, 1), got {delta}"
            )));
        }
        if x.cols() != y.cols() {
            return Err(Error::Dimension {
                expected: x.cols(),
                found: y.cols(),
            });
        }
        let frac = (1.0 / eps1).log2().ceil().max(0.0) as u32;
        let hx = (0..x.rows()).map(|i| x.row_norm_sq(i)).fold(0.0, f64::max).sqrt();
        let hy = (0..y.rows()).map(|j| y.row_norm_sq(j)).fold(0.0, f64::max).sqrt();
        let top = (hx + hy).powi(2) + 1.0;
        let int_bits = top.log2().ceil().max(1.0) as u32;
        let fp = FixedPoint::new(int_bits + frac, frac)?;
        Ok(Self {
            x,
            y,
            xd: x.to_dense(),
            yd: y.to_dense(),
            eps1,
            delta,
            fp,
            calls: AtomicU64::new(0),
            queries: AtomicU64::new(0),
        })
    }

    pub fn eps1(&self) -> f64 {
        self.eps1
    }

    pub fn format(&self) -> FixedPoint {
        self.fp
    }

    /// Exact squared distance (no billing).
    pub fn exact(&self, i: usize, j: usize) -> f64 {
        (self.xd.row(i) - self.yd.row(j)).norm_squared()
    }

    pub fn norm_x(&self, i: usize) -> f64 {
        self.x.row_norm_sq(i).sqrt()
    }

    pub fn norm_y(&self, j: usize) -> f64 {
        self.y.row_norm_sq(j).sqrt()
    }

    /// Normalized row x_i over the padded column register (no billing); e_0
    /// for a zero row.
    pub fn unit_x(&self, i: usize) -> Result<Vec<f64>> {
        unit_row(&self.xd, i, self.x.leaf_width())
    }

    /// Normalized row y_j over the padded column register (no billing).
    pub fn unit_y(&self, j: usize) -> Result<Vec<f64>> {
        unit_row(&self.yd, j, self.y.leaf_width())
    }

    pub fn stores(&self) -> (&'a TreeStore, &'a TreeStore) {
        (self.x, self.y)
    }

    /// Query cost of one invocation on branch (i, j).
    pub fn cost(&self, i: usize, j: usize) -> u64 {
        let c = self.norm_x(i) * self.norm_y(j) * (1.0 / self.delta).ln() / self.eps1;
        (c.ceil() as u64).max(1)
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.xd.nrows() {
            return Err(Error::Bounds {
                index: i,
                len: self.xd.nrows(),
            });
        }
        if j >= self.yd.nrows() {
            return Err(Error::Bounds {
                index: j,
                len: self.yd.nrows(),
            });
        }
        Ok(())
    }

    /// Value written into the distance register for branch (i, j); bills one
    /// invocation.
    pub fn value(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i, j)?;
        let v = self.fp.quantize(self.exact(i, j))?;
        self.bill(self.cost(i, j));
        Ok(v)
    }

    /// Bills one superposed invocation over several branches: the cost is the
    /// largest branch cost.
    pub fn bill_superposed(&self, branches: &[(usize, usize)]) -> u64 {
        let c = branches
            .iter()
            .map(|&(i, j)| self.cost(i, j))
            .max()
            .unwrap_or(0);
        self.bill(c);
        c
    }

    /// Quantized values for many branches at the cost of one superposed call.
    pub fn values_superposed(&self, branches: &[(usize, usize)]) -> Result<Vec<f64>> {
        let vals = branches
            .iter()
            .map(|&(i, j)| {
                self.check(i, j)?;
                self.fp.quantize(self.exact(i, j))
            })
            .collect::<Result<Vec<_>>>()?;
        self.bill_superposed(branches);
        Ok(vals)
    }

    /// Bills `times` superposed calls of cost `cost` each.
    pub fn bill_calls(&self, cost: u64, times: u64) {
        self.calls.fetch_add(times, Ordering::Relaxed);
        self.queries.fetch_add(cost * times, Ordering::Relaxed);
        self.x.meter(Mapping::RowState, cost * times);
        self.y.meter(Mapping::RowState, cost * times);
    }

    /// Cost of one call superposed over every (i, j) pair.
    pub fn all_pairs_cost(&self) -> u64 {
        let hx = (0..self.xd.nrows()).map(|i| self.norm_x(i)).fold(0.0, f64::max);
        let hy = (0..self.yd.nrows()).map(|j| self.norm_y(j)).fold(0.0, f64::max);
        ((hx * hy * (1.0 / self.delta).ln() / self.eps1).ceil() as u64).max(1)
    }

    fn bill(&self, c: u64) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.queries.fetch_add(c, Ordering::Relaxed);
        self.x.meter(Mapping::RowState, c);
        self.y.meter(Mapping::RowState, c);
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    /// The oracle as a permutation on an (i, j, value) register triple with
    /// `fp` as the value format. Only for small instances: the value register
    /// has 2^bits states.
    pub fn bit_oracle(&self, fp: FixedPoint) -> Result<Op> {
        let jw = self.y.row_width();
        let iw = self.x.row_width();
        oracle_from_function(
            |idx| {
                let (i, j) = (idx / jw, idx % jw);
                if i < self.xd.nrows() && j < self.yd.nrows() {
                    self.exact(i, j)
                } else {
                    0.0
                }
            },
            iw * jw,
            fp,
        )
    }
}

fn unit_row(m: &DMatrix<f64>, i: usize, width: usize) -> Result<Vec<f64>> {
    if i >= m.nrows() {
        return Err(Error::Bounds {
            index: i,
            len: m.nrows(),
        });
    }
    let norm = m.row(i).norm();
    let mut v = vec![0.0; width];
    if norm == 0.0 {
        // direction of a zero row is arbitrary; it always carries weight 0
        v[0] = 1.0;
        return Ok(v);
    }
    for (c, a) in m.row(i).iter().enumerate() {
        v[c] = a / norm;
    }
    Ok(v)
}
