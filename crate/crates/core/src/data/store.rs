use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::next_pow2;

/// Which matrix a store holds. The kind decides the build-time validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StoreKind {
    /// Data matrix X.
    X,
    /// Neighbor indicator matrix B.
    B,
    /// Residual matrix D = I - W.
    D,
}

/// The three access forms a store answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mapping {
    /// |i>|j>|0> -> |i>|j>|M_ij>
    Element,
    /// |i>|0> -> |i>|row_i / ||row_i||>
    RowState,
    /// |0> -> sum_i ||row_i|| / ||M||_F |i>
    NormState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub element: u64,
    pub row_state: u64,
    pub norm_state: u64,
}

impl QueryCounts {
    pub fn total(&self) -> u64 {
        self.element + self.row_state + self.norm_state
    }
}

/// JSON dump of a store.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreDump {
    pub kind: StoreKind,
    pub m: usize,
    pub n: usize,
    pub frobenius_norm: f64,
    pub query_counts: QueryCounts,
}

/// Result of one store access.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Scalar(f64),
    /// Amplitudes over a power-of-two padded index register.
    Amplitudes(Vec<f64>),
}

/// Binary-tree amplitude store. Each row keeps a heap-ordered tree of squared
/// partial sums plus the signed leaf values; a separate tree sits over the
/// squared row norms. Row-state and norm-state amplitudes are produced by
/// walking the tree from the root, the way the quantum access circuit would.
#[derive(Debug)]
pub struct TreeStore {
    kind: StoreKind,
    rows: usize,
    cols: usize,
    leaf_width: usize,
    row_width: usize,
    row_trees: Vec<Vec<f64>>,
    sign_leaves: Vec<Vec<f64>>,
    norm_tree: Vec<f64>,
    frobenius_norm: f64,
    counters: [AtomicU64; 3],
}

impl Clone for TreeStore {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            rows: self.rows,
            cols: self.cols,
            leaf_width: self.leaf_width,
            row_width: self.row_width,
            row_trees: self.row_trees.clone(),
            sign_leaves: self.sign_leaves.clone(),
            norm_tree: self.norm_tree.clone(),
            frobenius_norm: self.frobenius_norm,
            counters: std::array::from_fn(|k| {
                AtomicU64::new(self.counters[k].load(Ordering::Relaxed))
            }),
        }
    }
}

fn build_tree(leaves: &[f64], width: usize) -> Vec<f64> {
    let mut tree = vec![0.0; 2 * width - 1];
    for (k, &v) in leaves.iter().enumerate() {
        tree[width - 1 + k] = v;
    }
    for node in (0..width - 1).rev() {
        tree[node] = tree[2 * node + 1] + tree[2 * node + 2];
    }
    tree
}

/// Amplitudes sqrt(leaf/root) obtained by multiplying child/parent ratios down
/// the tree. Leaves under a zero node get amplitude zero.
fn descend(tree: &[f64], width: usize) -> Vec<f64> {
    let mut amp = vec![0.0; width];
    if tree[0] <= 0.0 {
        return amp;
    }
    // (node, accumulated squared amplitude)
    let mut stack = vec![(0usize, 1.0f64)];
    while let Some((node, acc)) = stack.pop() {
        if node >= width - 1 {
            amp[node - (width - 1)] = acc.sqrt();
            continue;
        }
        let parent = tree[node];
        if parent <= 0.0 {
            continue;
        }
        for child in [2 * node + 1, 2 * node + 2] {
            if tree[child] > 0.0 {
                stack.push((child, acc * tree[child] / parent));
            }
        }
    }
    amp
}

impl TreeStore {
    /// Builds a store for `m`, validating it against the rules of `kind`.
    pub fn build(m: &DMatrix<f64>, kind: StoreKind) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyInput);
        }
        for i in 0..rows {
            for j in 0..cols {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::Value {
                        row: i,
                        col: j,
                        message: format!("non-finite entry {v}"),
                    });
                }
                if kind == StoreKind::B {
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::Invariant(format!(
                            "B-store entry ({i}, {j}) = {v} is not 0 or 1"
                        )));
                    }
                    if i == j && v != 0.0 {
                        return Err(Error::Invariant(format!(
                            "B-store diagonal entry ({i}, {i}) is nonzero"
                        )));
                    }
                }
            }
        }
        if kind != StoreKind::X && rows != cols {
            return Err(Error::Invariant(format!(
                "{kind:?}-store needs a square matrix, got {rows}x{cols}"
            )));
        }
        let leaf_width = next_pow2(cols);
        let row_width = next_pow2(rows);
        let mut row_trees = Vec::with_capacity(rows);
        let mut sign_leaves = Vec::with_capacity(rows);
        let mut norms2 = Vec::with_capacity(rows);
        for i in 0..rows {
            let signed: Vec<f64> = m.row(i).iter().copied().collect();
            let squares: Vec<f64> = signed.iter().map(|v| v * v).collect();
            let tree = build_tree(&squares, leaf_width);
            norms2.push(tree[0]);
            row_trees.push(tree);
            sign_leaves.push(signed);
        }
        let norm_tree = build_tree(&norms2, row_width);
        let frobenius_norm = norm_tree[0].sqrt();
        Ok(Self {
            kind,
            rows,
            cols,
            leaf_width,
            row_width,
            row_trees,
            sign_leaves,
            norm_tree,
            frobenius_norm,
            counters: Default::default(),
        })
    }

    /// Builds the residual store for D = I - W, checking that W only has
    /// weight on each row's neighbor set.
    pub fn build_residual(w: &crate::classical::WeightMatrix) -> Result<Self> {
        let m = w.entries().nrows();
        let q = w.support();
        for i in 0..m {
            for j in 0..m {
                if w.entries()[(i, j)] != 0.0 && !q.contains(i, j) {
                    return Err(Error::Invariant(format!(
                        "W[{i},{j}] is nonzero but {j} is not a neighbor of {i}"
                    )));
                }
            }
        }
        let d = DMatrix::identity(m, m) - w.entries();
        Self::build(&d, StoreKind::D)
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Padded width of a row-state register.
    pub fn leaf_width(&self) -> usize {
        self.leaf_width
    }

    /// Padded width of the norm-state register.
    pub fn row_width(&self) -> usize {
        self.row_width
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm
    }

    /// Root of row tree `i`, the squared row norm.
    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_trees[i][0]
    }

    pub fn norm_tree(&self) -> &[f64] {
        &self.norm_tree
    }

    pub fn row_tree(&self, i: usize) -> &[f64] {
        &self.row_trees[i]
    }

    fn bump(&self, mapping: Mapping) {
        let k = match mapping {
            Mapping::Element => 0,
            Mapping::RowState => 1,
            Mapping::NormState => 2,
        };
        self.counters[k].fetch_add(1, Ordering::Relaxed);
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.rows {
            return Err(Error::Bounds {
                index: i,
                len: self.rows,
            });
        }
        Ok(())
    }

    /// Generic access entry point. `j` is only read by the element mapping.
    pub fn access(&self, mapping: Mapping, i: usize, j: usize) -> Result<Payload> {
        match mapping {
            Mapping::Element => self.element(i, j).map(Payload::Scalar),
            Mapping::RowState => self.row_state(i).map(Payload::Amplitudes),
            Mapping::NormState => self.norm_state().map(Payload::Amplitudes),
        }
    }

    /// Exact stored entry.
    pub fn element(&self, i: usize, j: usize) -> Result<f64> {
        self.check_row(i)?;
        if j >= self.cols {
            return Err(Error::Bounds {
                index: j,
                len: self.cols,
            });
        }
        self.bump(Mapping::Element);
        Ok(self.sign_leaves[i][j])
    }

    /// Normalized row `i` over the padded column register.
    pub fn row_state(&self, i: usize) -> Result<Vec<f64>> {
        self.check_row(i)?;
        self.bump(Mapping::RowState);
        let tree = &self.row_trees[i];
        if tree[0] <= 0.0 {
            return Err(Error::ZeroNorm { row: i });
        }
        let mut amp = descend(tree, self.leaf_width);
        for (a, &s) in amp.iter_mut().zip(&self.sign_leaves[i]) {
            if s < 0.0 {
                *a = -*a;
            }
        }
        Ok(amp)
    }

    /// Row norms divided by the Frobenius norm over the padded row register.
    pub fn norm_state(&self) -> Result<Vec<f64>> {
        self.bump(Mapping::NormState);
        if self.norm_tree[0] <= 0.0 {
            return Err(Error::ZeroNorm { row: 0 });
        }
        Ok(descend(&self.norm_tree, self.row_width))
    }

    pub fn query_counts(&self) -> QueryCounts {
        QueryCounts {
            element: self.counters[0].load(Ordering::Relaxed),
            row_state: self.counters[1].load(Ordering::Relaxed),
            norm_state: self.counters[2].load(Ordering::Relaxed),
        }
    }

    /// Bills `count` oracle invocations made by an emulated circuit that
    /// reads the store without going through the accessors above.
    pub fn meter(&self, mapping: Mapping, count: u64) {
        let k = match mapping {
            Mapping::Element => 0,
            Mapping::RowState => 1,
            Mapping::NormState => 2,
        };
        self.counters[k].fetch_add(count, Ordering::Relaxed);
    }

    /// Checks that every internal node equals the sum of its children and
    /// that the row-tree roots feed the norm tree.
    pub fn verify_tree_sums(&self) -> Result<()> {
        let check = |tree: &[f64], width: usize, what: &str| -> Result<()> {
            for node in 0..width - 1 {
                let sum = tree[2 * node + 1] + tree[2 * node + 2];
                if (tree[node] - sum).abs() > 1e-12 * tree[0].abs().max(f64::MIN_POSITIVE) {
                    return Err(Error::Invariant(format!(
                        "{what} node {node} = {} but children sum to {sum}",
                        tree[node]
                    )));
                }
            }
            Ok(())
        };
        for (i, tree) in self.row_trees.iter().enumerate() {
            check(tree, self.leaf_width, &format!("row tree {i}"))?;
            if self.norm_tree[self.row_width - 1 + i] != tree[0] {
                return Err(Error::Invariant(format!(
                    "norm tree leaf {i} does not match row root"
                )));
            }
        }
        check(&self.norm_tree, self.row_width, "norm tree")
    }

    pub fn dump(&self) -> StoreDump {
        StoreDump {
            kind: self.kind,
            m: self.rows,
            n: self.cols,
            frobenius_norm: self.frobenius_norm,
            query_counts: self.query_counts(),
        }
    }

    /// Dense copy of the stored matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.sign_leaves[i][j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_two_point_b() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = TreeStore::build(&b, StoreKind::B).unwrap();
        assert_eq!(s.row_norm_sq(0), 1.0);
        assert_eq!(s.row_norm_sq(1), 1.0);
        assert!((s.frobenius_norm().powi(2) - 2.0).abs() < 1e-12);
        s.verify_tree_sums().unwrap();
    }

    #[test]
    fn identity_norm_root() {
        let s = TreeStore::build(&DMatrix::identity(2, 2), StoreKind::X).unwrap();
        assert_eq!(s.norm_tree()[0], 2.0);
    }

    #[test]
    fn b_store_rejects_diagonal() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            TreeStore::build(&b, StoreKind::B),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn nan_entry_rejected() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(
            TreeStore::build(&x, StoreKind::X),
            Err(Error::Value { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn element_read() {
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 1.0]);
        let s = TreeStore::build(&x, StoreKind::X).unwrap();
        assert_eq!(s.element(0, 1).unwrap(), 4.0);
        assert_eq!(s.query_counts().element, 1);
        assert!(matches!(
            s.element(2, 0),
            Err(Error::Bounds { index: 2, len: 2 })
        ));
    }

    #[test]
    fn b_row_state_is_uniform_over_neighbors() {
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 1)] = 1.0;
        b[(0, 2)] = 1.0;
        b[(1, 0)] = 1.0;
        b[(2, 0)] = 1.0;
        let s = TreeStore::build(&b, StoreKind::B).unwrap();
        let amp = s.row_state(0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(amp.len(), 4);
        for (a, e) in amp.iter().zip([0.0, h, h, 0.0]) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn norm_state_ratios() {
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 1.0]);
        let s = TreeStore::build(&x, StoreKind::X).unwrap();
        let amp = s.norm_state().unwrap();
        let r = 26f64.sqrt();
        assert!((amp[0] - 5.0 / r).abs() < 1e-15);
        assert!((amp[1] - 1.0 / r).abs() < 1e-15);
        assert_eq!(s.query_counts().norm_state, 1);
    }

    #[test]
    fn zero_row_has_no_state() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let s = TreeStore::build(&x, StoreKind::X).unwrap();
        assert!(matches!(s.row_state(1), Err(Error::ZeroNorm { row: 1 })));
    }

    #[test]
    fn signed_row_state_reconstructs_row() {
        let x = DMatrix::from_row_slice(1, 3, &[-1.0, 2.0, -3.0]);
        let s = TreeStore::build(&x, StoreKind::X).unwrap();
        let amp = s.row_state(0).unwrap();
        let norm = s.row_norm_sq(0).sqrt();
        for j in 0..3 {
            assert!((amp[j] * norm - x[(0, j)]).abs() < 1e-12);
        }
        assert_eq!(amp[3], 0.0);
    }

    #[test]
    fn dump_is_json() {
        let s = TreeStore::build(&DMatrix::identity(2, 2), StoreKind::X).unwrap();
        s.element(0, 0).unwrap();
        let v = serde_json::to_value(s.dump()).unwrap();
        assert_eq!(v["kind"], "X");
        assert_eq!(v["query_counts"]["element"], 1);
    }
}
