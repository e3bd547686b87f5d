use rayon::prelude::*;

use crate::data::{DataMatrix, NeighborSets};
use crate::error::{Error, Result};

/// All points within distance `r` of each point (boundary included).
///
/// Isolated points are logged; callers that need every point to have a
/// neighbor should check [`NeighborSets::isolated`].
pub fn radius_neighbors(x: &DataMatrix, r: f64) -> Result<NeighborSets> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Parameter(format!(
            "radius must be positive, got {r}"
        )));
    }
    let m = x.rows();
    let r2 = r * r;
    let sets: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|i| (0..m).filter(|&j| j != i && x.dist2(i, j) <= r2).collect())
        .collect();
    let q = NeighborSets::new(sets)?;
    let isolated = q.isolated();
    if !isolated.is_empty() {
        log::warn!("radius {r} leaves isolated points {isolated:?}");
    }
    Ok(q)
}

/// The `k` nearest other points of each point, ties broken by smaller index.
pub fn knn_neighbors(x: &DataMatrix, k: usize) -> Result<NeighborSets> {
    let m = x.rows();
    if k == 0 || k >= m {
        return Err(Error::Parameter(format!(
            "k must satisfy 1 <= k < m = {m}, got {k}"
        )));
    }
    let sets: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| (x.dist2(i, j), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();
    NeighborSets::new(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> DataMatrix {
        DataMatrix::from_rows(&points.iter().map(|&p| vec![p]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn collinear_radius_with_isolated_point() {
        let q = radius_neighbors(&line(&[0.0, 1.0, 3.0]), 1.5).unwrap();
        assert_eq!(q.sets(), &[vec![1], vec![0], vec![]]);
        assert_eq!(q.isolated(), vec![2]);
    }

    #[test]
    fn square_corners_exclude_diagonal() {
        let x = DataMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let q = radius_neighbors(&x, 1.0).unwrap();
        assert_eq!(q.sets(), &[vec![1, 3], vec![0, 2], vec![1, 3], vec![0, 2]]);
    }

    #[test]
    fn boundary_distance_is_included() {
        let q = radius_neighbors(&line(&[0.0, 2.0]), 2.0).unwrap();
        assert_eq!(q.total(), 2);
    }

    #[test]
    fn bad_radius() {
        assert!(matches!(
            radius_neighbors(&line(&[0.0, 1.0]), 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn knn_on_line() {
        let q = knn_neighbors(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert_eq!(q.sets(), &[vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn knn_duplicates_tie_break() {
        let q = knn_neighbors(&line(&[5.0, 5.0, 9.0]), 1).unwrap();
        assert_eq!(q.get(0), &[1]);
        assert_eq!(q.get(1), &[0]);
    }

    #[test]
    fn knn_equal_distances_prefer_smaller_index() {
        // point 1 is equidistant from 0 and 2
        let q = knn_neighbors(&line(&[0.0, 1.0, 2.0]), 1).unwrap();
        assert_eq!(q.get(1), &[0]);
    }

    #[test]
    fn knn_k_too_large() {
        assert!(matches!(
            knn_neighbors(&line(&[0.0, 1.0]), 2),
            Err(Error::Parameter(_))
        ));
    }
}
