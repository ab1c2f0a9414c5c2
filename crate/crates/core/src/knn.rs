//! Exhaustive k-nearest-neighbor search over point positions.
//!
//! Scenes here hold a few hundred to a few thousand points, where a linear
//! scan per query is fast enough and trivially deterministic.

use std::cmp::Ordering;

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

fn by_dist_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest points to every point, the point itself included, each
/// list sorted by distance with ties broken by index. When `k >= n` every
/// point is returned.
pub fn knn_with_self(points: &[[f64; 3]], k: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let k = k.min(n);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n);
    points
        .iter()
        .map(|p| {
            scratch.clear();
            scratch.extend(points.iter().enumerate().map(|(j, q)| (sq_dist(p, q), j)));
            if k < n && k > 0 {
                scratch.select_nth_unstable_by(k - 1, by_dist_then_index);
                scratch.truncate(k);
            }
            scratch.sort_unstable_by(by_dist_then_index);
            scratch.iter().take(k).map(|&(_, j)| j).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_first_and_sorted() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.5, 0.0, 0.0]];
        let nn = knn_with_self(&pts, 2);
        assert_eq!(nn[0], vec![0, 3]);
        assert_eq!(nn[2], vec![2, 1]);
        assert_eq!(knn_with_self(&pts, 10)[1].len(), 4);
    }

    #[test]
    fn ties_break_by_index() {
        let pts = [[0.0; 3], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
        assert_eq!(knn_with_self(&pts, 2)[0], vec![0, 1]);
    }
}
