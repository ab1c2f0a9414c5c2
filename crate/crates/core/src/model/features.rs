use ndarray::Array2;

use crate::knn::knn_with_self;
use crate::types::PointCloud;

/// Per-point feature width: centered xyz, rgb, neighborhood mean xyz offset,
/// neighborhood mean rgb, normalized neighborhood size.
pub const FEATURE_DIM: usize = 13;

/// Hand-built local-context features of a (possibly augmented) view.
///
/// Neighborhoods are the `k_feat` nearest points by position, the point
/// itself included; with fewer than `k_feat` points the whole cloud is used
/// and the size feature drops below 1 (a single point gives `1 / k_feat`).
pub fn extract_features(view: &PointCloud, k_feat: usize) -> Array2<f64> {
    let k_feat = k_feat.max(1);
    let n = view.len();
    let pos = view.positions();
    let col = view.colors();
    let centroid = view.centroid();
    let neighbors = knn_with_self(pos, k_feat);

    let mut out = Array2::zeros((n, FEATURE_DIM));
    for (i, nn) in neighbors.iter().enumerate() {
        let mut row = out.row_mut(i);
        let m = nn.len() as f64;
        for a in 0..3 {
            row[a] = pos[i][a] - centroid[a];
            row[3 + a] = col[i][a];
            let mean_pos = nn.iter().map(|&j| pos[j][a]).sum::<f64>() / m;
            row[6 + a] = mean_pos - pos[i][a];
            row[9 + a] = nn.iter().map(|&j| col[j][a]).sum::<f64>() / m;
        }
        row[12] = m / k_feat as f64;
    }
    out
}
