//! Super-points: low-level clusters of a scene by position and color.
//!
//! A k-NN graph is built on positions. Edges are weighted by a blend of
//! positional and color distance and merged greedily in ascending order with
//! a union-find while the weight stays under a cutoff, which yields the
//! connected components of the thresholded graph. Groups smaller than
//! `min_group_size` are then folded into the adjacent group with the nearest
//! centroid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::knn_with_self;
use crate::types::{PointCloud, SuperPointPartition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub k_neighbors: usize,
    pub dist_weight: f64,
    pub color_weight: f64,
    pub merge_threshold: f64,
    pub min_group_size: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 8,
            dist_weight: 1.0,
            color_weight: 1.0,
            merge_threshold: 0.15,
            min_group_size: 5,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::InvalidConfig("k_neighbors must be >= 1".into()));
        }
        if !(self.dist_weight >= 0.0 && self.color_weight >= 0.0) {
            return Err(Error::InvalidConfig("cluster weights must be >= 0".into()));
        }
        if self.dist_weight == 0.0 && self.color_weight == 0.0 {
            return Err(Error::InvalidConfig("cluster weights are both zero".into()));
        }
        if !(self.merge_threshold > 0.0) {
            return Err(Error::InvalidConfig("merge_threshold must be > 0".into()));
        }
        Ok(())
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true if two distinct sets were joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] || (self.size[ra] == self.size[rb] && rb < ra) {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Root representative of every element.
    pub fn labels(&mut self) -> Vec<usize> {
        (0..self.parent.len()).map(|i| self.find(i)).collect()
    }
}

/// An undirected graph edge `(i, j)` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub cost: f64,
}

fn norm3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

/// Symmetrized k-NN graph with blended position/color costs, sorted by
/// ascending cost then by endpoint indices. Disconnected k-NN components are
/// bridged by their shortest positional links, so the graph is connected.
pub fn knn_graph(cloud: &PointCloud, cfg: &ClusterConfig) -> Vec<Edge> {
    let pos = cloud.positions();
    let col = cloud.colors();
    let neighbors = knn_with_self(pos, cfg.k_neighbors + 1);
    let mut pairs: Vec<(usize, usize)> = neighbors
        .iter()
        .enumerate()
        .flat_map(|(i, nn)| {
            nn.iter()
                .filter(move |&&j| j != i)
                .map(move |&j| (i.min(j), i.max(j)))
        })
        .collect();
    bridge_components(pos, &mut pairs);
    pairs.sort_unstable();
    pairs.dedup();
    let mut edges: Vec<Edge> = pairs
        .into_iter()
        .map(|(i, j)| Edge {
            i,
            j,
            cost: cfg.dist_weight * norm3(&pos[i], &pos[j])
                + cfg.color_weight * norm3(&col[i], &col[j]),
        })
        .collect();
    edges.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });
    edges
}

pub fn build_superpoints(cloud: &PointCloud, cfg: &ClusterConfig) -> Result<SuperPointPartition> {
    cfg.validate()?;
    let n = cloud.len();
    let edges = knn_graph(cloud, cfg);

    let mut uf = UnionFind::new(n);
    for e in &edges {
        if e.cost > cfg.merge_threshold {
            break;
        }
        uf.union(e.i, e.j);
    }
    let mut part = SuperPointPartition::from_labels(&uf.labels())?;

    if cfg.min_group_size > 1 {
        part = absorb_small_groups(cloud, part, &edges, cfg.min_group_size)?;
    }
    Ok(part)
}

/// Borůvka-style rounds: each component gains its shortest link to the
/// rest of the cloud until one component remains.
fn bridge_components(pos: &[[f64; 3]], pairs: &mut Vec<(usize, usize)>) {
    let n = pos.len();
    loop {
        let mut uf = UnionFind::new(n);
        for &(i, j) in pairs.iter() {
            uf.union(i, j);
        }
        let comp = uf.labels();
        let mut best: std::collections::BTreeMap<usize, (f64, usize, usize)> = Default::default();
        for i in 0..n {
            for j in 0..n {
                if comp[i] == comp[j] {
                    continue;
                }
                let d = norm3(&pos[i], &pos[j]);
                let entry = best.entry(comp[i]).or_insert((f64::INFINITY, i, j));
                if d < entry.0 {
                    *entry = (d, i, j);
                }
            }
        }
        if best.is_empty() {
            return;
        }
        pairs.extend(best.values().map(|&(_, i, j)| (i.min(j), i.max(j))));
    }
}

fn centroids(cloud: &PointCloud, part: &SuperPointPartition) -> Vec<[f64; 3]> {
    let mut sums = vec![[0.0; 3]; part.num_groups()];
    let sizes = part.group_sizes();
    for (p, &g) in cloud.positions().iter().zip(part.group_of()) {
        for k in 0..3 {
            sums[g][k] += p[k];
        }
    }
    sums.iter()
        .zip(&sizes)
        .map(|(s, &c)| s.map(|v| v / c as f64))
        .collect()
}

/// Every undersized group joins its nearest-centroid neighbor (adjacency
/// through graph edges, any group if none is adjacent). All merges of a
/// round are applied together so the outcome does not depend on point
/// order; rounds repeat until no group is undersized or one group is left.
fn absorb_small_groups(
    cloud: &PointCloud,
    mut part: SuperPointPartition,
    edges: &[Edge],
    min_size: usize,
) -> Result<SuperPointPartition> {
    loop {
        let m = part.num_groups();
        let sizes = part.group_sizes();
        if m <= 1 || sizes.iter().all(|&s| s >= min_size) {
            return Ok(part);
        }
        let cents = centroids(cloud, &part);
        let groups = part.group_of();
        let mut adjacent = vec![Vec::new(); m];
        for e in edges {
            let (a, b) = (groups[e.i], groups[e.j]);
            if a != b {
                adjacent[a].push(b);
                adjacent[b].push(a);
            }
        }
        let mut uf = UnionFind::new(m);
        for g in (0..m).filter(|&g| sizes[g] < min_size) {
            let candidates: Vec<usize> = if adjacent[g].is_empty() {
                (0..m).filter(|&h| h != g).collect()
            } else {
                adjacent[g].clone()
            };
            let target = candidates
                .into_iter()
                .min_by(|&a, &b| {
                    norm3(&cents[g], &cents[a])
                        .total_cmp(&norm3(&cents[g], &cents[b]))
                        .then(a.cmp(&b))
                })
                .expect("at least two groups");
            uf.union(g, target);
        }
        let merged = uf.labels();
        let relabeled: Vec<usize> = groups.iter().map(|&g| merged[g]).collect();
        part = SuperPointPartition::from_labels(&relabeled)?;
    }
}

/// Fraction of points that carry their group's majority label.
pub fn partition_purity(part: &SuperPointPartition, labels: &[usize]) -> Result<f64> {
    if labels.len() != part.num_points() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} points",
            labels.len(),
            part.num_points()
        )));
    }
    let num_labels = labels.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![vec![0usize; num_labels]; part.num_groups()];
    for (&g, &l) in part.group_of().iter().zip(labels) {
        counts[g][l] += 1;
    }
    let majority: usize = counts
        .iter()
        .map(|c| c.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / labels.len() as f64)
}
