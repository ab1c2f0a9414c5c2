//! Domain types shared by every stage of the pipeline.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards, so they can be shared freely between workers.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Tolerance on row sums accepted by [`ProbMatrix::new`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A scene: `N` points with xyz positions, rgb colors and optional dense
/// ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<[f64; 3]>,
    colors: Vec<[f64; 3]>,
    gt_labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl PointCloud {
    pub fn new(
        positions: Vec<[f64; 3]>,
        colors: Vec<[f64; 3]>,
        gt_labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Degenerate("point cloud has no points".into()));
        }
        if positions.len() != colors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} positions vs {} colors",
                positions.len(),
                colors.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        for (i, p) in positions.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("position of point {i}")));
            }
        }
        for (i, c) in colors.iter().enumerate() {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Degenerate(format!(
                    "color of point {i} outside [0, 1]: {c:?}"
                )));
            }
        }
        if let Some(labels) = &gt_labels {
            if labels.len() != positions.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} points",
                    labels.len(),
                    positions.len()
                )));
            }
            check_classes(labels, num_classes)?;
        }
        Ok(Self {
            positions,
            colors,
            gt_labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// Always false; a cloud holds at least one point.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn colors(&self) -> &[[f64; 3]] {
        &self.colors
    }

    pub fn gt_labels(&self) -> Option<&[usize]> {
        self.gt_labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for (acc, v) in c.iter_mut().zip(p) {
                *acc += v;
            }
        }
        c.map(|v| v / n)
    }

    /// Same labels and class count with new geometry and color. Used by the
    /// augmentations, which never reorder points.
    pub(crate) fn with_attributes(&self, positions: Vec<[f64; 3]>, colors: Vec<[f64; 3]>) -> Self {
        debug_assert_eq!(positions.len(), self.len());
        debug_assert_eq!(colors.len(), self.len());
        Self {
            positions,
            colors,
            gt_labels: self.gt_labels.clone(),
            num_classes: self.num_classes,
        }
    }

    /// Drops ground truth, e.g. to build an inference-only input.
    pub fn without_labels(&self) -> Self {
        Self {
            gt_labels: None,
            ..self.clone()
        }
    }
}

fn check_classes(labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().position(|&c| c >= num_classes) {
        Some(index) => Err(Error::ClassOutOfRange {
            index,
            class: labels[index],
            num_classes,
        }),
        None => Ok(()),
    }
}

/// The sparse labeled set `L` and its classes. The unlabeled set is the
/// complement and is never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakLabels {
    indices: Vec<usize>,
    classes: Vec<usize>,
}

impl WeakLabels {
    pub fn new(indices: Vec<usize>, classes: Vec<usize>) -> Result<Self> {
        if indices.len() != classes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} indices vs {} classes",
                indices.len(),
                classes.len()
            )));
        }
        if let Some(pos) = indices.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedIndices(pos + 1));
        }
        Ok(Self { indices, classes })
    }

    /// Builds from unordered `(index, class)` pairs.
    pub fn from_pairs(mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.sort_unstable();
        let (indices, classes) = pairs.into_iter().unzip();
        Self::new(indices, classes)
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
            classes: Vec::new(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices.iter().copied().zip(self.classes.iter().copied())
    }

    /// Checks the labels against a cloud of `n` points and `c` classes.
    pub fn validate(&self, n: usize, c: usize) -> Result<()> {
        for (index, class) in self.iter() {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, len: n });
            }
            if class >= c {
                return Err(Error::ClassOutOfRange {
                    index,
                    class,
                    num_classes: c,
                });
            }
        }
        Ok(())
    }
}

/// One-hot extension of weak labels: row `i` is the unit vector of `y_i` for
/// labeled points and zero elsewhere.
pub fn one_hot_extend(weak: &WeakLabels, n: usize, c: usize) -> Result<Array2<f64>> {
    weak.validate(n, c)?;
    let mut y = Array2::zeros((n, c));
    for (i, class) in weak.iter() {
        y[[i, class]] = 1.0;
    }
    Ok(y)
}

/// A row-stochastic `N x C` matrix of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix(Array2<f64>);

impl ProbMatrix {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(Error::Degenerate("empty probability matrix".into()));
        }
        for (row, r) in probs.rows().into_iter().enumerate() {
            if r.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::NotRowStochastic {
                    row,
                    sum: r.sum(),
                });
            }
            let sum = r.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NotRowStochastic { row, sum });
            }
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize, c: usize) -> Self {
        Self(Array2::from_elem((n, c), 1.0 / c as f64))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.0[[i, c]]
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Index of the largest entry (lowest index on ties) and the entry itself.
pub fn argmax(row: ArrayView1<'_, f64>) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (c, v);
        }
    }
    best
}

/// Per-row argmax class and its probability.
pub fn row_argmax(q: &ProbMatrix) -> (Vec<usize>, Vec<f64>) {
    q.0.rows().into_iter().map(argmax).unzip()
}

/// A partition of the points into `M` disjoint, non-empty super-points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperPointPartition {
    group_of: Vec<usize>,
    num_groups: usize,
}

impl SuperPointPartition {
    /// Requires ids in `0..num_groups` with every group non-empty.
    pub fn new(group_of: Vec<usize>, num_groups: usize) -> Result<Self> {
        if group_of.is_empty() {
            return Err(Error::Degenerate("partition of zero points".into()));
        }
        let mut seen = vec![false; num_groups];
        for &g in &group_of {
            if g >= num_groups {
                return Err(Error::IndexOutOfRange {
                    index: g,
                    len: num_groups,
                });
            }
            seen[g] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(Error::Degenerate(format!("super-point {g} is empty")));
        }
        Ok(Self {
            group_of,
            num_groups,
        })
    }

    /// Relabels arbitrary ids to `0..M` in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut remap = std::collections::HashMap::new();
        let group_of: Vec<usize> = labels
            .iter()
            .map(|&l| {
                let next = remap.len();
                *remap.entry(l).or_insert(next)
            })
            .collect();
        let m = remap.len();
        Self::new(group_of, m)
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            group_of: (0..n).collect(),
            num_groups: n,
        }
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn num_points(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_groups];
        for &g in &self.group_of {
            sizes[g] += 1;
        }
        sizes
    }

    /// Member point indices of every group, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_groups];
        for (i, &g) in self.group_of.iter().enumerate() {
            groups[g].push(i);
        }
        groups
    }
}

/// Hard pseudo-label targets with an inclusion mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub classes: Vec<usize>,
    pub mask: Vec<bool>,
    pub confidences: Vec<f64>,
}

impl PseudoLabel {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}
