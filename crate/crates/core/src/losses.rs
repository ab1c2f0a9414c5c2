//! The loss stack: supervised cross-entropy on the labeled points, masked
//! point-wise pseudo-labels, super-point vote pseudo-labels, and the adaptive
//! blend of the two pseudo-label losses.
//!
//! Pseudo-labels are plain values: they are built from one view's
//! predictions and then used as constant targets for the other view, so no
//! gradient flows through their construction.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{argmax, row_argmax, ProbMatrix, PseudoLabel, SuperPointPartition, WeakLabels};

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// `-ln q`, with `q` floored at [`LOG_FLOOR`].
pub fn neg_log(q: f64) -> f64 {
    -q.max(LOG_FLOOR).ln()
}

/// Mean cross-entropy over the labeled points.
pub fn ce_loss(q: &ProbMatrix, weak: &WeakLabels) -> Result<f64> {
    if weak.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    weak.validate(q.nrows(), q.ncols())?;
    let sum: f64 = weak.iter().map(|(i, y)| neg_log(q.get(i, y))).sum();
    Ok(sum / weak.len() as f64)
}

/// `m_i = 1` iff the row maximum reaches `tau` (inclusive).
pub fn confidence_mask(qa: &ProbMatrix, tau: f64) -> Vec<bool> {
    qa.view()
        .rows()
        .into_iter()
        .map(|r| argmax(r).1 >= tau)
        .collect()
}

/// Hard point-wise pseudo-labels: row argmax with the confidence mask.
pub fn pointwise_pseudolabel(qa: &ProbMatrix, tau: f64) -> PseudoLabel {
    let (classes, confidences) = row_argmax(qa);
    let mask = confidences.iter().map(|&c| c >= tau).collect();
    PseudoLabel {
        classes,
        mask,
        confidences,
    }
}

fn masked_ce(q: &ProbMatrix, pseudo: &PseudoLabel) -> Result<f64> {
    if pseudo.len() != q.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} pseudo-labels for {} predictions",
            pseudo.len(),
            q.nrows()
        )));
    }
    let sum: f64 = (0..q.nrows())
        .filter(|&i| pseudo.mask[i])
        .map(|i| neg_log(q.get(i, pseudo.classes[i])))
        // An empty f64 `sum()` is -0.0; an empty mask should give +0.0.
        .fold(0.0, |acc, v| acc + v);
    Ok(sum / q.nrows() as f64)
}

/// Masked pseudo-label cross-entropy, normalized by the point count `N`
/// (not by the number of masked-in points).
pub fn pl_loss(qb: &ProbMatrix, pseudo: &PseudoLabel) -> Result<f64> {
    masked_ce(qb, pseudo)
}

/// Super-point vote pseudo-labels.
///
/// Each group averages its rows of `q`; the argmax of the average (lowest
/// index on ties) becomes the label of every member, and every member
/// shares the group's mask bit `max(mean) >= tau_sp`.
pub fn superpoint_pseudolabel(
    q: &ProbMatrix,
    part: &SuperPointPartition,
    tau_sp: f64,
) -> Result<PseudoLabel> {
    let n = q.nrows();
    if part.num_points() != n {
        return Err(Error::ShapeMismatch(format!(
            "partition covers {} points, predictions have {n}",
            part.num_points()
        )));
    }
    let c = q.ncols();
    let mut sums = vec![vec![CompensatedSum::default(); c]; part.num_groups()];
    for (i, &g) in part.group_of().iter().enumerate() {
        for (acc, &v) in sums[g].iter_mut().zip(q.row(i)) {
            acc.add(v);
        }
    }
    let sizes = part.group_sizes();
    let votes: Vec<(usize, f64)> = sums
        .iter()
        .zip(&sizes)
        .map(|(row, &s)| {
            let mean: ndarray::Array1<f64> = row.iter().map(|acc| acc.value() / s as f64).collect();
            argmax(mean.view())
        })
        .collect();

    let mut classes = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut confidences = Vec::with_capacity(n);
    for &g in part.group_of() {
        let (class, conf) = votes[g];
        classes.push(class);
        mask.push(conf >= tau_sp);
        confidences.push(conf);
    }
    Ok(PseudoLabel {
        classes,
        mask,
        confidences,
    })
}

/// Neumaier-compensated running sum, so group means of probabilities are
/// (nearly always) correctly rounded and thresholds behave as on paper.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Super-point pseudo-label cross-entropy, normalized by `N` like
/// [`pl_loss`].
pub fn sp_pl_loss(qb: &ProbMatrix, sp_pseudo: &PseudoLabel) -> Result<f64> {
    masked_ce(qb, sp_pseudo)
}

/// Inverse-decay weight of the super-point loss at epoch `k`.
///
/// With `e = floor(k / divisor)` the weight is `min(1, alpha / e)`, and 1
/// while `e = 0`.
pub fn adaptive_weight(k: usize, alpha: f64, divisor: usize) -> f64 {
    let e = k / divisor.max(1);
    if e < 1 {
        1.0
    } else {
        (alpha / e as f64).min(1.0)
    }
}

/// `w * L_sp + (1 - w) * L_pl`, evaluated as `L_pl + w (L_sp - L_pl)` so
/// that `w = 0`, `w = 1` and equal inputs come out exact.
pub fn combined_pl_loss(l_pl: f64, l_pl_sp: f64, w: f64) -> f64 {
    if w == 1.0 {
        l_pl_sp
    } else {
        l_pl + w * (l_pl_sp - l_pl)
    }
}

pub fn total_loss(l_ce: f64, l_pl_prime: f64, lambda: f64) -> f64 {
    l_ce + lambda * l_pl_prime
}

/// Adds `weight * (q_i - onehot(class))` to row `i` of `grad`: the gradient
/// of `weight * -ln softmax(z)_class` with respect to the logits `z`.
pub fn add_fused_ce_grad(grad: &mut Array2<f64>, q: &ProbMatrix, i: usize, class: usize, weight: f64) {
    let mut row = grad.row_mut(i);
    row.scaled_add(weight, &q.row(i));
    row[class] -= weight;
}

/// Logit gradient of [`ce_loss`].
pub fn ce_logit_grad(q: &ProbMatrix, weak: &WeakLabels) -> Result<Array2<f64>> {
    if weak.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    weak.validate(q.nrows(), q.ncols())?;
    let mut grad = Array2::zeros((q.nrows(), q.ncols()));
    let w = 1.0 / weak.len() as f64;
    for (i, y) in weak.iter() {
        add_fused_ce_grad(&mut grad, q, i, y, w);
    }
    Ok(grad)
}

/// Adds `scale * d pl_loss / d logits` for the given pseudo-labels; masked
/// out points receive nothing.
pub fn add_pseudo_logit_grad(grad: &mut Array2<f64>, q: &ProbMatrix, pseudo: &PseudoLabel, scale: f64) {
    if scale == 0.0 {
        return;
    }
    let w = scale / q.nrows() as f64;
    for i in (0..q.nrows()).filter(|&i| pseudo.mask[i]) {
        add_fused_ce_grad(grad, q, i, pseudo.classes[i], w);
    }
}

/// Logit gradient of `lambda * combined_pl_loss(pl, sp, w)` on view B.
///
/// Rows where both pseudo-labels are masked in and agree get one fused
/// target of weight `lambda * ((1 - w) + w) / N`; that sum is exactly 1 in
/// floating point, so such rows do not depend on `w` at all.
pub fn combined_pseudo_logit_grad(
    q: &ProbMatrix,
    pointwise: &PseudoLabel,
    superpoint: &PseudoLabel,
    w: f64,
    lambda: f64,
) -> Array2<f64> {
    let n = q.nrows() as f64;
    let mut grad = Array2::zeros((q.nrows(), q.ncols()));
    if lambda == 0.0 {
        return grad;
    }
    let (w_pl, w_sp) = (1.0 - w, w);
    for i in 0..q.nrows() {
        let (pm, sm) = (pointwise.mask[i], superpoint.mask[i]);
        if pm && sm && pointwise.classes[i] == superpoint.classes[i] {
            add_fused_ce_grad(&mut grad, q, i, pointwise.classes[i], lambda * (w_pl + w_sp) / n);
            continue;
        }
        if pm && w_pl != 0.0 {
            add_fused_ce_grad(&mut grad, q, i, pointwise.classes[i], lambda * w_pl / n);
        }
        if sm && w_sp != 0.0 {
            add_fused_ce_grad(&mut grad, q, i, superpoint.classes[i], lambda * w_sp / n);
        }
    }
    grad
}
