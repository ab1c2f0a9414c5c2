//! Segmentation metrics and pseudo-label diagnostics.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{extract_features, forward, MlpParams};
use crate::types::{row_argmax, PointCloud, PseudoLabel};

/// `C x C` counts; entry `(i, j)` counts points with ground truth `i`
/// predicted as `j`.
pub fn confusion_matrix(pred: &[usize], gt: &[usize], c: usize) -> Result<Array2<u64>> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} labels",
            pred.len(),
            gt.len()
        )));
    }
    let mut conf = Array2::zeros((c, c));
    for (index, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        for class in [p, g] {
            if class >= c {
                return Err(Error::ClassOutOfRange {
                    index,
                    class,
                    num_classes: c,
                });
            }
        }
        conf[[g, p]] += 1;
    }
    Ok(conf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoUReport {
    /// `None` for classes absent from both ground truth and predictions.
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl IoUReport {
    pub fn num_points(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Plain-text table: one row per class, then the mean.
    pub fn to_table(&self) -> String {
        let mut out = String::from("class\tiou\tgt_points\tpred_points\n");
        for (c, iou) in self.per_class_iou.iter().enumerate() {
            let gt: u64 = self.confusion[c].iter().sum();
            let pred: u64 = self.confusion.iter().map(|r| r[c]).sum();
            let iou = iou.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!("{c}\t{iou}\t{gt}\t{pred}\n"));
        }
        out.push_str(&format!("mIoU\t{:.6}\t{}\t{}\n", self.miou, self.num_points(), self.num_points()));
        out
    }
}

/// Per-class `TP / (TP + FP + FN)`; classes with an empty union are left out
/// of the mean.
pub fn miou(conf: &Array2<u64>) -> Result<IoUReport> {
    let c = conf.nrows();
    if conf.ncols() != c {
        return Err(Error::ShapeMismatch("confusion matrix is not square".into()));
    }
    let per_class_iou: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let tp = conf[[k, k]];
            let fn_: u64 = conf.row(k).sum() - tp;
            let fp: u64 = conf.column(k).sum() - tp;
            let union = tp + fp + fn_;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    let defined: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMiou);
    }
    let miou = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(IoUReport {
        per_class_iou,
        miou,
        confusion: conf.rows().into_iter().map(|r| r.to_vec()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabelAccuracy {
    /// Accuracy over masked-in points; `None` when the mask is empty.
    pub masked: Option<f64>,
    pub unmasked: f64,
    pub mask_rate: f64,
}

pub fn pseudolabel_accuracy(pseudo: &PseudoLabel, gt: &[usize]) -> Result<PseudoLabelAccuracy> {
    if pseudo.len() != gt.len() || gt.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} pseudo-labels vs {} labels",
            pseudo.len(),
            gt.len()
        )));
    }
    let counts = PseudoCounts::tally(pseudo, gt);
    Ok(PseudoLabelAccuracy {
        masked: counts.masked_accuracy(),
        unmasked: counts.correct as f64 / counts.total as f64,
        mask_rate: counts.masked as f64 / counts.total as f64,
    })
}

/// Raw counts behind [`PseudoLabelAccuracy`], summable across scenes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PseudoCounts {
    pub total: u64,
    pub correct: u64,
    pub masked: u64,
    pub masked_correct: u64,
}

impl PseudoCounts {
    pub fn tally(pseudo: &PseudoLabel, gt: &[usize]) -> Self {
        let mut c = Self::default();
        for ((&p, &m), &g) in pseudo.classes.iter().zip(&pseudo.mask).zip(gt) {
            c.total += 1;
            c.correct += u64::from(p == g);
            c.masked += u64::from(m);
            c.masked_correct += u64::from(m && p == g);
        }
        c
    }

    pub fn merge(&mut self, other: &Self) {
        self.total += other.total;
        self.correct += other.correct;
        self.masked += other.masked;
        self.masked_correct += other.masked_correct;
    }

    pub fn masked_accuracy(&self) -> Option<f64> {
        (self.masked > 0).then(|| self.masked_correct as f64 / self.masked as f64)
    }

    pub fn mask_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.masked as f64 / self.total as f64
        }
    }
}

/// Inference on an un-augmented cloud: one forward pass, argmax per point.
pub fn predict(params: &MlpParams, cloud: &PointCloud, k_feat: usize) -> Result<Vec<usize>> {
    if cloud.num_classes() != params.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "model predicts {} classes, scene has {}",
            params.num_classes(),
            cloud.num_classes()
        )));
    }
    let q = forward(params, &extract_features(cloud, k_feat))?;
    Ok(row_argmax(&q).0)
}

/// Summed confusion over all scenes, then mIoU.
pub fn evaluate(params: &MlpParams, scenes: &[PointCloud], k_feat: usize) -> Result<IoUReport> {
    let c = params.num_classes();
    let mut total = Array2::zeros((c, c));
    for scene in scenes {
        let gt = scene
            .gt_labels()
            .ok_or_else(|| Error::Missing("evaluation scene has no ground truth".into()))?;
        let pred = predict(params, scene, k_feat)?;
        total += &confusion_matrix(&pred, gt, c)?;
    }
    miou(&total)
}
