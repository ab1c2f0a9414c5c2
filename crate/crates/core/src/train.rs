//! Consistency training with adaptive pseudo-labeling.
//!
//! Per scene and step: draw two views, predict both, build point-wise and
//! super-point pseudo-labels from view A, supervise view A with the weak
//! labels and view B with the blended pseudo-label loss, then take one Adam
//! step per batch of scenes.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{sample_view, AugmentPolicy};
use crate::error::{Error, Result};
use crate::eval::{evaluate, PseudoCounts};
use crate::losses::{
    adaptive_weight, ce_logit_grad, ce_loss, combined_pl_loss, combined_pseudo_logit_grad, pl_loss,
    pointwise_pseudolabel, sp_pl_loss, superpoint_pseudolabel, total_loss,
};
use crate::model::{
    adam_step, architecture, backward, extract_features, forward_cached, AdamConfig, AdamState, Gradients,
    MlpParams,
};
use crate::seed::{derive_seed, stream_rng, AUGMENT_A, AUGMENT_B, INIT, SHUFFLE};
use crate::types::{PointCloud, SuperPointPartition, WeakLabels};

/// Training variants used for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Ablation {
    /// Adaptive schedule with the configured divisor.
    #[default]
    Full,
    /// Supervised loss on view A only; no second view, no pseudo-labels.
    NoConsistency,
    /// Constant super-point weight.
    FixedW(f64),
    /// Adaptive schedule with a different (usually smaller) divisor.
    FastDecay(usize),
}

impl Ablation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Ablation::FixedW(w) if !(0.0..=1.0).contains(&w) => {
                Err(Error::InvalidConfig(format!("fixed w must be in [0, 1], got {w}")))
            }
            Ablation::FastDecay(0) => Err(Error::InvalidConfig("fast-decay divisor must be >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn uses_consistency(&self) -> bool {
        !matches!(self, Ablation::NoConsistency)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ablation::Full => write!(f, "full"),
            Ablation::NoConsistency => write!(f, "no-consistency"),
            Ablation::FixedW(w) => write!(f, "fixed-w:{w}"),
            Ablation::FastDecay(d) => write!(f, "fast-decay:{d}"),
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown ablation {s:?}"));
        let a = match s.split_once(':') {
            None if s == "full" => Ablation::Full,
            None if s == "no-consistency" => Ablation::NoConsistency,
            Some(("fixed-w", v)) => Ablation::FixedW(v.parse().map_err(|_| bad())?),
            Some(("fast-decay", v)) => Ablation::FastDecay(v.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        a.validate()?;
        Ok(a)
    }
}

impl Serialize for Ablation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Ablation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Point-wise confidence threshold.
    pub tau: f64,
    /// Super-point confidence threshold.
    pub tau_sp: f64,
    /// Weight of the pseudo-label loss.
    pub lambda: f64,
    /// Decay ratio of the adaptive weight.
    pub alpha: f64,
    /// The schedule uses `floor(k / epoch_divisor)` as its epoch count.
    pub epoch_divisor: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub hidden: usize,
    /// Neighborhood size of the point features.
    pub k_feat: usize,
    pub adam: AdamConfig,
    pub augment: AugmentPolicy,
    /// Extra multiplier on the augmentation strength of views A and B.
    pub view_strength: [f64; 2],
    /// Validate every this many epochs (and after the last); 0 disables.
    pub val_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.95,
            tau_sp: 0.95,
            lambda: 1.0,
            alpha: 1.0,
            epoch_divisor: 32,
            epochs: 128,
            batch_size: 4,
            seed: 0,
            ablation: Ablation::Full,
            hidden: 64,
            k_feat: 8,
            adam: AdamConfig::default(),
            augment: AugmentPolicy::default(),
            view_strength: [1.0, 1.0],
            val_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be in (0, 1], got {v}")))
            }
        };
        unit("tau", self.tau)?;
        unit("tau_sp", self.tau_sp)?;
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig("lambda must be >= 0".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be > 0".into()));
        }
        if self.epoch_divisor == 0 || self.batch_size == 0 || self.hidden == 0 || self.k_feat == 0 {
            return Err(Error::InvalidConfig(
                "epoch_divisor, batch_size, hidden and k_feat must be >= 1".into(),
            ));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.view_strength.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidConfig("view strengths must be >= 0".into()));
        }
        self.ablation.validate()?;
        self.augment.validate()?;
        for s in self.view_strength {
            self.view_policy(s).validate()?;
        }
        Ok(())
    }

    /// Super-point weight at 0-based epoch `k` under the configured ablation.
    pub fn weight_at(&self, k: usize) -> f64 {
        match self.ablation {
            Ablation::Full | Ablation::NoConsistency => adaptive_weight(k, self.alpha, self.epoch_divisor),
            Ablation::FixedW(w) => w,
            Ablation::FastDecay(d) => adaptive_weight(k, self.alpha, d),
        }
    }

    fn view_policy(&self, strength: f64) -> AugmentPolicy {
        AugmentPolicy {
            strength: self.augment.strength * strength,
            ..self.augment.clone()
        }
    }

    pub fn policy_a(&self) -> AugmentPolicy {
        self.view_policy(self.view_strength[0])
    }

    pub fn policy_b(&self) -> AugmentPolicy {
        self.view_policy(self.view_strength[1])
    }
}

/// Seeds of the two views of scene `scene` at epoch `epoch`; always distinct.
pub fn view_seeds(root: u64, epoch: usize, scene: usize) -> (u64, u64) {
    let idx = [epoch as u64, scene as u64];
    let a = derive_seed(root, AUGMENT_A, &idx);
    let mut b = derive_seed(root, AUGMENT_B, &idx);
    if a == b {
        b = b.wrapping_add(1);
    }
    (a, b)
}

/// Scene visiting order of an epoch.
pub fn epoch_order(root: u64, epoch: usize, num_scenes: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..num_scenes).collect();
    order.shuffle(&mut stream_rng(root, SHUFFLE, &[epoch as u64]));
    order
}

/// A training scene: the clean cloud (dense labels kept for diagnostics
/// only), its weak labels and its super-points.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainScene {
    pub cloud: PointCloud,
    pub weak: WeakLabels,
    pub partition: SuperPointPartition,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<TrainScene>,
    pub val: Vec<PointCloud>,
}

impl Dataset {
    pub fn num_classes(&self) -> Result<usize> {
        let first = self
            .train
            .first()
            .map(|s| s.cloud.num_classes())
            .or_else(|| self.val.first().map(PointCloud::num_classes))
            .ok_or_else(|| Error::Missing("dataset has no scenes".into()))?;
        let consistent = self.train.iter().all(|s| s.cloud.num_classes() == first)
            && self.val.iter().all(|c| c.num_classes() == first);
        if !consistent {
            return Err(Error::ShapeMismatch("scenes disagree on the class count".into()));
        }
        Ok(first)
    }
}

/// One row of the metrics history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub w: f64,
    pub l_ce: f64,
    pub l_pl: f64,
    pub l_pl_sp: f64,
    pub l_total: f64,
    pub mask_rate: f64,
    pub sp_mask_rate: f64,
    /// Masked accuracy of the point-wise pseudo-labels against ground truth.
    pub pl_accuracy: Option<f64>,
    /// Masked accuracy of the super-point pseudo-labels against ground truth.
    pub sp_pl_accuracy: Option<f64>,
    pub val_miou: Option<f64>,
}

/// Loss values and gradients of one scene.
#[derive(Debug, Clone)]
pub struct SceneStep {
    pub grads: Gradients,
    pub l_ce: f64,
    pub l_pl: f64,
    pub l_pl_sp: f64,
    pub l_total: f64,
    pub pointwise: PseudoCounts,
    pub superpoint: PseudoCounts,
}

/// Forward, pseudo-labeling and backward for one scene at super-point
/// weight `w`. `views` holds view A and, with consistency, view B.
pub fn scene_step(
    params: &MlpParams,
    config: &TrainConfig,
    scene: &TrainScene,
    view_a: &PointCloud,
    view_b: Option<&PointCloud>,
    w: f64,
) -> Result<SceneStep> {
    let cache_a = forward_cached(params, &extract_features(view_a, config.k_feat))?;
    let qa = &cache_a.probs;
    let l_ce = ce_loss(qa, &scene.weak)?;
    let mut grads = backward(params, &cache_a, &ce_logit_grad(qa, &scene.weak)?);

    // Targets come from view A's predictions as plain values.
    let pointwise = pointwise_pseudolabel(qa, config.tau);
    let superpoint = superpoint_pseudolabel(qa, &scene.partition, config.tau_sp)?;
    let (pw_counts, sp_counts) = match scene.cloud.gt_labels() {
        Some(gt) => (PseudoCounts::tally(&pointwise, gt), PseudoCounts::tally(&superpoint, gt)),
        None => Default::default(),
    };

    let (l_pl, l_pl_sp, l_total) = match view_b {
        Some(view_b) => {
            let cache_b = forward_cached(params, &extract_features(view_b, config.k_feat))?;
            let qb = &cache_b.probs;
            let l_pl = pl_loss(qb, &pointwise)?;
            let l_pl_sp = sp_pl_loss(qb, &superpoint)?;
            let l_total = total_loss(l_ce, combined_pl_loss(l_pl, l_pl_sp, w), config.lambda);
            let logit_grad = combined_pseudo_logit_grad(qb, &pointwise, &superpoint, w, config.lambda);
            if logit_grad.iter().any(|&g| g != 0.0) {
                grads.add_scaled(&backward(params, &cache_b, &logit_grad), 1.0);
            }
            (l_pl, l_pl_sp, l_total)
        }
        None => (0.0, 0.0, l_ce),
    };
    Ok(SceneStep {
        grads,
        l_ce,
        l_pl,
        l_pl_sp,
        l_total,
        pointwise: pw_counts,
        superpoint: sp_counts,
    })
}

/// Model, optimizer state and epoch counter of a run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: MlpParams,
    pub adam: AdamState,
    pub epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, num_classes: usize) -> Result<Self> {
        config.validate()?;
        let params = MlpParams::init(
            &architecture(config.hidden, num_classes),
            derive_seed(config.seed, INIT, &[]),
        )?;
        let adam = AdamState::new(&params);
        Ok(Self {
            config,
            params,
            adam,
            epoch: 0,
        })
    }

    pub fn train_epoch(&mut self, data: &Dataset) -> Result<EpochMetrics> {
        let cfg = &self.config;
        let k = self.epoch;
        let w = cfg.weight_at(k);
        let consistency = cfg.ablation.uses_consistency();
        let (policy_a, policy_b) = (cfg.policy_a(), cfg.policy_b());

        let order: Vec<usize> = epoch_order(cfg.seed, k, data.train.len())
            .into_iter()
            .filter(|&i| {
                let empty = data.train[i].weak.is_empty();
                if empty {
                    log::warn!("scene {i} has no weak labels; skipped");
                }
                !empty
            })
            .collect();

        let mut sums = [0.0f64; 4];
        let mut pw = PseudoCounts::default();
        let mut sp = PseudoCounts::default();
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = self.params.zeros_like();
            for &i in batch {
                let scene = &data.train[i];
                let (seed_a, seed_b) = view_seeds(cfg.seed, k, i);
                let view_a = sample_view(&scene.cloud, &policy_a, seed_a)?;
                let view_b = if consistency {
                    Some(sample_view(&scene.cloud, &policy_b, seed_b)?)
                } else {
                    None
                };
                let step = scene_step(&self.params, cfg, scene, &view_a, view_b.as_ref(), w)?;
                grads.add_scaled(&step.grads, 1.0);
                for (acc, v) in sums.iter_mut().zip([step.l_ce, step.l_pl, step.l_pl_sp, step.l_total]) {
                    *acc += v;
                }
                pw.merge(&step.pointwise);
                sp.merge(&step.superpoint);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut self.params, &grads, &mut self.adam, &cfg.adam);
        }

        let scenes = order.len().max(1) as f64;
        let last = k + 1 == cfg.epochs;
        let val_miou = if cfg.val_every > 0 && !data.val.is_empty() && ((k + 1) % cfg.val_every == 0 || last) {
            Some(evaluate(&self.params, &data.val, cfg.k_feat)?.miou)
        } else {
            None
        };
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch: k,
            w,
            l_ce: sums[0] / scenes,
            l_pl: sums[1] / scenes,
            l_pl_sp: sums[2] / scenes,
            l_total: sums[3] / scenes,
            mask_rate: pw.mask_rate(),
            sp_mask_rate: sp.mask_rate(),
            pl_accuracy: pw.masked_accuracy(),
            sp_pl_accuracy: sp.masked_accuracy(),
            val_miou,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub history: Vec<EpochMetrics>,
}

/// Runs `config.epochs` epochs from a fresh initialization.
pub fn run_training(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    run_training_with(config, data, |_, _| Ok::<(), Error>(()))
}

/// Like [`run_training`], calling `on_epoch` after every epoch (for
/// checkpointing or progress logging). Errors from the callback abort the
/// run.
pub fn run_training_with<F, E>(config: &TrainConfig, data: &Dataset, mut on_epoch: F) -> std::result::Result<TrainOutcome, E>
where
    F: FnMut(&Trainer, &EpochMetrics) -> std::result::Result<(), E>,
    E: From<Error>,
{
    let mut trainer = Trainer::new(config.clone(), data.num_classes()?)?;
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let m = trainer.train_epoch(data)?;
        on_epoch(&trainer, &m)?;
        history.push(m);
    }
    Ok(TrainOutcome {
        params: trainer.params,
        history,
    })
}

/// Gradient of `sum_i weight_i * -ln q[row_i, class_i]` at the logits, for
/// callers that assemble custom objectives.
pub fn weighted_ce_logit_grad(q: &crate::types::ProbMatrix, targets: &[(usize, usize, f64)]) -> Array2<f64> {
    let mut grad = Array2::zeros((q.nrows(), q.ncols()));
    for &(i, c, wgt) in targets {
        crate::losses::add_fused_ce_grad(&mut grad, q, i, c, wgt);
    }
    grad
}
