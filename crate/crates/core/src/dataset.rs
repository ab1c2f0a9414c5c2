//! Seeded synthetic datasets: scene generation per split, weak labels and
//! super-points, assembled into a [`Dataset`].

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, stream_rng, SCENEGEN, WEAKLABELS};
use crate::superpoint::{build_superpoints, ClusterConfig};
use crate::synth::{generate_scene, sample_weak_labels, Scene, SceneSpec, WeakScheme, WeakVariant};
use crate::train::{Dataset, TrainScene};
use crate::types::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }

    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
        }
    }
}

/// Distribution of scenes; each scene draws its instance count and class
/// subset from its own seed.
///
/// The default color noise is large against the spacing of class base
/// colors, so geometry and context matter and a small model does not
/// saturate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub num_train: usize,
    pub num_val: usize,
    pub num_classes: usize,
    /// Inclusive range of instances per scene.
    pub instances: (usize, usize),
    /// Distinct classes per scene, capped at the instance count.
    pub classes_per_scene: usize,
    pub points_per_instance: (usize, usize),
    pub half_extent_range: (f64, f64),
    pub room_size: f64,
    pub level_height: f64,
    pub noise_sigma: f64,
    pub color_noise_sigma: f64,
    pub instance_color_sigma: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_train: 50,
            num_val: 10,
            num_classes: 8,
            instances: (3, 5),
            classes_per_scene: 3,
            points_per_instance: (20, 40),
            half_extent_range: (0.15, 0.4),
            room_size: 3.0,
            level_height: 0.5,
            noise_sigma: 0.01,
            color_noise_sigma: 0.4,
            instance_color_sigma: 0.03,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.instances;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!("instances range ({lo}, {hi}) is empty")));
        }
        if self.classes_per_scene == 0 || self.classes_per_scene > self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "classes_per_scene must be in 1..={}",
                self.num_classes
            )));
        }
        if self.num_train + self.num_val == 0 {
            return Err(Error::InvalidConfig("dataset has no scenes".into()));
        }
        self.scene_spec(lo, vec![0], 0).validate()
    }

    fn scene_spec(&self, num_instances: usize, classes_present: Vec<usize>, seed: u64) -> SceneSpec {
        SceneSpec {
            num_classes: self.num_classes,
            num_instances,
            classes_present,
            points_per_instance: self.points_per_instance,
            half_extent_range: self.half_extent_range,
            room_size: self.room_size,
            level_height: self.level_height,
            noise_sigma: self.noise_sigma,
            color_noise_sigma: self.color_noise_sigma,
            instance_color_sigma: self.instance_color_sigma,
            seed,
        }
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.num_train,
            Split::Val => self.num_val,
        }
    }

    /// Spec of scene `i` of `split`, fully determined by `root`.
    pub fn scene_at(&self, root: u64, split: Split, i: usize) -> SceneSpec {
        let mut rng = stream_rng(root, SCENEGEN, &[split.index(), i as u64, 0]);
        let num_instances = rng.gen_range(self.instances.0..=self.instances.1);
        let k = self.classes_per_scene.min(num_instances);
        let mut classes = index::sample(&mut rng, self.num_classes, k).into_vec();
        classes.sort_unstable();
        let seed = derive_seed(root, SCENEGEN, &[split.index(), i as u64, 1]);
        self.scene_spec(num_instances, classes, seed)
    }

    pub fn generate(&self, root: u64, split: Split) -> Result<Vec<Scene>> {
        self.validate()?;
        (0..self.count(split))
            .map(|i| generate_scene(&self.scene_at(root, split, i)))
            .collect()
    }
}

/// Weak-label seed of training scene `i`.
pub fn weak_seed(root: u64, i: usize) -> u64 {
    derive_seed(root, WEAKLABELS, &[i as u64])
}

/// Samples weak labels and builds super-points for every training scene.
pub fn prepare_train_scenes(
    scenes: &[Scene],
    variant: WeakVariant,
    cluster: &ClusterConfig,
    root: u64,
) -> Result<Vec<TrainScene>> {
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let scheme = WeakScheme {
                variant,
                seed: weak_seed(root, i),
            };
            Ok(TrainScene {
                weak: sample_weak_labels(&s.cloud, Some(&s.instance_ids), &scheme)?,
                partition: build_superpoints(&s.cloud, cluster)?,
                cloud: s.cloud.clone(),
            })
        })
        .collect()
}

/// Generates both splits and prepares the training half.
pub fn build_dataset(spec: &DatasetSpec, variant: WeakVariant, cluster: &ClusterConfig, root: u64) -> Result<Dataset> {
    let train = spec.generate(root, Split::Train)?;
    let val: Vec<PointCloud> = spec.generate(root, Split::Val)?.into_iter().map(|s| s.cloud).collect();
    Ok(Dataset {
        train: prepare_train_scenes(&train, variant, cluster, root)?,
        val,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetSpec {
        DatasetSpec {
            num_train: 3,
            num_val: 2,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_split_dependent() {
        let spec = small();
        let a = spec.generate(5, Split::Train).unwrap();
        let b = spec.generate(5, Split::Train).unwrap();
        assert_eq!(a, b);
        let v = spec.generate(5, Split::Val).unwrap();
        assert_eq!(v.len(), 2);
        assert_ne!(a[0].cloud, v[0].cloud);
        assert_ne!(spec.generate(6, Split::Train).unwrap()[0].cloud, a[0].cloud);
    }

    #[test]
    fn scenes_follow_spec() {
        let spec = small();
        for i in 0..3 {
            let s = spec.scene_at(1, Split::Train, i);
            assert!((spec.instances.0..=spec.instances.1).contains(&s.num_instances));
            assert_eq!(s.classes_present.len(), spec.classes_per_scene);
            assert!(s.classes_present.iter().all(|&c| c < spec.num_classes));
        }
    }

    #[test]
    fn oneclick_dataset_labels_each_instance() {
        let spec = small();
        let data = build_dataset(&spec, WeakVariant::OneClickPerInstance, &ClusterConfig::default(), 2).unwrap();
        for (i, ts) in data.train.iter().enumerate() {
            let n_inst = spec.scene_at(2, Split::Train, i).num_instances;
            assert_eq!(ts.weak.len(), n_inst);
            assert_eq!(ts.partition.num_points(), ts.cloud.len());
        }
        assert_eq!(data.val.len(), 2);
    }

    #[test]
    fn invalid_spec_rejected() {
        for bad in [
            DatasetSpec { instances: (0, 3), ..small() },
            DatasetSpec { classes_per_scene: small().num_classes + 1, ..small() },
            DatasetSpec { half_extent_range: (0.0, 0.2), ..small() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
