//! Synthetic labeled scenes and weak-label samplers.
//!
//! A scene is a set of object instances, each an axis-aligned box or
//! ellipsoid filled with points. Every class has a base color and a height
//! level; instances perturb the base color and points add color noise, so
//! per-point colors of different classes overlap while neighborhood
//! statistics stay informative.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::types::{PointCloud, WeakLabels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub num_classes: usize,
    pub num_instances: usize,
    pub classes_present: Vec<usize>,
    /// Inclusive range of points sampled per instance.
    pub points_per_instance: (usize, usize),
    /// Inclusive range of per-axis half extents, meters.
    pub half_extent_range: (f64, f64),
    /// Instance centers are drawn in `[0, room_size]^2` on the floor plane.
    pub room_size: f64,
    /// Vertical spacing between class height levels, meters.
    pub level_height: f64,
    pub noise_sigma: f64,
    pub color_noise_sigma: f64,
    /// Spread of an instance's color around its class base color.
    pub instance_color_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        if self.num_instances == 0 {
            return Err(Error::InvalidConfig("num_instances must be >= 1".into()));
        }
        if self.classes_present.is_empty() {
            return Err(Error::InvalidConfig("classes_present is empty".into()));
        }
        if let Some(&c) = self.classes_present.iter().find(|&&c| c >= self.num_classes) {
            return Err(Error::InvalidConfig(format!(
                "class {c} not below num_classes {}",
                self.num_classes
            )));
        }
        let (lo, hi) = self.points_per_instance;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "points_per_instance range ({lo}, {hi}) is empty"
            )));
        }
        let (elo, ehi) = self.half_extent_range;
        if !(elo > 0.0) {
            return Err(Error::Degenerate(format!(
                "instance half extent {elo} gives zero volume"
            )));
        }
        if elo > ehi {
            return Err(Error::InvalidConfig(format!(
                "half_extent_range ({elo}, {ehi}) is empty"
            )));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("color_noise_sigma", self.color_noise_sigma),
            ("instance_color_sigma", self.instance_color_sigma),
            ("room_size", self.room_size),
            ("level_height", self.level_height),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Box,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub class: usize,
    pub shape: Shape,
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
}

impl Instance {
    /// Whether `p` lies in the closed primitive volume.
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        let eps = 1e-12;
        match self.shape {
            Shape::Box => (0..3).all(|a| (p[a] - self.center[a]).abs() <= self.half_extents[a] + eps),
            Shape::Ellipsoid => {
                let r: f64 = (0..3)
                    .map(|a| ((p[a] - self.center[a]) / self.half_extents[a]).powi(2))
                    .sum();
                r <= 1.0 + eps
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    /// Instance id per point, kept apart from the semantic labels.
    pub instance_ids: Vec<usize>,
    pub instances: Vec<Instance>,
}

/// Base color of a class: hues spread by the golden ratio, alternating
/// brightness.
pub fn class_color(class: usize) -> [f64; 3] {
    let hue = (class as f64 * 0.618_033_988_749_895).fract();
    let value = if class % 2 == 0 { 0.85 } else { 0.6 };
    hsv_to_rgb(hue, 0.65, value)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match (i as i64).rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn class_level(class: usize) -> usize {
    class % 3
}

fn clamp_unit(c: [f64; 3]) -> [f64; 3] {
    c.map(|v| v.clamp(0.0, 1.0))
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let pos_noise = normal(spec.noise_sigma);
    let col_noise = normal(spec.color_noise_sigma);
    let inst_noise = normal(spec.instance_color_sigma);

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    let mut instance_ids = Vec::new();
    let mut instances = Vec::with_capacity(spec.num_instances);

    for id in 0..spec.num_instances {
        let class = match spec.classes_present.get(id) {
            Some(&c) => c,
            None => spec.classes_present[rng.gen_range(0..spec.classes_present.len())],
        };
        let shape = if rng.gen_bool(0.5) {
            Shape::Box
        } else {
            Shape::Ellipsoid
        };
        let (elo, ehi) = spec.half_extent_range;
        let half_extents: [f64; 3] = std::array::from_fn(|_| rng.gen_range(elo..=ehi));
        let center = [
            rng.gen_range(0.0..=spec.room_size),
            rng.gen_range(0.0..=spec.room_size),
            class_level(class) as f64 * spec.level_height + half_extents[2],
        ];
        let base = class_color(class);
        let inst_color = clamp_unit(std::array::from_fn(|a| base[a] + inst_noise.sample(&mut rng)));
        let instance = Instance {
            class,
            shape,
            center,
            half_extents,
        };

        let count = rng.gen_range(spec.points_per_instance.0..=spec.points_per_instance.1);
        for _ in 0..count {
            let unit = match shape {
                Shape::Box => std::array::from_fn(|_| rng.gen_range(-1.0..=1.0)),
                Shape::Ellipsoid => sample_unit_ball(&mut rng),
            };
            let p: [f64; 3] = std::array::from_fn(|a| {
                center[a] + unit[a] * half_extents[a] + pos_noise.sample(&mut rng)
            });
            let c = clamp_unit(std::array::from_fn(|a| inst_color[a] + col_noise.sample(&mut rng)));
            positions.push(p);
            colors.push(c);
            labels.push(class);
            instance_ids.push(id);
        }
        instances.push(instance);
    }

    let cloud = PointCloud::new(positions, colors, Some(labels), spec.num_classes)?;
    Ok(Scene {
        cloud,
        instance_ids,
        instances,
    })
}

fn sample_unit_ball<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return v;
        }
    }
}

/// How weak labels are drawn from dense ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeakVariant {
    /// A fraction of the points, at least one per scene.
    Ratio(f64),
    /// A fixed number of points per scene.
    PointsPerScene(usize),
    /// One point per object instance.
    OneClickPerInstance,
}

impl WeakVariant {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeakVariant::Ratio(f) if !(f > 0.0 && f <= 1.0) => Err(Error::InvalidConfig(
                format!("label ratio must be in (0, 1], got {f}"),
            )),
            WeakVariant::PointsPerScene(0) => Err(Error::InvalidConfig(
                "points per scene must be >= 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for WeakVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeakVariant::Ratio(r) => write!(f, "ratio:{r}"),
            WeakVariant::PointsPerScene(k) => write!(f, "points:{k}"),
            WeakVariant::OneClickPerInstance => write!(f, "oneclick"),
        }
    }
}

impl std::str::FromStr for WeakVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown weak scheme {s:?}"));
        let variant = match s.split_once(':') {
            None if s == "oneclick" => WeakVariant::OneClickPerInstance,
            Some(("ratio", v)) => WeakVariant::Ratio(v.parse().map_err(|_| bad())?),
            Some(("points", v)) => WeakVariant::PointsPerScene(v.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        variant.validate()?;
        Ok(variant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakScheme {
    pub variant: WeakVariant,
    pub seed: u64,
}

pub fn sample_weak_labels(
    cloud: &PointCloud,
    instance_ids: Option<&[usize]>,
    scheme: &WeakScheme,
) -> Result<WeakLabels> {
    scheme.variant.validate()?;
    let gt = cloud
        .gt_labels()
        .ok_or_else(|| Error::Missing("weak labels need ground-truth labels".into()))?;
    let n = cloud.len();
    let mut rng = rng_from_seed(scheme.seed);

    let mut picked: Vec<usize> = match scheme.variant {
        WeakVariant::Ratio(f) => {
            let count = ((f * n as f64).round() as usize).clamp(1, n);
            index::sample(&mut rng, n, count).into_vec()
        }
        WeakVariant::PointsPerScene(k) => index::sample(&mut rng, n, k.min(n)).into_vec(),
        WeakVariant::OneClickPerInstance => {
            let ids = instance_ids
                .ok_or_else(|| Error::Missing("one-click sampling needs instance ids".into()))?;
            if ids.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} instance ids for {n} points",
                    ids.len()
                )));
            }
            let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for (i, &id) in ids.iter().enumerate() {
                members.entry(id).or_default().push(i);
            }
            members
                .values()
                .map(|m| m[rng.gen_range(0..m.len())])
                .collect()
        }
    };
    picked.sort_unstable();
    let classes = picked.iter().map(|&i| gt[i]).collect();
    WeakLabels::new(picked, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SceneSpec {
        SceneSpec {
            num_classes: 5,
            num_instances: 3,
            classes_present: vec![0, 2, 4],
            points_per_instance: (100, 100),
            half_extent_range: (0.2, 0.5),
            room_size: 4.0,
            level_height: 0.6,
            noise_sigma: 0.01,
            color_noise_sigma: 0.05,
            instance_color_sigma: 0.05,
            seed: 11,
        }
    }

    #[test]
    fn three_distinct_instances() {
        let scene = generate_scene(&spec()).unwrap();
        assert_eq!(scene.cloud.len(), 300);
        let mut classes: Vec<usize> = scene.cloud.gt_labels().unwrap().to_vec();
        classes.sort_unstable();
        classes.dedup();
        assert_eq!(classes, vec![0, 2, 4]);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_scene(&spec()).unwrap();
        let b = generate_scene(&spec()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneSpec { seed: 12, ..spec() }).unwrap();
        assert_ne!(a.cloud, c.cloud);
    }

    #[test]
    fn zero_noise_points_lie_in_primitive() {
        let s = SceneSpec {
            noise_sigma: 0.0,
            ..spec()
        };
        let scene = generate_scene(&s).unwrap();
        for (p, &id) in scene.cloud.positions().iter().zip(&scene.instance_ids) {
            assert!(scene.instances[id].contains(p));
        }
    }

    #[test]
    fn zero_volume_rejected() {
        let s = SceneSpec {
            half_extent_range: (0.0, 0.3),
            ..spec()
        };
        assert!(matches!(generate_scene(&s), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ratio_floors_at_one() {
        let s = SceneSpec {
            num_instances: 10,
            classes_present: vec![0, 1, 2, 3, 4],
            ..spec()
        };
        let scene = generate_scene(&s).unwrap();
        assert_eq!(scene.cloud.len(), 1000);
        let weak = sample_weak_labels(
            &scene.cloud,
            None,
            &WeakScheme {
                variant: WeakVariant::Ratio(0.001),
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(weak.len(), 1);
        let weak = sample_weak_labels(
            &scene.cloud,
            None,
            &WeakScheme {
                variant: WeakVariant::Ratio(0.0001),
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(weak.len(), 1);
    }

    #[test]
    fn one_click_per_instance() {
        let scene = generate_scene(&spec()).unwrap();
        let weak = sample_weak_labels(
            &scene.cloud,
            Some(&scene.instance_ids),
            &WeakScheme {
                variant: WeakVariant::OneClickPerInstance,
                seed: 5,
            },
        )
        .unwrap();
        assert_eq!(weak.len(), 3);
        let mut inst: Vec<usize> = weak.indices().iter().map(|&i| scene.instance_ids[i]).collect();
        inst.sort_unstable();
        assert_eq!(inst, vec![0, 1, 2]);
    }

    #[test]
    fn points_per_scene_labels_match_gt() {
        let scene = generate_scene(&spec()).unwrap();
        let weak = sample_weak_labels(
            &scene.cloud,
            None,
            &WeakScheme {
                variant: WeakVariant::PointsPerScene(20),
                seed: 9,
            },
        )
        .unwrap();
        assert_eq!(weak.len(), 20);
        let gt = scene.cloud.gt_labels().unwrap();
        for (i, c) in weak.iter() {
            assert_eq!(gt[i], c);
        }
    }

    #[test]
    fn missing_inputs_rejected() {
        let scene = generate_scene(&spec()).unwrap();
        let oneclick = WeakScheme {
            variant: WeakVariant::OneClickPerInstance,
            seed: 1,
        };
        assert!(sample_weak_labels(&scene.cloud, None, &oneclick).is_err());
        let unlabeled = scene.cloud.without_labels();
        let ratio = WeakScheme {
            variant: WeakVariant::Ratio(0.1),
            seed: 1,
        };
        assert!(sample_weak_labels(&unlabeled, None, &ratio).is_err());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("oneclick".parse::<WeakVariant>().unwrap(), WeakVariant::OneClickPerInstance);
        assert_eq!("ratio:0.01".parse::<WeakVariant>().unwrap(), WeakVariant::Ratio(0.01));
        assert_eq!("points:20".parse::<WeakVariant>().unwrap(), WeakVariant::PointsPerScene(20));
        assert!("ratio:0".parse::<WeakVariant>().is_err());
        assert!("points:0".parse::<WeakVariant>().is_err());
        assert!("clicks".parse::<WeakVariant>().is_err());
    }
}
