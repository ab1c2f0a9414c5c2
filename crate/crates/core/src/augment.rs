//! Scene-level augmentations producing index-aligned views.
//!
//! Seven transform families are available: scaling, flipping, offsetting,
//! rotation about the vertical axis, affine shear, position jitter and color
//! jitter. Each view enables a random subset of them. Geometric transforms
//! act about the scene centroid and compose into a single affine map.
//! Points are never reordered, dropped or duplicated, so index `i` refers to
//! the same physical point in the source cloud and in every view.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::types::PointCloud;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|r| std::array::from_fn(|c| (0..3).map(|k| a[r][k] * b[k][c]).sum()))
}

pub fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|r| (0..3).map(|k| a[r][k] * v[k]).sum())
}

pub fn determinant(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    /// Isotropic scale factor range `[lo, hi]`.
    pub scale_range: (f64, f64),
    /// Maximum absolute rotation about z, radians.
    pub rotation: f64,
    /// Flip probability for the x and y axes.
    pub flip_prob: [f64; 2],
    /// Maximum absolute translation per axis, meters.
    pub offset_range: f64,
    /// Maximum absolute shear coefficient.
    pub affine_shear_range: f64,
    pub pos_jitter_sigma: f64,
    pub color_jitter_sigma: f64,
    /// Multiplier on every magnitude above (scale deviation from 1 included).
    pub strength: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            scale_range: (0.9, 1.1),
            rotation: std::f64::consts::PI,
            flip_prob: [0.5, 0.5],
            offset_range: 0.2,
            affine_shear_range: 0.1,
            pos_jitter_sigma: 0.01,
            color_jitter_sigma: 0.03,
            strength: 1.0,
        }
    }
}

impl AugmentPolicy {
    /// A policy whose every transform is the identity.
    pub fn identity() -> Self {
        Self {
            scale_range: (1.0, 1.0),
            rotation: 0.0,
            flip_prob: [0.0, 0.0],
            offset_range: 0.0,
            affine_shear_range: 0.0,
            pos_jitter_sigma: 0.0,
            color_jitter_sigma: 0.0,
            strength: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidConfig(format!("scale range ({lo}, {hi}) invalid")));
        }
        if self.flip_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("flip probability outside [0, 1]".into()));
        }
        for (name, v) in [
            ("rotation", self.rotation),
            ("offset_range", self.offset_range),
            ("affine_shear_range", self.affine_shear_range),
            ("pos_jitter_sigma", self.pos_jitter_sigma),
            ("color_jitter_sigma", self.color_jitter_sigma),
            ("strength", self.strength),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.affine_shear_range * self.strength >= 1.0 {
            return Err(Error::InvalidConfig("shear magnitude must stay below 1".into()));
        }
        Ok(())
    }
}

/// The concrete transforms drawn for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTransform {
    pub linear: Mat3,
    pub offset: [f64; 3],
    pub pos_jitter_sigma: f64,
    pub color_jitter_sigma: f64,
}

impl ViewTransform {
    pub fn is_rigid_identity(&self) -> bool {
        self.linear == IDENTITY && self.offset == [0.0; 3]
    }
}

/// Draws which families are active and their parameters. At least one family
/// is always enabled.
pub fn sample_transform<R: Rng>(policy: &AugmentPolicy, rng: &mut R) -> ViewTransform {
    let mut enabled = [false; 7];
    while !enabled.iter().any(|&e| e) {
        for e in enabled.iter_mut() {
            *e = rng.gen_bool(0.5);
        }
    }
    let [scale_on, flip_on, offset_on, rot_on, shear_on, pjit_on, cjit_on] = enabled;
    let s = policy.strength;

    let mut linear = IDENTITY;
    if scale_on {
        let (lo, hi) = policy.scale_range;
        let raw = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
        let k = 1.0 + s * (raw - 1.0);
        linear = mat_mul(&[[k, 0.0, 0.0], [0.0, k, 0.0], [0.0, 0.0, k]], &linear);
    }
    if flip_on {
        let fx = if rng.gen_bool(policy.flip_prob[0]) { -1.0 } else { 1.0 };
        let fy = if rng.gen_bool(policy.flip_prob[1]) { -1.0 } else { 1.0 };
        linear = mat_mul(&[[fx, 0.0, 0.0], [0.0, fy, 0.0], [0.0, 0.0, 1.0]], &linear);
    }
    if rot_on && policy.rotation > 0.0 {
        let max = s * policy.rotation;
        let theta = rng.gen_range(-max..=max);
        let (sin, cos) = theta.sin_cos();
        linear = mat_mul(&[[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]], &linear);
    }
    if shear_on && policy.affine_shear_range > 0.0 {
        let max = s * policy.affine_shear_range;
        let mut sh = IDENTITY;
        for (r, c) in [(0, 1), (1, 0), (0, 2), (1, 2)] {
            sh[r][c] = rng.gen_range(-max..=max);
        }
        linear = mat_mul(&sh, &linear);
    }
    let mut offset = [0.0; 3];
    if offset_on && policy.offset_range > 0.0 {
        let max = s * policy.offset_range;
        offset = std::array::from_fn(|_| rng.gen_range(-max..=max));
    }
    ViewTransform {
        linear,
        offset,
        pos_jitter_sigma: if pjit_on { s * policy.pos_jitter_sigma } else { 0.0 },
        color_jitter_sigma: if cjit_on { s * policy.color_jitter_sigma } else { 0.0 },
    }
}

/// Applies a drawn transform: `p' = A (p - c) + c + t + jitter`.
pub fn apply_transform<R: Rng>(cloud: &PointCloud, t: &ViewTransform, rng: &mut R) -> PointCloud {
    let mut positions = cloud.positions().to_vec();
    if !t.is_rigid_identity() {
        let c = cloud.centroid();
        for p in positions.iter_mut() {
            let local = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            let m = mat_vec(&t.linear, &local);
            *p = std::array::from_fn(|k| m[k] + c[k] + t.offset[k]);
        }
    }
    if t.pos_jitter_sigma > 0.0 {
        let noise = Normal::new(0.0, t.pos_jitter_sigma).expect("finite sigma");
        for p in positions.iter_mut() {
            for v in p.iter_mut() {
                *v += noise.sample(rng);
            }
        }
    }
    let mut colors = cloud.colors().to_vec();
    if t.color_jitter_sigma > 0.0 {
        let noise = Normal::new(0.0, t.color_jitter_sigma).expect("finite sigma");
        for c in colors.iter_mut() {
            for v in c.iter_mut() {
                *v = (*v + noise.sample(rng)).clamp(0.0, 1.0);
            }
        }
    }
    cloud.with_attributes(positions, colors)
}

pub fn sample_view(cloud: &PointCloud, policy: &AugmentPolicy, seed: u64) -> Result<PointCloud> {
    policy.validate()?;
    let mut rng = rng_from_seed(seed);
    let t = sample_transform(policy, &mut rng);
    Ok(apply_transform(cloud, &t, &mut rng))
}

/// Two independent draws from the same policy.
pub fn make_view_pair(
    cloud: &PointCloud,
    policy: &AugmentPolicy,
    seed_a: u64,
    seed_b: u64,
) -> Result<(PointCloud, PointCloud)> {
    if seed_a == seed_b {
        return Err(Error::EqualSeeds(seed_a));
    }
    Ok((sample_view(cloud, policy, seed_a)?, sample_view(cloud, policy, seed_b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn cloud() -> PointCloud {
        let pos: Vec<[f64; 3]> = (0..10)
            .map(|i| {
                let t = i as f64;
                [t * 0.3 - 1.0, (t * 1.7).sin(), 0.1 * t]
            })
            .collect();
        let col: Vec<[f64; 3]> = (0..10).map(|i| [i as f64 / 10.0, 0.5, 1.0 - i as f64 / 10.0]).collect();
        PointCloud::new(pos, col, Some(vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]), 2).unwrap()
    }

    #[test]
    fn identity_policy_is_exact() {
        let c = cloud();
        for seed in 0..20 {
            let v = sample_view(&c, &AugmentPolicy::identity(), seed).unwrap();
            assert_eq!(v, c);
        }
    }

    #[test]
    fn pure_x_flip_reflects_about_centroid() {
        let c = cloud();
        let t = ViewTransform {
            linear: [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            offset: [0.0; 3],
            pos_jitter_sigma: 0.0,
            color_jitter_sigma: 0.0,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let v = apply_transform(&c, &t, &mut rng);
        let cx = c.centroid()[0];
        for (a, b) in v.positions().iter().zip(c.positions()) {
            assert_relative_eq!(a[0], 2.0 * cx - b[0], epsilon = 1e-12);
            assert_relative_eq!(a[1], b[1], epsilon = 1e-12);
            assert_relative_eq!(a[2], b[2], epsilon = 1e-12);
        }
        assert_eq!(v.colors(), c.colors());
    }

    #[test]
    fn flip_policy_with_certain_x_flip() {
        let c = cloud();
        let policy = AugmentPolicy {
            flip_prob: [1.0, 0.0],
            ..AugmentPolicy::identity()
        };
        let cx = c.centroid()[0];
        let mut saw_flip = false;
        for seed in 0..16 {
            let v = sample_view(&c, &policy, seed).unwrap();
            let flipped = (v.positions()[0][0] - (2.0 * cx - c.positions()[0][0])).abs() < 1e-12;
            let same = v.positions()[0][0] == c.positions()[0][0];
            assert!(flipped || same);
            saw_flip |= flipped;
            assert_eq!(v.colors(), c.colors());
        }
        assert!(saw_flip);
    }

    #[test]
    fn scale_rotation_matches_explicit_matrix() {
        let c = cloud();
        let (k, theta) = (1.3_f64, 0.7_f64);
        let m = [
            [k * theta.cos(), -k * theta.sin(), 0.0],
            [k * theta.sin(), k * theta.cos(), 0.0],
            [0.0, 0.0, k],
        ];
        let t = ViewTransform {
            linear: mat_mul(
                &[[theta.cos(), -theta.sin(), 0.0], [theta.sin(), theta.cos(), 0.0], [0.0, 0.0, 1.0]],
                &[[k, 0.0, 0.0], [0.0, k, 0.0], [0.0, 0.0, k]],
            ),
            offset: [0.0; 3],
            pos_jitter_sigma: 0.0,
            color_jitter_sigma: 0.0,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let v = apply_transform(&c, &t, &mut rng);
        let cen = c.centroid();
        for (a, p) in v.positions().iter().zip(c.positions()) {
            for r in 0..3 {
                let mut expected = cen[r];
                for col in 0..3 {
                    expected += m[r][col] * (p[col] - cen[col]);
                }
                assert_relative_eq!(a[r], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn views_preserve_correspondence_and_colors_stay_in_range() {
        let c = cloud();
        let policy = AugmentPolicy {
            color_jitter_sigma: 0.5,
            ..AugmentPolicy::default()
        };
        let (a, b) = make_view_pair(&c, &policy, 1, 2).unwrap();
        assert_eq!(a.len(), c.len());
        assert_eq!(a.gt_labels(), b.gt_labels());
        for col in a.colors().iter().chain(b.colors()) {
            assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let again = make_view_pair(&c, &policy, 1, 2).unwrap();
        assert_eq!((a, b), again);
    }

    #[test]
    fn identity_pair_equals_input() {
        let c = cloud();
        let (a, b) = make_view_pair(&c, &AugmentPolicy::identity(), 3, 4).unwrap();
        assert_eq!(a, c);
        assert_eq!(b, c);
    }

    #[test]
    fn equal_seeds_rejected() {
        assert!(matches!(
            make_view_pair(&cloud(), &AugmentPolicy::default(), 5, 5),
            Err(Error::EqualSeeds(5))
        ));
    }

    #[test]
    fn sampled_linear_maps_are_invertible() {
        let policy = AugmentPolicy {
            strength: 2.0,
            affine_shear_range: 0.4,
            ..AugmentPolicy::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let t = sample_transform(&policy, &mut rng);
            assert!(determinant(&t.linear).abs() > 1e-6);
        }
    }
}
