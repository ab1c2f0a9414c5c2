//! Type and operation invariants as property tests.

use ndarray::Array2;
use pointmatch::augment::{determinant, sample_transform, sample_view, AugmentPolicy};
use pointmatch::eval::{confusion_matrix, miou};
use pointmatch::losses::{
    adaptive_weight, ce_loss, combined_pl_loss, pl_loss, pointwise_pseudolabel, superpoint_pseudolabel,
};
use pointmatch::model::{architecture, extract_features, forward, MlpParams};
use pointmatch::seed::rng_from_seed;
use pointmatch::superpoint::{build_superpoints, ClusterConfig};
use pointmatch::synth::{generate_scene, sample_weak_labels, SceneSpec, WeakScheme, WeakVariant};
use pointmatch::types::{one_hot_extend, PointCloud, ProbMatrix, SuperPointPartition, ROW_SUM_TOLERANCE};
use proptest::prelude::*;

fn scene_spec() -> impl Strategy<Value = SceneSpec> {
    (1usize..5, 2usize..7, 0.0..0.05f64, 0.0..0.5f64, any::<u64>()).prop_map(|(inst, c, noise, cnoise, seed)| {
        let present = (0..c.min(inst)).collect();
        SceneSpec {
            num_classes: c,
            num_instances: inst,
            classes_present: present,
            points_per_instance: (3, 20),
            half_extent_range: (0.1, 0.3),
            room_size: 2.0,
            level_height: 0.3,
            noise_sigma: noise,
            color_noise_sigma: cnoise,
            instance_color_sigma: 0.05,
            seed,
        }
    })
}

fn prob_matrix(max_n: usize, max_c: usize) -> impl Strategy<Value = ProbMatrix> {
    (1..=max_n, 2..=max_c).prop_flat_map(|(n, c)| {
        prop::collection::vec(-20.0..20.0f64, n * c).prop_map(move |logits| {
            let mut m = Array2::from_shape_vec((n, c), logits).unwrap();
            for mut row in m.rows_mut() {
                let top = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                row.mapv_inplace(|v| (v - top).exp());
                let s = row.sum();
                row.mapv_inplace(|v| v / s);
            }
            ProbMatrix::new(m).unwrap()
        })
    })
}

fn partition_for(n: usize) -> impl Strategy<Value = SuperPointPartition> {
    prop::collection::vec(0..n.max(1), n).prop_map(|labels| SuperPointPartition::from_labels(&labels).unwrap())
}

fn weak_variant() -> impl Strategy<Value = WeakVariant> {
    prop_oneof![
        (0.001..1.0f64).prop_map(WeakVariant::Ratio),
        (1usize..30).prop_map(WeakVariant::PointsPerScene),
        Just(WeakVariant::OneClickPerInstance),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_scenes_are_valid_clouds(spec in scene_spec()) {
        let scene = generate_scene(&spec).unwrap();
        let cloud = &scene.cloud;
        prop_assert_eq!(cloud.positions().len(), cloud.colors().len());
        prop_assert!(cloud.len() >= 1);
        prop_assert!(cloud.colors().iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(cloud.gt_labels().unwrap().iter().all(|&l| l < spec.num_classes));
        prop_assert_eq!(scene.instance_ids.len(), cloud.len());
        prop_assert_eq!(generate_scene(&spec).unwrap(), scene);
    }

    #[test]
    fn weak_labels_are_sorted_in_range_and_true(spec in scene_spec(), variant in weak_variant(), seed in any::<u64>()) {
        let scene = generate_scene(&spec).unwrap();
        let weak = sample_weak_labels(&scene.cloud, Some(&scene.instance_ids), &WeakScheme { variant, seed }).unwrap();
        let gt = scene.cloud.gt_labels().unwrap();
        prop_assert!(!weak.is_empty());
        prop_assert!(weak.indices().windows(2).all(|w| w[0] < w[1]));
        for (i, y) in weak.iter() {
            prop_assert!(i < scene.cloud.len());
            prop_assert_eq!(y, gt[i]);
        }
        let y = one_hot_extend(&weak, scene.cloud.len(), spec.num_classes).unwrap();
        let nonzero = y.rows().into_iter().filter(|r| r.sum() > 0.0).count();
        prop_assert_eq!(nonzero, weak.len());
    }

    #[test]
    fn forward_rows_are_distributions(n in 1usize..20, c in 2usize..10, seed in any::<u64>(), scale in 0.1..50.0f64) {
        let mut params = MlpParams::init(&architecture(8, c), seed).unwrap();
        params.scale(scale);
        let mut rng = rng_from_seed(seed ^ 1);
        use rand::Rng;
        let feat = Array2::from_shape_fn((n, 13), |_| rng.gen_range(-2.0..2.0));
        let q = forward(&params, &feat).unwrap();
        for row in q.view().rows() {
            prop_assert!((row.sum() - 1.0).abs() <= ROW_SUM_TOLERANCE);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn superpoints_partition_every_point(spec in scene_spec(), threshold in 0.01..1.0f64, min_size in 1usize..6) {
        let cloud = generate_scene(&spec).unwrap().cloud;
        let cfg = ClusterConfig { merge_threshold: threshold, min_group_size: min_size, ..ClusterConfig::default() };
        let part = build_superpoints(&cloud, &cfg).unwrap();
        prop_assert_eq!(part.num_points(), cloud.len());
        prop_assert!(part.group_of().iter().all(|&g| g < part.num_groups()));
        let sizes = part.group_sizes();
        prop_assert!(sizes.iter().all(|&s| s >= 1));
        prop_assert_eq!(sizes.iter().sum::<usize>(), cloud.len());
        if cloud.len() >= min_size {
            prop_assert!(sizes.iter().all(|&s| s >= min_size));
        }
        prop_assert_eq!(build_superpoints(&cloud, &cfg).unwrap(), part);
    }

    #[test]
    fn pointwise_mask_respects_threshold(q in prob_matrix(30, 8), tau in 0.01..=1.0f64) {
        let pl = pointwise_pseudolabel(&q, tau);
        for i in 0..q.nrows() {
            prop_assert!(!pl.mask[i] || pl.confidences[i] >= tau);
            prop_assert_eq!(q.get(i, pl.classes[i]), pl.confidences[i]);
            prop_assert!(q.row(i).iter().all(|&v| v <= pl.confidences[i]));
        }
    }

    #[test]
    fn superpoint_labels_are_constant_per_group(
        (q, part) in prob_matrix(30, 6).prop_flat_map(|q| { let n = q.nrows(); (Just(q), partition_for(n)) }),
        tau in 0.01..=1.0f64,
    ) {
        let sp = superpoint_pseudolabel(&q, &part, tau).unwrap();
        for members in part.members() {
            let first = members[0];
            for &i in &members {
                prop_assert_eq!(sp.classes[i], sp.classes[first]);
                prop_assert_eq!(sp.mask[i], sp.mask[first]);
                prop_assert_eq!(sp.confidences[i], sp.confidences[first]);
            }
            prop_assert!(!sp.mask[first] || sp.confidences[first] >= tau);
        }
    }

    #[test]
    fn losses_are_nonnegative_and_blend_is_between(
        q in prob_matrix(20, 6),
        tau in 0.01..=1.0f64,
        w in 0.0..=1.0f64,
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..5),
    ) {
        let n = q.nrows();
        let pairs: Vec<(usize, usize)> = picks.iter().map(|ix| (ix.index(n), ix.index(q.ncols()))).collect();
        let mut pairs = pairs;
        pairs.sort();
        pairs.dedup_by_key(|p| p.0);
        let weak = pointmatch::types::WeakLabels::from_pairs(pairs).unwrap();
        prop_assert!(ce_loss(&q, &weak).unwrap() >= 0.0);
        let pl = pl_loss(&q, &pointwise_pseudolabel(&q, tau)).unwrap();
        let sp = pl_loss(&q, &superpoint_pseudolabel(&q, &SuperPointPartition::from_labels(&vec![0; n]).unwrap(), tau).unwrap()).unwrap();
        prop_assert!(pl >= 0.0 && sp >= 0.0);
        let blend = combined_pl_loss(pl, sp, w);
        prop_assert!(blend >= pl.min(sp) - 1e-12 && blend <= pl.max(sp) + 1e-12);
    }

    #[test]
    fn weight_schedule_is_bounded_and_non_increasing(alpha in 0.01..=1.0f64, divisor in 1usize..64) {
        let mut prev = f64::INFINITY;
        for k in 0..512 {
            let w = adaptive_weight(k, alpha, divisor);
            prop_assert!((0.0..=1.0).contains(&w));
            prop_assert!(w <= prev);
            prev = w;
        }
    }

    #[test]
    fn views_keep_correspondence(spec in scene_spec(), seed in any::<u64>(), strength in 0.0..3.0f64) {
        let cloud = generate_scene(&spec).unwrap().cloud;
        let policy = AugmentPolicy { strength, ..AugmentPolicy::default() };
        let view = sample_view(&cloud, &policy, seed).unwrap();
        prop_assert_eq!(view.len(), cloud.len());
        prop_assert_eq!(view.gt_labels(), cloud.gt_labels());
        prop_assert!(view.colors().iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(view.positions().iter().flatten().all(|v| v.is_finite()));
        prop_assert_eq!(sample_view(&cloud, &policy, seed).unwrap(), view);
    }

    #[test]
    fn sampled_linear_maps_are_invertible(seed in any::<u64>()) {
        let t = sample_transform(&AugmentPolicy::default(), &mut rng_from_seed(seed));
        prop_assert!(determinant(&t.linear).abs() > 1e-6);
    }

    #[test]
    fn features_are_finite(spec in scene_spec(), k in 1usize..12) {
        let cloud = generate_scene(&spec).unwrap().cloud;
        let f = extract_features(&cloud, k);
        prop_assert_eq!(f.dim(), (cloud.len(), 13));
        prop_assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn confusion_and_miou_are_consistent(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..80),
    ) {
        let (pred, gt): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let conf = confusion_matrix(&pred, &gt, 5).unwrap();
        for c in 0..5 {
            prop_assert_eq!(conf.row(c).sum() as usize, gt.iter().filter(|&&g| g == c).count());
            prop_assert_eq!(conf.column(c).sum() as usize, pred.iter().filter(|&&p| p == c).count());
        }
        let report = miou(&conf).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.miou));
        prop_assert_eq!(report.num_points() as usize, gt.len());
    }

    #[test]
    fn rejected_clouds(bad in 1.0001..2.0f64) {
        prop_assert!(PointCloud::new(vec![[0.0; 3]], vec![[bad, 0.0, 0.0]], None, 2).is_err());
        prop_assert!(PointCloud::new(vec![[0.0; 3]], vec![[0.5; 3]], Some(vec![2]), 2).is_err());
    }
}
