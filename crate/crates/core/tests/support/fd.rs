//! Finite-difference checking of the full objective, shared by the core
//! gradient tests and the acceptance suite.

use ndarray::Array2;
use pointmatch::losses::{
    ce_logit_grad, ce_loss, combined_pl_loss, combined_pseudo_logit_grad, pl_loss, pointwise_pseudolabel, sp_pl_loss,
    superpoint_pseudolabel, total_loss,
};
use pointmatch::model::{architecture, backward, forward, forward_cached, Gradients, MlpParams};
use pointmatch::types::{PseudoLabel, SuperPointPartition, WeakLabels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub params: MlpParams,
    pub feat_a: Array2<f64>,
    pub feat_b: Array2<f64>,
    pub weak: WeakLabels,
    pub pointwise: PseudoLabel,
    pub superpoint: PseudoLabel,
    pub w: f64,
    pub lambda: f64,
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn instance(seed: u64, c: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=12);
    let params = MlpParams::init(&architecture(8, c), rng.gen()).unwrap();
    let mut feat = || Array2::from_shape_fn((n, 13), |_| rng.gen_range(-1.5..1.5));
    let (feat_a, feat_b) = (feat(), feat());

    let mut labeled = Vec::new();
    for i in 0..n {
        if rng.gen_bool(0.5) {
            labeled.push((i, rng.gen_range(0..c)));
        }
    }
    let weak = if labeled.is_empty() {
        WeakLabels::new(vec![0], vec![c - 1]).unwrap()
    } else {
        WeakLabels::from_pairs(labeled).unwrap()
    };

    // Thresholds at the median confidence keep both mask values in play.
    let qa = forward(&params, &feat_a).unwrap();
    let maxima: Vec<f64> = qa.view().rows().into_iter().map(|r| r.fold(0.0, |a: f64, &b| a.max(b))).collect();
    let pointwise = pointwise_pseudolabel(&qa, median(maxima));
    let m = rng.gen_range(1..=n.min(4));
    let groups: Vec<usize> = (0..n).map(|i| if i < m { i } else { rng.gen_range(0..m) }).collect();
    let part = SuperPointPartition::new(groups, m).unwrap();
    let sp_conf = superpoint_pseudolabel(&qa, &part, 0.0).unwrap().confidences;
    let superpoint = superpoint_pseudolabel(&qa, &part, median(sp_conf)).unwrap();

    Instance {
        params,
        feat_a,
        feat_b,
        weak,
        pointwise,
        superpoint,
        w: rng.gen_range(0.0..=1.0),
        lambda: rng.gen_range(0.5..2.0),
    }
}

/// `L_total` with the pseudo-labels frozen.
pub fn objective(inst: &Instance, params: &MlpParams) -> f64 {
    let qa = forward(params, &inst.feat_a).unwrap();
    let qb = forward(params, &inst.feat_b).unwrap();
    let l_ce = ce_loss(&qa, &inst.weak).unwrap();
    let l_pl = pl_loss(&qb, &inst.pointwise).unwrap();
    let l_sp = sp_pl_loss(&qb, &inst.superpoint).unwrap();
    total_loss(l_ce, combined_pl_loss(l_pl, l_sp, inst.w), inst.lambda)
}

pub fn analytic(inst: &Instance) -> Gradients {
    let ca = forward_cached(&inst.params, &inst.feat_a).unwrap();
    let cb = forward_cached(&inst.params, &inst.feat_b).unwrap();
    let mut g = backward(&inst.params, &ca, &ce_logit_grad(&ca.probs, &inst.weak).unwrap());
    let gb = combined_pseudo_logit_grad(&cb.probs, &inst.pointwise, &inst.superpoint, inst.w, inst.lambda);
    g.add_scaled(&backward(&inst.params, &cb, &gb), 1.0);
    g
}

pub fn relu_pattern(params: &MlpParams, feat: &Array2<f64>) -> Vec<bool> {
    let cache = forward_cached(params, feat).unwrap();
    cache.pre_activations().iter().flat_map(|z| z.iter().map(|&v| v > 0.0)).collect()
}

/// Whether a step of up to `2h` either way flips a ReLU. The objective has
/// a kink there and differences measure a secant, not the derivative.
pub fn straddles_kink(inst: &Instance, h: f64) -> bool {
    let base = [relu_pattern(&inst.params, &inst.feat_a), relu_pattern(&inst.params, &inst.feat_b)];
    (0..inst.params.num_params()).any(|k| {
        [2.0 * h, h, -h, -2.0 * h].iter().any(|&d| {
            let p = shifted(&inst.params, k, d);
            [relu_pattern(&p, &inst.feat_a), relu_pattern(&p, &inst.feat_b)] != base
        })
    })
}

pub const H: f64 = 1e-4;

pub fn shifted(params: &MlpParams, k: usize, d: f64) -> MlpParams {
    let mut p = params.clone();
    *p.values_mut().nth(k).unwrap() += d;
    p
}

/// Fourth-order central difference in parameter `k`.
pub fn numeric_derivative(inst: &Instance, k: usize, h: f64) -> f64 {
    let f = |d: f64| objective(inst, &shifted(&inst.params, k, d));
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

/// Largest relative error over all parameters. Entries where both
/// gradients are below `1e-6` in magnitude are compared absolutely, since
/// round-off in the differences is around `1e-12`.
pub fn max_relative_error(inst: &Instance) -> f64 {
    let grads: Vec<f64> = analytic(inst).values().copied().collect();
    let mut worst = 0.0f64;
    for (k, &a) in grads.iter().enumerate() {
        let numeric = numeric_derivative(inst, k, H);
        let scale = a.abs().max(numeric.abs());
        let err = if scale < 1e-6 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
        worst = worst.max(err);
    }
    worst
}

/// Outcome of checking `per_class` kink-free instances for each of
/// `C = 2, 4, 20`.
#[derive(Debug, Clone, Copy)]
pub struct FdSummary {
    pub checked: usize,
    pub redrawn: usize,
    pub worst: f64,
}

pub fn check_instances(per_class: usize, tolerance: f64) -> Result<FdSummary, String> {
    let mut summary = FdSummary { checked: 0, redrawn: 0, worst: 0.0 };
    for c in [2, 4, 20] {
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < per_class {
            let inst = instance(1000 * seed + c as u64, c);
            seed += 1;
            if straddles_kink(&inst, H) {
                summary.redrawn += 1;
                continue;
            }
            let err = max_relative_error(&inst);
            if !(err < tolerance) {
                return Err(format!("seed {}, C = {c}: max relative error {err:e}", seed - 1));
            }
            summary.worst = summary.worst.max(err);
            checked += 1;
        }
        summary.checked += checked;
    }
    Ok(summary)
}
