//! Analytic gradients of the full objective against central differences.

mod support;

use pointmatch::losses::{ce_logit_grad, combined_pseudo_logit_grad};
use pointmatch::model::{backward, forward_cached};
use pointmatch::types::PseudoLabel;
use support::fd::{analytic, check_instances, instance};

#[test]
fn total_loss_gradient_matches_central_differences() {
    let per_class: usize = std::env::var("GRAD_INSTANCES").ok().and_then(|s| s.parse().ok()).unwrap_or(8);
    let summary = check_instances(per_class, 1e-5).unwrap();
    println!(
        "{} instances, {} redrawn at a ReLU kink, worst relative error {:e}",
        summary.checked, summary.redrawn, summary.worst
    );
}

#[test]
fn gradient_is_sum_of_term_gradients() {
    let inst = instance(77, 4);
    let ca = forward_cached(&inst.params, &inst.feat_a).unwrap();
    let cb = forward_cached(&inst.params, &inst.feat_b).unwrap();
    let g_ce = backward(&inst.params, &ca, &ce_logit_grad(&ca.probs, &inst.weak).unwrap());
    let zero_pl = PseudoLabel {
        mask: vec![false; inst.pointwise.len()],
        ..inst.pointwise.clone()
    };
    let g_sp = backward(
        &inst.params,
        &cb,
        &combined_pseudo_logit_grad(&cb.probs, &zero_pl, &inst.superpoint, inst.w, inst.lambda),
    );
    let zero_sp = PseudoLabel {
        mask: vec![false; inst.superpoint.len()],
        ..inst.superpoint.clone()
    };
    let g_pl = backward(
        &inst.params,
        &cb,
        &combined_pseudo_logit_grad(&cb.probs, &inst.pointwise, &zero_sp, inst.w, inst.lambda),
    );
    let total = analytic(&inst);
    for (((t, a), b), c) in total.values().zip(g_ce.values()).zip(g_sp.values()).zip(g_pl.values()) {
        assert!((t - (a + b + c)).abs() <= 1e-12 * (1.0 + t.abs()));
    }
}


