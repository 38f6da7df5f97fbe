use mbls::calibrate::apply_temperature;
use mbls::losses::{ce, ecp, fl, flsd, flsd_gamma, ls, margin_penalty, mbls};
use mbls::metrics::{accuracy, bin_adaptive, bin_equal_width, PredictionSet};
use mbls::numerics::{entropy, kl_to_uniform, logit_distances, logsumexp, softmax};
use mbls::{LogitVector, LossSpec};
use proptest::collection::vec;
use proptest::prelude::*;

fn logits(max_k: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-20.0..20.0f64, 2..=max_k)
}

fn logits_and_label(max_k: usize) -> impl Strategy<Value = (Vec<f64>, usize)> {
    logits(max_k).prop_flat_map(|l| {
        let k = l.len();
        (Just(l), 0..k)
    })
}

fn prediction_rows() -> impl Strategy<Value = (Vec<(Vec<f64>, usize)>, usize)> {
    (2usize..6).prop_flat_map(|k| {
        let row = (vec(-8.0..8.0f64, k), 0..k);
        (vec(row, 1..120), Just(k))
    })
}

fn lv(v: &[f64]) -> LogitVector {
    LogitVector::new(v.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(l in logits(30), c in -50.0..50.0f64) {
        let a = softmax(&lv(&l));
        let shifted: Vec<f64> = l.iter().map(|v| v + c).collect();
        let b = softmax(&lv(&shifted));
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn logsumexp_is_sandwiched_by_max(l in logits(60)) {
        let l = lv(&l);
        let lse = logsumexp(&l);
        prop_assert!(lse >= l.max());
        prop_assert!(lse <= l.max() + (l.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn kl_to_uniform_is_log_k_minus_entropy(l in logits(40)) {
        let s = softmax(&lv(&l));
        let k = l.len() as f64;
        prop_assert!((kl_to_uniform(&s) - (k.ln() - entropy(&s))).abs() <= 1e-10);
    }

    #[test]
    fn distances_are_non_negative_with_a_zero(l in logits(40)) {
        let d = logit_distances(&lv(&l));
        prop_assert!(d.as_slice().iter().all(|v| *v >= 0.0));
        prop_assert!(d.as_slice().contains(&0.0));
        prop_assert!(d.mean() <= d.max());
    }

    #[test]
    fn margin_penalty_shrinks_as_margin_grows(
        l in logits(20),
        m1 in 0.0..30.0f64,
        dm in 0.0..10.0f64,
        lambda in 0.0..2.0f64,
    ) {
        let l = lv(&l);
        let (p1, _) = margin_penalty(&l, m1, lambda);
        let (p2, _) = margin_penalty(&l, m1 + dm, lambda);
        prop_assert!(p2 <= p1);
        let (p_far, g_far) = margin_penalty(&l, logit_distances(&l).max(), lambda);
        prop_assert_eq!(p_far, 0.0);
        prop_assert!(g_far.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn zero_weights_reduce_to_cross_entropy((l, y) in logits_and_label(20)) {
        let l = lv(&l);
        let base = ce(&l, y).unwrap();
        for out in [ls(&l, y, 0.0), fl(&l, y, 0.0), ecp(&l, y, 0.0), mbls(&l, y, 3.0, 0.0)] {
            let out = out.unwrap();
            prop_assert!((out.value - base.value).abs() <= 1e-12 * base.value.max(1.0));
            for (a, b) in out.grad.iter().zip(&base.grad) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn flsd_is_focal_loss_at_its_selected_gamma((l, y) in logits_and_label(20)) {
        let l = lv(&l);
        let spec = LossSpec::flsd();
        let gamma = flsd_gamma(&spec, softmax(&l).as_slice()[y]);
        prop_assert!(gamma == spec.gamma_low || gamma == spec.gamma_high);
        let a = flsd(&l, y, &spec).unwrap();
        let b = fl(&l, y, gamma).unwrap();
        prop_assert_eq!(a.value, b.value);
        prop_assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn every_loss_gradient_sums_to_zero((l, y) in logits_and_label(20)) {
        let l = lv(&l);
        for spec in [
            LossSpec::ce(),
            LossSpec::ls(0.1),
            LossSpec::fl(3.0),
            LossSpec::flsd(),
            LossSpec::ecp(0.2),
            LossSpec::mbls(2.0, 0.1),
        ] {
            let g = spec.eval(&l, y).unwrap().grad;
            prop_assert!(g.iter().sum::<f64>().abs() <= 1e-9, "{}", spec.kind);
        }
    }

    #[test]
    fn bin_counts_cover_every_sample((rows, k) in prediction_rows(), bins in 1usize..30) {
        let n = rows.len();
        let set = PredictionSet::from_rows(rows, k).unwrap();
        let equal: usize = bin_equal_width(&set, bins).unwrap().iter().map(|b| b.count).sum();
        prop_assert_eq!(equal, n);
        if n >= bins {
            let groups = bin_adaptive(&set, bins).unwrap();
            prop_assert_eq!(groups.iter().map(|b| b.count).sum::<usize>(), n);
            let (lo, hi) = groups.iter().fold((usize::MAX, 0), |(lo, hi), b| (lo.min(b.count), hi.max(b.count)));
            prop_assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn temperature_keeps_accuracy((rows, k) in prediction_rows(), t in 0.05..20.0f64) {
        let set = PredictionSet::from_rows(rows, k).unwrap();
        let scaled = apply_temperature(&set, t).unwrap();
        prop_assert_eq!(accuracy(&scaled).unwrap(), accuracy(&set).unwrap());
    }
}
