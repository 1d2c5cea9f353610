mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use common::{gen, oracle};
use vanish::evalharness::{
    compute_ap, count_bboxes, diff_labels, iou, Detection, DetectionSet, GroundTruth, GroundTruthBox,
};
use vanish::imagecore::{resize_bilinear, Dims, Grid};
use vanish::inversion::{momentum_update, total_variation, InversionConfig};
use vanish::perturb::{compose_adversarial, composition_window, extract_perturbation, ExtractMode, StripeSpec};
use vanish::replace::{apply_replacement, plan_replacement};
use vanish::segmask::TargetRegion;

fn dims() -> impl Strategy<Value = Dims> {
    (1usize..8, 1usize..8, prop_oneof![Just(1usize), Just(3usize)]).prop_map(|(w, h, c)| Dims::new(w, h, c))
}

fn bbox() -> impl Strategy<Value = [f64; 4]> {
    (0.0..100.0f64, 0.0..100.0f64, 0.5..60.0f64, 0.5..60.0f64).prop_map(|(x, y, w, h)| [x, y, w, h])
}

fn set(dets: Vec<Detection>) -> DetectionSet {
    DetectionSet::new(dets).unwrap()
}

proptest! {
    #[test]
    fn momentum_is_linear(d in dims(), seed in any::<u64>(), l1 in 0.0..=1.0f64) {
        let mut rng = gen::rng(seed);
        let cfg = InversionConfig { lambda1: l1, lambda2: 1.0 - l1, ..InversionConfig::default() };
        let (v1, v2, g1, g2) = (gen::grid(&mut rng, d), gen::grid(&mut rng, d), gen::grid(&mut rng, d), gen::grid(&mut rng, d));
        let add = |a: &Grid, b: &Grid| a.zip_with(b, |x, y| x + y).unwrap();
        let whole = momentum_update(&add(&v1, &v2), &add(&g1, &g2), &cfg).unwrap();
        let parts = add(&momentum_update(&v1, &g1, &cfg).unwrap(), &momentum_update(&v2, &g2, &cfg).unwrap());
        for (a, b) in whole.data().iter().zip(parts.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn tv_translation_and_scaling(d in dims(), seed in any::<u64>(), shift in -3.0..3.0f64, k in -4.0..4.0f64) {
        let v = gen::grid(&mut gen::rng(seed), d);
        let tv = total_variation(&v);
        prop_assert!(tv >= 0.0);
        prop_assert!((tv - oracle::total_variation(&v)).abs() <= 1e-9 * tv.max(1.0));
        prop_assert!((total_variation(&v.map(|x| x + shift)) - tv).abs() <= 1e-9 * tv.max(1.0));
        prop_assert!((total_variation(&v.scale(k)) - k.abs() * tv).abs() <= 1e-9 * (k.abs() * tv).max(1.0));
    }

    #[test]
    fn resize_matches_tent_oracle(d in dims(), seed in any::<u64>(), w in 1usize..12, h in 1usize..12) {
        let img = gen::image(&mut gen::rng(seed), d.width, d.height, d.channels);
        let out = resize_bilinear(&img, w, h).unwrap();
        for (a, b) in out.data().iter().zip(oracle::resize(&img, w, h)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let (ab, ba) = (iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn diff_conservation_and_symmetry(seed in any::<u64>(), thr in 0.0..=1.0f64) {
        let mut rng = gen::rng(seed);
        let (o, a) = (gen::dump(&mut rng, 3, 4, 25), gen::dump(&mut rng, 3, 4, 25));
        let fwd = diff_labels(&set(o.clone()), &set(a.clone()), thr);
        let back = diff_labels(&set(a.clone()), &set(o.clone()), thr);
        prop_assert_eq!(
            fwd.new_labels as i64 - fwd.disappeared_labels as i64,
            fwd.bbox_count_adv as i64 - fwd.bbox_count_origin as i64
        );
        prop_assert_eq!((fwd.new_labels, fwd.disappeared_labels), (back.disappeared_labels, back.new_labels));
        prop_assert_eq!(
            (fwd.bbox_count_origin, fwd.bbox_count_adv, fwd.new_labels, fwd.disappeared_labels),
            oracle::label_diff(&o, &a, thr)
        );
        let self_diff = diff_labels(&set(o.clone()), &set(o), thr);
        prop_assert_eq!((self_diff.new_labels, self_diff.disappeared_labels), (0, 0));
    }

    #[test]
    fn count_is_monotone_in_threshold(seed in any::<u64>(), t1 in 0.0..=1.0f64, t2 in 0.0..=1.0f64) {
        let s = set(gen::dump(&mut gen::rng(seed), 3, 3, 40));
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(count_bboxes(&s, lo) >= count_bboxes(&s, hi));
        prop_assert_eq!(count_bboxes(&s, 0.0), s.len());
    }

    /// AP depends on scores only through their order, lies in [0, 1], and a
    /// perfect top-ranked extra box for an unmatched object never lowers it.
    #[test]
    fn ap_order_invariance_and_bounds(seed in any::<u64>()) {
        let mut rng = gen::rng(seed);
        let boxes: Vec<GroundTruthBox> = (0..rng.gen_range(1..6))
            .map(|_| {
                let b = [rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0), rng.gen_range(2.0..20.0), rng.gen_range(2.0..20.0)];
                GroundTruthBox { image_id: rng.gen_range(1..3), category_id: 1, bbox: b, area: Some(b[2] * b[3]), crowd: false }
            })
            .collect();
        let gt = GroundTruth {
            images: [1, 2].into_iter().collect(),
            categories: [1].into_iter().collect(),
            boxes: boxes.clone(),
        };
        let mut dets = Vec::new();
        for b in &boxes {
            if rng.gen_bool(0.6) {
                let j = rng.gen_range(-2.0..2.0);
                let bbox = [b.bbox[0] + j, b.bbox[1], b.bbox[2], b.bbox[3]];
                dets.push(Detection { image_id: b.image_id, category_id: 1, bbox, score: rng.gen_range(0.05..0.95) });
            }
        }
        dets.extend((0..rng.gen_range(0..4)).map(|_| Detection {
            image_id: rng.gen_range(1..3),
            category_id: 1,
            bbox: [rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0), rng.gen_range(2.0..20.0), rng.gen_range(2.0..20.0)],
            score: rng.gen_range(0.05..0.95),
        }));
        let ap = compute_ap(&set(dets.clone()), &gt, 0.5).unwrap().ap;
        prop_assert!((0.0..=1.0).contains(&ap));

        let squashed: Vec<Detection> = dets.iter().map(|d| Detection { score: d.score * d.score, ..d.clone() }).collect();
        prop_assert_eq!(compute_ap(&set(squashed), &gt, 0.5).unwrap().ap, ap);

        let matched: BTreeSet<usize> = (0..boxes.len())
            .filter(|&i| dets.iter().any(|d| d.image_id == boxes[i].image_id && iou(&d.bbox, &boxes[i].bbox) >= 0.5))
            .collect();
        if let Some(i) = (0..boxes.len()).find(|i| !matched.contains(i)) {
            let mut better = dets.clone();
            better.push(Detection { image_id: boxes[i].image_id, category_id: 1, bbox: boxes[i].bbox, score: 1.0 });
            prop_assert!(compute_ap(&set(better), &gt, 0.5).unwrap().ap >= ap - 1e-12);
        }
    }

    #[test]
    fn replacement_invariants(seed in any::<u64>(), w in 3usize..30, h in 3usize..30, step in 1usize..8, eps in 0.01..=1.0f64) {
        let mut rng = gen::rng(seed);
        let img = gen::image(&mut rng, w, h, 3);
        let region = TargetRegion::from_mask(5, gen::region_mask(&mut rng, w, h)).unwrap();
        let plan = plan_replacement(&img, &region, step, eps).unwrap();
        let out = apply_replacement(&img, &plan).unwrap();
        prop_assert!(plan.ratio() <= eps);
        let targets: BTreeSet<usize> = plan.pairs.iter().map(|p| p.0).collect();
        prop_assert_eq!(targets.len(), plan.pairs.len());
        for &(t, s) in &plan.pairs {
            prop_assert!(region.mask().contains(t));
            prop_assert!(!region.mask().contains(s));
            prop_assert_eq!(out.pixel(t), img.pixel(s));
        }
        for p in (0..w * h).filter(|p| !targets.contains(p)) {
            prop_assert_eq!(out.pixel(p), img.pixel(p));
        }
    }

    #[test]
    fn composition_support_budget_and_identity(
        seed in any::<u64>(),
        w in 3usize..32,
        h in 3usize..32,
        n in 1usize..4,
        m in 1usize..12,
        eta in 0.0..10.0f64,
        copy in any::<bool>(),
        oi in -4i64..6,
        oj in -4i64..6,
    ) {
        let mut rng = gen::rng(seed);
        let base = gen::image(&mut rng, w, h, 3);
        let s_star = gen::image(&mut rng, w, h, 3);
        let region = TargetRegion::from_mask(2, gen::region_mask(&mut rng, w, h)).unwrap();
        let (vm, hm) = StripeSpec::alternating(n, m).build(base.dims()).unwrap();
        let mode = if copy { ExtractMode::Copy } else { ExtractMode::Delta };
        let r = extract_perturbation(&s_star, &base, (&vm, &hm), eta, mode).unwrap();
        prop_assert!(r.l2() <= eta);
        for y in 0..h {
            for x in 0..w {
                if !(vm.covers(x, y) || hm.covers(x, y)) {
                    prop_assert!(r.delta.data()[(y * w + x) * 3..(y * w + x + 1) * 3].iter().all(|&v| v == 0.0));
                }
            }
        }
        let Ok(window) = composition_window(&region, (oi, oj)) else {
            prop_assert!(compose_adversarial(&base, &r, &region, (oi, oj)).is_err());
            return Ok(());
        };
        let adv = compose_adversarial(&base, &r, &region, (oi, oj)).unwrap();
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if adv.pixel(p) != base.pixel(p) {
                    prop_assert!(window.contains(x, y) && (vm.covers(x, y) || hm.covers(x, y)));
                }
            }
        }
        let zero = extract_perturbation(&base, &base, (&vm, &hm), eta, ExtractMode::Delta).unwrap();
        let same = compose_adversarial(&base, &zero, &region, (oi, oj)).unwrap();
        prop_assert!(same.data().iter().zip(base.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
