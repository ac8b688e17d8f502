use proptest::prelude::*;
use slidescope_core::metrics::{
    cross_entropy, dice, dice_loss, froc, jaccard, kappa_quadratic, Detection, LesionMap, Polarity, CE_EPSILON,
    FROC_RATES,
};
use slidescope_core::{Mask, Plane};
use slidescope_testkit::oracles::{
    cross_entropy_direct, dice_loss_bg_direct, dice_loss_direct, flood_fill_labels, froc_naive, kappa_direct,
    LesionSlide,
};

fn masks(max: usize) -> impl Strategy<Value = (Mask, Mask)> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        (
            proptest::collection::vec(any::<bool>(), w * h),
            proptest::collection::vec(any::<bool>(), w * h),
        )
            .prop_map(move |(a, b)| (Plane::from_vec(w, h, a).unwrap(), Plane::from_vec(w, h, b).unwrap()))
    })
}

fn prob_and_truth(max: usize) -> impl Strategy<Value = (Plane<f64>, Mask)> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        (
            proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0], w * h),
            proptest::collection::vec(any::<bool>(), w * h),
        )
            .prop_map(move |(p, g)| (Plane::from_vec(w, h, p).unwrap(), Plane::from_vec(w, h, g).unwrap()))
    })
}

fn ratings() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, usize)> {
    (2usize..7, 1usize..80).prop_flat_map(|(k, n)| {
        (
            proptest::collection::vec(0..k, n),
            proptest::collection::vec(0..k, n),
            Just(k),
        )
    })
}

proptest! {
    #[test]
    fn dice_and_jaccard_are_consistent((a, b) in masks(20)) {
        let d = dice(&a, &b).unwrap();
        let j = jaccard(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn losses_match_their_formulas((p, g) in prob_and_truth(16)) {
        let fg = dice_loss(&p, &g, Polarity::Foreground).unwrap().value;
        let bg = dice_loss(&p, &g, Polarity::Background).unwrap().value;
        prop_assert!((fg - dice_loss_direct(&p, &g)).abs() <= 1e-9);
        prop_assert!((bg - dice_loss_bg_direct(&p, &g)).abs() <= 1e-9);
        let ce = cross_entropy(&p, &g).unwrap();
        prop_assert!((ce - cross_entropy_direct(&p, &g, CE_EPSILON)).abs() <= 1e-9);
        prop_assert!(ce >= 0.0 && ce <= -(CE_EPSILON.ln()) + 1e-12);
    }

    #[test]
    fn kappa_matches_normalised_form((a, b, k) in ratings()) {
        let got = kappa_quadratic(&a, &b, k).unwrap().kappa;
        prop_assert!((got - kappa_direct(&a, &b, k)).abs() <= 1e-9);
        prop_assert!(got <= 1.0 + 1e-12);
        prop_assert!((got - kappa_quadratic(&b, &a, k).unwrap().kappa).abs() <= 1e-12);
        let mut pairs: Vec<(usize, usize)> = a.iter().copied().zip(b.iter().copied()).collect();
        pairs.reverse();
        let (ra, rb): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        prop_assert!((got - kappa_quadratic(&ra, &rb, k).unwrap().kappa).abs() <= 1e-12);
    }

    #[test]
    fn froc_matches_exhaustive_sweep(
        lesions in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 12 * 10), 1..4),
        downsample in 1u32..4,
        dets in proptest::collection::vec((0usize..3, -2.0f64..40.0, -2.0f64..40.0, 0u8..6), 0..25),
    ) {
        let ids = ["s0", "s1", "s2"];
        let labels: Vec<Plane<u32>> = lesions
            .iter()
            .map(|v| flood_fill_labels(&Plane::from_vec(12, 10, v.clone()).unwrap(), true).0)
            .collect();
        let maps: Vec<LesionMap> = labels.iter().enumerate().map(|(i, l)| LesionMap::from_labels(ids[i], downsample, l.clone())).collect();
        let dets: Vec<Detection> = dets
            .into_iter()
            .filter(|d| d.0 < labels.len())
            .map(|(s, x, y, c)| Detection { slide_id: ids[s].into(), x, y, confidence: c as f64 / 5.0 })
            .collect();
        let curve = froc(&dets, &maps, &FROC_RATES, 0.0).unwrap();
        let slides: Vec<LesionSlide> = labels.iter().enumerate().map(|(i, l)| LesionSlide { slide_id: ids[i], downsample, labels: l }).collect();
        let tuples: Vec<(&str, f64, f64, f64)> = dets.iter().map(|d| (d.slide_id.as_str(), d.x, d.y, d.confidence)).collect();
        let (points, score) = froc_naive(&tuples, &slides, &FROC_RATES);
        let got: Vec<(f64, f64, f64)> = curve.points.iter().map(|p| (p.threshold, p.mean_fps, p.sensitivity)).collect();
        prop_assert_eq!(got, points);
        prop_assert_eq!(curve.score, score);
        prop_assert!(curve.sensitivities.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn kappa_edge_cases() {
    assert!(kappa_quadratic(&[0, 1], &[1], 2).is_err());
    assert!(kappa_quadratic(&[], &[], 2).is_err());
    assert!(kappa_quadratic(&[0, 3], &[0, 1], 3).is_err());
    let k = kappa_quadratic(&[2, 2, 2], &[2, 2, 2], 4).unwrap();
    assert!(k.degenerate);
    assert_eq!(k.kappa, 1.0);
    // Maximal disagreement on two classes.
    assert_eq!(kappa_quadratic(&[0, 1], &[1, 0], 2).unwrap().kappa, -1.0);
}

#[test]
fn all_empty_dice_loss_is_flagged() {
    let p = Plane::filled(4, 4, 0.0);
    let g = Mask::filled(4, 4, false);
    let l = dice_loss(&p, &g, Polarity::Foreground).unwrap();
    assert!(l.degenerate);
    assert_eq!(l.value, 0.0);
    assert!(dice_loss(&p, &Mask::filled(3, 4, false), Polarity::Foreground).is_err());
}

#[test]
fn detections_beyond_tolerance_are_false_positives() {
    let labels = Plane::from_fn(10, 10, |x, y| (x >= 4 && x < 6 && y >= 4 && y < 6) as u32);
    let lesions = [LesionMap::from_labels("t", 1, labels)];
    let det = |x: f64| Detection { slide_id: "t".into(), x, y: 4.5, confidence: 0.9 };
    let miss = froc(&[det(8.0)], &lesions, &FROC_RATES, 0.0).unwrap();
    assert_eq!(miss.points[0].sensitivity, 0.0);
    assert_eq!(miss.points[0].mean_fps, 1.0);
    let near = froc(&[det(8.0)], &lesions, &FROC_RATES, 3.1).unwrap();
    assert_eq!(near.points[0].sensitivity, 1.0);
    assert_eq!(near.points[0].mean_fps, 0.0);
}
