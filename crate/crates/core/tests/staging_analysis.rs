use proptest::prelude::*;
use rand::Rng;
use slidescope_core::analysis::{
    connected_components, extract_features, region_props, regions_at, tumor_burden, whole_tumor_approx, BurdenPlan, Connectivity,
    FeatureOptions, FEATURE_NAMES,
};
use slidescope_core::inference::ProbabilityMap;
use slidescope_core::preproc::{MorphKernel, TissueMask};
use slidescope_core::staging::{
    pn_stage, rf_predict, rf_train, smote, tomek_links, Dataset, ForestParams, PnOptions, PnStage, SlideLabel,
    SmoteParams,
};
use slidescope_core::{Mask, Plane};
use slidescope_testkit::oracles::{hull_mask_naive, minkowski_dilate, pixel_ratio, pn_stage_naive};
use slidescope_testkit::{random_rects, rng};

fn label_strategy() -> impl Strategy<Value = [usize; 5]> {
    proptest::array::uniform5(0usize..4)
}

fn labels(codes: &[usize; 5]) -> Vec<SlideLabel> {
    codes.iter().map(|&c| SlideLabel::from_index(c).unwrap()).collect()
}

proptest! {
    #[test]
    fn pn_stage_matches_table_and_ignores_order(codes in label_strategy(), rot in 0usize..5) {
        let stage = pn_stage(&labels(&codes), PnOptions::default()).unwrap();
        prop_assert_eq!(stage.name(), pn_stage_naive(&codes));
        let mut rotated = codes;
        rotated.rotate_left(rot);
        prop_assert_eq!(pn_stage(&labels(&rotated), PnOptions::default()).unwrap(), stage);
    }

    #[test]
    fn upgrading_a_slide_never_lowers_the_stage(codes in label_strategy(), i in 0usize..5) {
        prop_assume!(codes[i] < 3);
        let mut up = codes;
        up[i] += 1;
        let a = pn_stage(&labels(&codes), PnOptions::default()).unwrap();
        let b = pn_stage(&labels(&up), PnOptions::default()).unwrap();
        prop_assert!(b.index() >= a.index());
    }

    #[test]
    fn whole_tumour_stays_inside_hull_and_dilated_tissue(seed: u64) {
        let mut r = rng(seed);
        let (w, h) = (r.random_range(30..90), r.random_range(30..90));
        let tissue = random_rects(&mut r, w, h, 3);
        let n = r.random_range(1..4);
        let viable = random_rects(&mut r, w, h, n).and(&tissue).unwrap();
        prop_assume!(viable.any());
        let plan = BurdenPlan { close_size: 6, open_size: 3, tissue_dilation: 6 };
        let whole = whole_tumor_approx(&viable, &tissue, &plan).unwrap();
        let dilated = minkowski_dilate(&tissue, &MorphKernel::square(6).offsets());
        prop_assert!(whole.is_subset_of(&dilated));
        let b = tumor_burden(&viable, &whole, 2.0).unwrap();
        prop_assert!((b.burden - pixel_ratio(&viable, &whole)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&b.burden));
        prop_assert!((b.whole_area_mm2 - b.whole_px as f64 * 4e-6).abs() < 1e-12);
    }

    #[test]
    fn smote_samples_lie_between_class_members(seed: u64, minority in 2usize..8) {
        let mut r = rng(seed);
        let mut ds = Dataset::default();
        for i in 0..20 {
            ds.push(format!("a{i}"), vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)], SlideLabel::Negative);
        }
        for i in 0..minority {
            ds.push(format!("b{i}"), vec![r.random_range(5.0..6.0), r.random_range(-3.0..-2.0)], SlideLabel::Macro);
        }
        let out = smote(&ds, &SmoteParams { k_neighbors: 3, target: None, seed }).unwrap();
        prop_assert_eq!(out.class_counts(), [20, 0, 0, 20]);
        for (x, y) in out.x.iter().zip(&out.y).skip(ds.len()) {
            prop_assert_eq!(*y, SlideLabel::Macro);
            prop_assert!((5.0..=6.0).contains(&x[0]) && (-3.0..=-2.0).contains(&x[1]));
        }
    }

    #[test]
    fn tomek_links_are_mutual_nearest_neighbours(seed: u64) {
        let mut r = rng(seed);
        let mut ds = Dataset::default();
        for i in 0..30 {
            let l = if r.random_bool(0.5) { SlideLabel::Negative } else { SlideLabel::Micro };
            ds.push(format!("{i}"), vec![r.random_range(0..20) as f64, r.random_range(0..20) as f64 * 0.37], l);
        }
        let d2 = |a: usize, b: usize| -> f64 { ds.x[a].iter().zip(&ds.x[b]).map(|(p, q)| (p - q) * (p - q)).sum() };
        let nn = |a: usize| -> usize {
            (0..ds.len()).filter(|&b| b != a).min_by(|&p, &q| d2(a, p).total_cmp(&d2(a, q)).then(p.cmp(&q))).unwrap()
        };
        let mut want = Vec::new();
        for a in 0..ds.len() {
            let b = nn(a);
            if a < b && nn(b) == a && ds.y[a] != ds.y[b] {
                want.push((a, b));
            }
        }
        prop_assert_eq!(tomek_links(&ds), want);
    }
}

#[test]
fn itc_counting_is_a_flag() {
    let l = labels(&[3, 3, 3, 1, 0]);
    assert_eq!(pn_stage(&l, PnOptions::default()).unwrap(), PnStage::PN1);
    assert_eq!(pn_stage(&l, PnOptions { count_itc: true }).unwrap(), PnStage::PN2);
    assert!(pn_stage(&l[..4], PnOptions::default()).is_err());
}

#[test]
fn forest_is_deterministic_and_votes_every_tree() {
    let mut r = rng(77);
    let mut ds = Dataset::default();
    for i in 0..120 {
        let c = i % 3;
        let x: Vec<f64> = (0..4).map(|d| if d == c { 4.0 } else { 0.0 } + r.random_range(-1.0..1.0)).collect();
        ds.push(format!("{i}"), x, SlideLabel::from_index(c).unwrap());
    }
    let params = ForestParams { n_trees: 25, seed: 9, ..ForestParams::default() };
    let a = rf_train(&ds, &params).unwrap();
    let b = rf_train(&ds, &params).unwrap();
    assert_eq!(a, b);
    let (label, votes) = rf_predict(&a, &[4.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(label, SlideLabel::Negative);
    assert_eq!(votes.iter().sum::<usize>(), 25);
    assert!(rf_predict(&a, &[1.0]).is_err());
    let other = rf_train(&ds, &ForestParams { seed: 10, ..params }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn rectangle_region_properties() {
    // 40 x 10 filled rectangle at 2 um per map pixel.
    let mask = Plane::from_fn(60, 30, |x, y| (10..50).contains(&x) && (5..15).contains(&y));
    let conf = mask.map(|b| if b { 0.95f32 } else { 0.0 });
    let labels = connected_components(&mask, Connectivity::Eight);
    assert_eq!(labels.count, 1);
    let r = &region_props(1, &mask.foreground(), Some(&conf), 1.0, 2).unwrap();
    assert!((r.mean_confidence - 0.95).abs() < 1e-6);
    let map = ProbabilityMap::from_values("r", 2, conf.clone());
    assert_eq!(&regions_at(&map, 0.9, 1.0, Connectivity::Eight).unwrap()[0], r);
    assert_eq!(r.area_px, 400);
    assert_eq!(r.bbox, [10, 5, 50, 15]);
    assert!((r.area_mm2 - 400.0 * 4e-6).abs() < 1e-15);
    assert!((r.extent - 1.0).abs() < 1e-12);
    assert!((r.solidity - 1.0).abs() < 1e-12);
    let major_px = 4.0 * ((40.0f64 * 40.0 - 1.0) / 12.0).sqrt();
    assert!((r.major_axis_mm - major_px * 2e-3).abs() < 1e-9);
    assert!((r.centroid.0 - 29.5).abs() < 1e-12 && (r.centroid.1 - 9.5).abs() < 1e-12);
}

#[test]
fn feature_vector_shape_and_empty_map() {
    let tissue = TissueMask::new("f", 0, Mask::filled(64, 64, true));
    let values = Plane::from_fn(64, 64, |x, y| {
        let d = ((x as f64 - 20.0).powi(2) + (y as f64 - 30.0).powi(2)).sqrt();
        (1.0 - d / 15.0).max(0.0) as f32
    });
    let map = ProbabilityMap::from_values("f", 1, values);
    let f = extract_features(&map, &tissue, 0.5, &FeatureOptions::default()).unwrap();
    assert_eq!(f.features.values.len(), FEATURE_NAMES.len());
    assert_eq!(FEATURE_NAMES.len(), 32);
    assert!(!f.features.negative);
    assert_eq!(f.regions_p90.len(), 1);
    assert!(f.regions_p50.len() >= f.regions_p90.len());
    assert!(f.features.values.iter().all(|v| v.is_finite()));

    let blank = ProbabilityMap::from_values("f", 1, Plane::filled(64, 64, 0.1));
    let f = extract_features(&blank, &tissue, 0.5, &FeatureOptions::default()).unwrap();
    assert!(f.features.negative);
    assert!(f.regions_p90.is_empty());
}

#[test]
fn hull_bounds_whole_tumour_with_default_plan() {
    let viable = Plane::from_fn(100, 100, |x, y| {
        ((20..35).contains(&x) && (20..35).contains(&y)) || ((60..75).contains(&x) && (50..70).contains(&y))
    });
    let tissue = Mask::filled(100, 100, true);
    let whole = whole_tumor_approx(&viable, &tissue, &BurdenPlan::default()).unwrap();
    assert!(viable.is_subset_of(&whole));
    let closed = slidescope_core::preproc::morphology(&viable, slidescope_core::preproc::MorphOp::Close, MorphKernel::square(20));
    assert!(whole.is_subset_of(&hull_mask_naive(&closed)));
    assert!(whole_tumor_approx(&Mask::filled(100, 100, false), &tissue, &BurdenPlan::default()).is_err());
}
