use omnice::imaging::od::{intensity_to_od, od_to_intensity, quantize, shift_od, DEFAULT_I0};
use omnice::imaging::{LabelImage, RasterImage};
use omnice::metrics::{compute_dice, compute_mce, compute_rce};
use omnice::pipeline::{augmix_apply, derive_seed, run_chain, AugmixSpec, Corruptor};
use omnice::{synthetic, CorruptionKind, CorruptionSpec};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = CorruptionKind> {
    (0..CorruptionKind::ALL.len()).prop_map(|i| CorruptionKind::ALL[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn od_roundtrip_within_one_level(v in any::<u8>()) {
        let back = quantize(od_to_intensity(intensity_to_od(f64::from(v), DEFAULT_I0), DEFAULT_I0));
        prop_assert!(back.abs_diff(v) <= 1);
    }

    #[test]
    fn zero_shift_is_identity(v in any::<u8>()) {
        prop_assert_eq!(shift_od(v, 0.0), v);
    }

    #[test]
    fn shift_is_monotone(v in any::<u8>(), a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(shift_od(v, hi) <= shift_od(v, lo));
    }

    #[test]
    fn mce_against_itself_is_100(v in prop::collection::vec(0.001f64..1.0, 1..8)) {
        prop_assert_eq!(compute_mce(&v, &v).unwrap(), Some(100.0));
    }

    #[test]
    fn mce_scales_linearly(v in prop::collection::vec(0.01f64..1.0, 5), k in 0.0f64..2.0) {
        let m: Vec<f64> = v.iter().map(|x| x * k).collect();
        let got = compute_mce(&m, &v).unwrap().unwrap();
        prop_assert!((got - 100.0 * k).abs() < 1e-9);
    }

    #[test]
    fn rce_of_constant_errors(c in 0.001f64..1.0, n in 1usize..6) {
        let v = vec![c; n];
        let got = compute_rce(&v, c).unwrap().unwrap();
        prop_assert!((got - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dice_is_symmetric_and_bounded(a in prop::collection::vec(0u8..3, 64), b in prop::collection::vec(0u8..3, 64)) {
        let a = LabelImage::new(8, 8, a).unwrap();
        let b = LabelImage::new(8, 8, b).unwrap();
        let ab = compute_dice(&a, &b).unwrap();
        prop_assert_eq!(ab, compute_dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(compute_dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn seeds_depend_on_every_field(master in any::<u64>(), sev in 1u8..=5) {
        let s = derive_seed(master, "a/b.png", "fold", sev);
        prop_assert_eq!(s, derive_seed(master, "a/b.png", "fold", sev));
        prop_assert_ne!(s, derive_seed(master ^ 1, "a/b.png", "fold", sev));
        prop_assert_ne!(s, derive_seed(master, "a/c.png", "fold", sev));
        prop_assert_ne!(s, derive_seed(master, "a/b.png", "crack", sev));
        prop_assert_ne!(s, derive_seed(master, "a/b.png", "fold", sev % 5 + 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn corruption_keeps_shape_and_is_deterministic(
        k in kind(), sev in 1u8..=5, seed in any::<u64>(), w in 24usize..80, h in 24usize..80, img_seed in 0u64..50,
    ) {
        let c = Corruptor::default();
        let img = synthetic::tissue_patch(w, h, img_seed);
        let spec = CorruptionSpec::new(k, sev, seed).unwrap();
        let a = c.corrupt_one(&img, &spec).unwrap();
        prop_assert_eq!(a.dims(), img.dims());
        prop_assert_eq!(a, c.corrupt_one(&img, &spec).unwrap());
    }

    #[test]
    fn tiling_is_invisible_for_pixelwise_kinds(
        k in kind().prop_filter("pixelwise", |k| k.is_pixelwise()), sev in 1u8..=5, seed in any::<u64>(), tile in 7usize..60,
    ) {
        let c = Corruptor::default();
        let img = synthetic::tissue_patch(90, 70, seed % 17);
        let spec = CorruptionSpec::new(k, sev, seed).unwrap();
        let (tiled, _) = c.corrupt_slide(&img, &spec, tile, None).unwrap();
        prop_assert_eq!(tiled, c.corrupt_one(&img, &spec).unwrap());
    }

    #[test]
    fn augmix_stays_in_convex_hull(seed in any::<u64>(), width in 1usize..4, alpha in 0.2f64..3.0) {
        let c = Corruptor::default();
        let img = synthetic::tissue_patch(40, 36, seed % 11);
        let spec = AugmixSpec { width, alpha, ..Default::default() };
        let plan = spec.sample_plan(seed).unwrap();
        let mixed = augmix_apply(&c, &img, &plan).unwrap();
        let chains: Vec<RasterImage> = plan.chains.iter().map(|ch| run_chain(&c, &img, ch).unwrap()).collect();
        for (j, &v) in mixed.data().iter().enumerate() {
            let o = img.data()[j];
            let lo = chains.iter().map(|ch| ch.data()[j]).fold(o, u8::min);
            let hi = chains.iter().map(|ch| ch.data()[j]).fold(o, u8::max);
            prop_assert!(lo <= v && v <= hi);
        }
    }
}
