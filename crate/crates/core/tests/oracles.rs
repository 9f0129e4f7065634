mod common;

use common::rel_err;
use ionmorph::ion_image::{self, flip_h, flip_v, preprocess, resize_bilinear, rot90, MODEL_SIZE};
use ionmorph::scoring::{morans_i, pca_reference, pearson};
use ionmorph::stats::quantile;
use ionmorph::IonImage;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-10;

#[test]
fn quantile_matches_sorted_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = rng.random_range(1..60);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        for q in [0.0, 0.25, 0.5, 0.9, 0.99, 1.0, rng.random_range(0.0..1.0)] {
            let got = quantile(&v, q).unwrap();
            let want = common::quantile_oracle(&v, q);
            assert!(rel_err(got, want) <= TOL, "q={q}: {got} vs {want}");
        }
    }
}

#[test]
fn pcc_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let a: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| 0.3 * x + rng.random_range(0.0..1.0)).collect();
        let got = pearson(&a, &b).unwrap();
        let want = common::pcc_oracle(&a, &b);
        assert!(rel_err(got, want) <= TOL, "{got} vs {want}");
    }
}

#[test]
fn morans_i_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let w = rng.random_range(2..9);
        let h = rng.random_range(2..9);
        let px: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..10.0)).collect();
        let got = morans_i(&px, w, h).unwrap();
        let want = common::moran_oracle(&px, w, h);
        assert!(rel_err(got, want) <= TOL, "{w}x{h}: {got} vs {want}");
    }
}

#[test]
fn checkerboard_and_halves() {
    let cb: Vec<f64> = (0..64).map(|i| ((i % 8 + i / 8) % 2) as f64).collect();
    assert!((morans_i(&cb, 8, 8).unwrap() + 1.0).abs() < 1e-12);
    let halves: Vec<f64> = (0..64).map(|i| if i % 8 < 4 { 1.0 } else { 0.0 }).collect();
    assert!(morans_i(&halves, 8, 8).unwrap() > 0.5);
}

#[test]
fn bilinear_matches_per_pixel_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let w = rng.random_range(1..12);
        let h = rng.random_range(1..12);
        let px: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
        let (ow, oh) = (rng.random_range(1..30), rng.random_range(1..30));
        let out = resize_bilinear(&px, w, h, ow, oh);
        for oy in 0..oh {
            for ox in 0..ow {
                let want = common::bilinear_oracle(&px, w, h, ow, oh, ox, oy);
                assert!((out[oy * ow + ox] - want).abs() <= TOL, "{w}x{h} -> {ow}x{oh} at ({ox},{oy})");
            }
        }
    }
}

#[test]
fn percentile_normalization_reference_values() {
    let img = IonImage::from_pixels(100, 1, (0..100).map(f64::from).collect(), 100.0, 5.0);
    let norm = ion_image::normalize_p99(&img);
    // p99 of 0..=99 with linear interpolation is 98.01
    assert!((norm.pixels[50] - 50.0 / 98.01).abs() < 1e-12);
    assert_eq!(norm.pixels[99], 1.0);
    let clipped = ion_image::hotspot_clip(&IonImage::from_pixels(3, 1, vec![1.0, 2.0, 100.0], 1.0, 1.0), 0.99);
    assert!((clipped.pixels[2] - 98.04).abs() < 1e-9);
}

#[test]
fn rotation_convention() {
    let img = IonImage::from_pixels(2, 2, vec![1.0, 2.0, 3.0, 4.0], 1.0, 1.0);
    assert_eq!(rot90(&img, 1).pixels, vec![3.0, 1.0, 4.0, 2.0]);
}

#[test]
fn pca_reference_orientation_and_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let template: Vec<f64> = (0..36).map(|i| if (i % 6) < 3 { 1.0 } else { 0.0 }).collect();
    let mut stack: Vec<Vec<f64>> = (0..4)
        .map(|_| template.iter().map(|t| t + 0.05 * rng.random_range(-1.0..1.0)).collect())
        .collect();
    stack.push((0..36).map(|_| rng.random_range(0.0..1.0)).collect());
    let r = pca_reference(&stack).unwrap();
    let mean: Vec<f64> = (0..36).map(|i| stack.iter().map(|s| s[i]).sum::<f64>() / 5.0).collect();
    assert!(pearson(&r.reference, &mean).unwrap() >= 0.0);
    for k in 0..4 {
        assert!(r.scores[k] > r.scores[4]);
        let want = common::pcc_oracle(&stack[k], &r.reference).abs();
        assert!(rel_err(r.scores[k], want) <= 1e-9);
    }
}

fn grid() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..10, 1usize..10).prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(0.0f64..1e4, w * h)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn preprocess_range_and_shape((w, h, px) in grid()) {
        let out = preprocess(&IonImage::from_pixels(w, h, px, 300.0, 5.0));
        prop_assert_eq!(out.pixels().len(), MODEL_SIZE * MODEL_SIZE);
        prop_assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn normalize_is_scale_invariant((w, h, px) in grid(), c in 0.5f64..100.0) {
        let a = ion_image::normalize_intensity(&IonImage::from_pixels(w, h, px.clone(), 1.0, 1.0));
        let b = ion_image::normalize_intensity(&IonImage::from_pixels(w, h, px.iter().map(|v| v * c).collect(), 1.0, 1.0));
        for (x, y) in a.pixels.iter().zip(&b.pixels) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn transforms_compose((w, h, px) in grid()) {
        let img = IonImage::from_pixels(w, h, px, 1.0, 1.0);
        prop_assert_eq!(&flip_h(&flip_h(&img)).pixels, &img.pixels);
        prop_assert_eq!(&flip_v(&flip_v(&img)).pixels, &img.pixels);
        prop_assert_eq!(&rot90(&img, 4).pixels, &img.pixels);
        prop_assert_eq!(&rot90(&rot90(&img, 1), 3).pixels, &img.pixels);
        let r = rot90(&img, 1);
        prop_assert_eq!((r.width, r.height), (h, w));
        prop_assert_eq!(&rot90(&img, 2).pixels, &flip_h(&flip_v(&img)).pixels);
    }

    #[test]
    fn quantile_is_monotone(v in proptest::collection::vec(-1e3f64..1e3, 1..50), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(quantile(&v, lo).unwrap() <= quantile(&v, hi).unwrap());
    }

    #[test]
    fn pearson_bounded_and_symmetric(
        a in proptest::collection::vec(0.0f64..1.0, 16),
        b in proptest::collection::vec(0.0f64..1.0, 16),
    ) {
        if let (Ok(x), Ok(y)) = (pearson(&a, &b), pearson(&b, &a)) {
            prop_assert!((-1.0..=1.0).contains(&x));
            prop_assert_eq!(x, y);
        }
    }
}
