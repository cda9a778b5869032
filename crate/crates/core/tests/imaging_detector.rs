use proptest::prelude::*;

use featreg::detector::{detect_keypoints, DetectorParams, Keypoint};
use featreg::geometry::Point2;
use featreg::imaging::{encode_pnm, extract_patch, load_image, Image};
use featreg::synth::textured_image;

fn arb_image(max_side: usize, channels: usize) -> impl Strategy<Value = Image> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(w, h)| {
        prop::collection::vec(0u16..=255, w * h * channels).prop_map(move |v| {
            Image::new(
                w,
                h,
                channels,
                v.into_iter().map(|x| x as f64 / 255.0).collect(),
            )
            .unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pnm_round_trip(img in arb_image(12, 1), rgb in arb_image(8, 3), binary in any::<bool>()) {
        prop_assert_eq!(load_image(&encode_pnm(&img, 255, binary)).unwrap(), img);
        prop_assert_eq!(load_image(&encode_pnm(&rgb, 255, binary)).unwrap(), rgb);
    }

    #[test]
    fn sixteen_bit_round_trip(img in arb_image(6, 1)) {
        let back = load_image(&encode_pnm(&img, 65535, true)).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            prop_assert!((a - b).abs() <= 0.5 / 65535.0);
        }
    }

    #[test]
    fn odd_window_patch_is_exact(img in arb_image(16, 1), half in 0usize..4, cx in 0usize..16, cy in 0usize..16) {
        let window = 2 * half + 1;
        let ok = cx >= half && cy >= half && cx + half < img.width() && cy + half < img.height();
        let patch = extract_patch(&img, Point2::new(cx as f64, cy as f64), window, window);
        match patch {
            Ok(p) => {
                prop_assert!(ok);
                for j in 0..window {
                    for i in 0..window {
                        prop_assert_eq!(p.data[j * window + i], img.get(cx + i - half, cy + j - half, 0));
                    }
                }
            }
            Err(_) => prop_assert!(!ok),
        }
    }
}

fn params(octaves: usize) -> DetectorParams {
    DetectorParams {
        octaves: Some(octaves),
        ..DetectorParams::default()
    }
}

#[test]
fn detection_is_deterministic() {
    let img = textured_image(128, 96, 80, 9);
    let a = detect_keypoints(&img, &DetectorParams::default()).unwrap();
    let b = detect_keypoints(&img, &DetectorParams::default()).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn translation_covariance() {
    // Offsets are multiples of 2^(octaves - 1) so every octave grid aligns.
    let octaves = 3;
    let (dx, dy) = (8usize, 4usize);
    let big = textured_image(160, 160, 120, 17);
    let crop = |ox: usize, oy: usize| Image::from_fn(128, 128, |x, y| big.get(x + ox, y + oy, 0));
    let a = detect_keypoints(&crop(16, 16), &params(octaves)).unwrap();
    let b = detect_keypoints(&crop(16 + dx, 16 + dy), &params(octaves)).unwrap();
    // Compare well inside both crops where borders play no role.
    let inner = |k: &Keypoint, ox: f64, oy: f64| {
        let (x, y) = (k.x + ox, k.y + oy);
        (48.0..112.0).contains(&x) && (48.0..112.0).contains(&y)
    };
    let key = |k: &Keypoint, ox: f64, oy: f64| {
        ((k.x + ox) * 1e6).round() as i64 * 1_000_000_000 + ((k.y + oy) * 1e6).round() as i64
    };
    let mut ka: Vec<(i64, usize)> = a
        .iter()
        .filter(|k| inner(k, 16.0, 16.0))
        .map(|k| (key(k, 16.0, 16.0), k.octave))
        .collect();
    let mut kb: Vec<(i64, usize)> = b
        .iter()
        .filter(|k| inner(k, 16.0 + dx as f64, 16.0 + dy as f64))
        .map(|k| (key(k, 16.0 + dx as f64, 16.0 + dy as f64), k.octave))
        .collect();
    ka.sort();
    kb.sort();
    assert!(ka.len() > 5, "{}", ka.len());
    assert_eq!(ka, kb);
}

#[test]
fn higher_contrast_threshold_is_subset() {
    let img = textured_image(128, 128, 100, 3);
    let lo = detect_keypoints(
        &img,
        &DetectorParams {
            contrast_threshold: 0.02,
            ..DetectorParams::default()
        },
    )
    .unwrap();
    let hi = detect_keypoints(
        &img,
        &DetectorParams {
            contrast_threshold: 0.05,
            ..DetectorParams::default()
        },
    )
    .unwrap();
    assert!(hi.len() < lo.len());
    assert!(hi.iter().all(|k| lo.contains(k)));
}

#[test]
fn max_keypoints_keeps_strongest_prefix() {
    let img = textured_image(128, 128, 100, 4);
    let all = detect_keypoints(&img, &DetectorParams::default()).unwrap();
    let top = detect_keypoints(
        &img,
        &DetectorParams {
            max_keypoints: Some(10),
            ..DetectorParams::default()
        },
    )
    .unwrap();
    assert_eq!(top.as_slice(), &all[..10]);
    assert!(all
        .windows(2)
        .all(|w| w[0].response.abs() >= w[1].response.abs()));
}
