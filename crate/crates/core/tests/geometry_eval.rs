use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use featreg::detector::Keypoint;
use featreg::eval::{evaluate_pair, keypoint_error};
use featreg::geometry::{
    estimate_homography_dlt, parse_homography_file, ransac_homography, Correspondence, Homography,
    Point2, RansacParams,
};
use featreg::matcher::MatchPair;

fn planted(rng: &mut StdRng) -> Homography {
    Homography::from_rows([
        [
            1.1 + rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-30.0..30.0),
        ],
        [
            rng.gen_range(-0.2..0.2),
            0.9 + rng.gen_range(-0.1..0.1),
            rng.gen_range(-30.0..30.0),
        ],
        [rng.gen_range(-4e-4..4e-4), rng.gen_range(-4e-4..4e-4), 1.0],
    ])
    .unwrap()
}

fn fwd(h: &Homography, x: f64, y: f64) -> (f64, f64) {
    let m = h.rows();
    let w = m[2][0] * x + m[2][1] * y + m[2][2];
    (
        (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
        (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
    )
}

fn gauss(rng: &mut StdRng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn kp(x: f64, y: f64) -> Keypoint {
    Keypoint {
        x,
        y,
        sigma: 1.6,
        octave: 0,
        response: 0.1,
    }
}

fn diag(n: usize) -> Vec<MatchPair> {
    (0..n)
        .map(|i| MatchPair {
            idx_a: i,
            idx_b: i,
            d1: 0.1,
            d2: 0.5,
            norm_d1: 0.0,
        })
        .collect()
}

#[test]
fn ransac_forty_planted_forty_random() {
    let mut rng = StdRng::seed_from_u64(40);
    let h = planted(&mut rng);
    let mut pairs = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..40 {
        let (x, y) = (rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0));
        let (u, v) = fwd(&h, x, y);
        truth.push((x, y, u, v));
        pairs.push(Correspondence::new(
            Point2::new(x, y),
            Point2::new(u + 0.3 * gauss(&mut rng), v + 0.3 * gauss(&mut rng)),
        ));
    }
    for _ in 0..40 {
        pairs.push(Correspondence::new(
            Point2::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0)),
            Point2::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0)),
        ));
    }
    let params = RansacParams {
        max_iterations: 2000,
        inlier_threshold: 2.0,
        min_inliers: 4,
        seed: 0,
    };
    let fit = ransac_homography(&pairs, &params).unwrap();
    let mean = truth
        .iter()
        .map(|&(x, y, u, v)| {
            let (a, b) = fwd(&fit.homography, x, y);
            ((a - u).powi(2) + (b - v).powi(2)).sqrt()
        })
        .sum::<f64>()
        / 40.0;
    assert!(mean < 0.5, "mean error {mean}");
    let planted_in_mask = fit.inlier_mask[..40].iter().filter(|&&b| b).count();
    assert!(planted_in_mask >= 36, "{planted_in_mask}");
    // Same seed, same answer.
    assert_eq!(ransac_homography(&pairs, &params).unwrap(), fit);
}

#[test]
fn eval_thirty_exact_ten_outliers() {
    let mut rng = StdRng::seed_from_u64(30);
    let h = planted(&mut rng);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..40 {
        let (x, y) = (rng.gen_range(20.0..380.0), rng.gen_range(20.0..380.0));
        let (u, v) = fwd(&h, x, y);
        a.push(kp(x, y));
        if i < 30 {
            b.push(kp(u, v));
        } else {
            let ang = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = rng.gen_range(15.0..60.0);
            b.push(kp(u + r * ang.cos(), v + r * ang.sin()));
        }
    }
    let r = evaluate_pair(&diag(40), &a, &b, &h, &RansacParams::default()).unwrap();
    assert_eq!(r.tp, 30);
    let ir = r.inlier_ratio.unwrap();
    assert!((ir - 0.75).abs() <= 1.0 / 40.0 + 1e-12, "{ir}");
    assert!(!r.ransac_failed);
}

#[test]
fn exact_correspondences_fixed_point() {
    let mut rng = StdRng::seed_from_u64(20);
    let h = planted(&mut rng);
    let (a, b): (Vec<Keypoint>, Vec<Keypoint>) = (0..20)
        .map(|_| {
            let (x, y) = (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0));
            let (u, v) = fwd(&h, x, y);
            (kp(x, y), kp(u, v))
        })
        .unzip();
    let r = evaluate_pair(&diag(20), &a, &b, &h, &RansacParams::default()).unwrap();
    assert_eq!(r.tp, 20);
    assert!(r.ke_gh.unwrap() < 1e-9);
    assert!(r.ke_ch.unwrap() < 1e-6);
    assert_eq!(r.inlier_ratio, Some(1.0));
}

#[test]
fn keypoint_error_equals_planted_offsets() {
    let mut rng = StdRng::seed_from_u64(21);
    let h = planted(&mut rng);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut expected = 0.0;
    for _ in 0..50 {
        let (x, y) = (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0));
        let (u, v) = fwd(&h, x, y);
        let (dx, dy): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        expected += (dx * dx + dy * dy).sqrt();
        a.push(kp(x, y));
        b.push(kp(u + dx, v + dy));
    }
    expected /= 50.0;
    let ke = keypoint_error(&diag(50), &a, &b, &h).unwrap().unwrap();
    assert!((ke - expected).abs() < 1e-9, "{ke} vs {expected}");
}

fn arb_homography() -> impl Strategy<Value = Homography> {
    (
        -0.3f64..0.3,
        0.6f64..1.6,
        prop::array::uniform4(-0.1f64..0.1),
        prop::array::uniform2(-80.0f64..80.0),
        prop::array::uniform2(-5e-4f64..5e-4),
    )
        .prop_map(|(a, s, e, t, p)| {
            Homography::from_rows([
                [s * a.cos() + e[0], -s * a.sin() + e[1], t[0]],
                [s * a.sin() + e[2], s * a.cos() + e[3], t[1]],
                [p[0], p[1], 1.0],
            ])
            .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn text_round_trip(h in arb_homography()) {
        let back = parse_homography_file(h.to_text().as_bytes()).unwrap();
        prop_assert!(back.max_abs_diff(&h) < 1e-9);
    }

    #[test]
    fn dlt_recovers_from_eight_points(h in arb_homography(), pts in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0), 8)) {
        let pairs: Vec<Correspondence> = pts
            .iter()
            .map(|&(x, y)| {
                let (u, v) = fwd(&h, x, y);
                Correspondence::new(Point2::new(x, y), Point2::new(u, v))
            })
            .collect();
        // Random points can be nearly collinear; only well-spread sets are checked.
        if let Ok(est) = estimate_homography_dlt(&pairs) {
            prop_assert!(est.max_abs_diff(&h) < 1e-6, "{}", est.max_abs_diff(&h));
        }
    }

    #[test]
    fn inverse_composes_to_identity(h in arb_homography(), x in 0.0f64..500.0, y in 0.0f64..500.0) {
        let inv = h.inverse().unwrap();
        let p = inv.apply(h.apply(Point2::new(x, y)).unwrap()).unwrap();
        prop_assert!((p.x - x).abs() < 1e-6 && (p.y - y).abs() < 1e-6);
        prop_assert!(h.compose(&inv).unwrap().max_abs_diff(&Homography::IDENTITY) < 1e-9);
    }

    #[test]
    fn ransac_mask_matches_inlier_count(seed in 0u64..50) {
        let mut rng = StdRng::seed_from_u64(seed);
        let h = planted(&mut rng);
        let pairs: Vec<Correspondence> = (0..30)
            .map(|i| {
                let (x, y) = (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0));
                let (u, v) = if i % 3 == 0 { (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0)) } else { fwd(&h, x, y) };
                Correspondence::new(Point2::new(x, y), Point2::new(u, v))
            })
            .collect();
        let params = RansacParams { max_iterations: 300, seed, ..RansacParams::default() };
        let fit = ransac_homography(&pairs, &params).unwrap();
        prop_assert_eq!(fit.inlier_mask.len(), pairs.len());
        prop_assert_eq!(fit.inlier_count(), fit.inlier_mask.iter().filter(|&&b| b).count());
        prop_assert!(fit.inlier_count() >= 20);
    }
}
