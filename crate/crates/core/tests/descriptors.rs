use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use featreg::descriptor::{
    describe_keypoints, read_descriptors, write_descriptors, Backend, DescribeParams,
    DescriptorSet, Network, NetworkConfig, WeightsBlob,
};
use featreg::detector::{detect_keypoints, DetectorParams, Keypoint};
use featreg::distance::{distance_matrix, Metric};
use featreg::imaging::Image;
use featreg::matcher::{match_descriptors, MatchParams, Method};
use featreg::synth::textured_image;

fn kp(x: f64, y: f64) -> Keypoint {
    Keypoint {
        x,
        y,
        sigma: 1.6,
        octave: 0,
        response: 0.1,
    }
}

fn random_set(rng: &mut StdRng, n: usize, dim: usize) -> DescriptorSet {
    let kps = (0..n).map(|i| kp(i as f64, 2.0 * i as f64)).collect();
    let vectors = (0..n * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    DescriptorSet::new(kps, vectors, dim).unwrap()
}

fn loop_metric(p: &[f32], q: &[f32], m: Metric) -> f64 {
    let n = p.len() as f64;
    let p: Vec<f64> = p.iter().map(|&v| v as f64).collect();
    let q: Vec<f64> = q.iter().map(|&v| v as f64).collect();
    let mut acc = 0.0;
    match m {
        Metric::Cityblock => {
            for i in 0..p.len() {
                acc += (p[i] - q[i]).abs();
            }
            acc
        }
        Metric::Euclidean => {
            for i in 0..p.len() {
                acc += (p[i] - q[i]) * (p[i] - q[i]);
            }
            acc.sqrt()
        }
        Metric::Minkowski(r) => {
            for i in 0..p.len() {
                acc += (p[i] - q[i]).abs().powf(r);
            }
            acc.powf(1.0 / r)
        }
        Metric::Cosine => {
            let (mut d, mut a, mut b) = (0.0, 0.0, 0.0);
            for i in 0..p.len() {
                d += p[i] * q[i];
                a += p[i] * p[i];
                b += q[i] * q[i];
            }
            1.0 - d / (a.sqrt() * b.sqrt())
        }
        Metric::Correlation => {
            let mp = p.iter().sum::<f64>() / n;
            let mq = q.iter().sum::<f64>() / n;
            let (mut d, mut a, mut b) = (0.0, 0.0, 0.0);
            for i in 0..p.len() {
                d += (p[i] - mp) * (q[i] - mq);
                a += (p[i] - mp) * (p[i] - mp);
                b += (q[i] - mq) * (q[i] - mq);
            }
            1.0 - d / (a.sqrt() * b.sqrt())
        }
    }
}

#[test]
fn matrix_equals_double_loop() {
    let mut rng = StdRng::seed_from_u64(11);
    for dim in [7, 64, 4096] {
        let a = random_set(&mut rng, 3, dim);
        let b = random_set(&mut rng, 2, dim);
        for m in Metric::all(3.0) {
            let dm = distance_matrix(&a, &b, m).unwrap();
            assert_eq!((dm.rows, dm.cols), (3, 2));
            for i in 0..3 {
                for j in 0..2 {
                    let want = loop_metric(a.row(i), b.row(j), m);
                    let got = dm.get(i, j);
                    assert!(
                        (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                        "{m} {i} {j}: {got} vs {want}"
                    );
                }
            }
        }
    }
}

#[test]
fn kpd_round_trip_random() {
    let mut rng = StdRng::seed_from_u64(12);
    let set = random_set(&mut rng, 5, 16);
    let back = read_descriptors(&write_descriptors(&set)).unwrap();
    assert_eq!(back.len(), 5);
    assert_eq!(back.dim, 16);
    assert_eq!(back.vectors, set.vectors);
    for (a, b) in back.keypoints.iter().zip(&set.keypoints) {
        assert!((a.x - b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6 && a.octave == b.octave);
    }
}

#[test]
fn raw_descriptors_are_unit_and_in_bounds() {
    let img = textured_image(128, 128, 120, 5);
    let kps = detect_keypoints(&img, &DetectorParams::default()).unwrap();
    let params = DescribeParams {
        window: 16.0,
        ..DescribeParams::default()
    };
    let set = describe_keypoints(&img, &kps, Backend::RawPatch { side: 8 }, &params).unwrap();
    assert_eq!(set.dim, 64);
    assert_eq!(
        set.len() + set.dropped_out_of_bounds + set.dropped_zero,
        kps.len()
    );
    for (row, k) in set.rows().zip(&set.keypoints) {
        let norm: f64 = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
        let half = params.effective_window(k) as f64 / 2.0;
        assert!(k.x - half >= -1.0 && k.x + half <= 129.0);
    }
}

#[test]
fn narrow_network_gives_4096_rows() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/alexnet-narrow.toml");
    let cfg = NetworkConfig::load(std::path::Path::new(path)).unwrap();
    let mut rng = StdRng::seed_from_u64(13);
    let values: Vec<f32> = (0..cfg.parameter_count())
        .map(|_| rng.gen_range(-0.02f32..0.02))
        .collect();
    let mut fc7 = cfg.clone();
    fc7.tap = "fc7".into();
    let blob = WeightsBlob { values };
    let net6 = Network::new(cfg, &blob).unwrap();
    assert_eq!(net6.output_len(), 4096);
    let net7 = Network::new(fc7, &blob).unwrap();
    assert_eq!(net7.output_len(), 4096);
    drop(blob);

    let img = Image::from_fn(120, 120, |x, y| {
        0.5 + 0.4 * ((x as f64 / 5.0).sin() * (y as f64 / 7.0).cos())
    });
    let kps = vec![kp(60.0, 60.0), kp(2.0, 2.0)];
    let params = DescribeParams {
        window: 32.0,
        ..DescribeParams::default()
    };
    let set = describe_keypoints(&img, &kps, Backend::Cnn(&net6), &params).unwrap();
    assert_eq!(set.dim, 4096);
    assert_eq!(set.len(), 1);
    assert_eq!(set.dropped_out_of_bounds, 1);
    assert!(set.row(0).iter().all(|v| v.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_symmetric_under_swap(seed in 0u64..1000, n in 1usize..8, m in 1usize..8, dim in 2usize..32) {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = random_set(&mut rng, n, dim);
        let b = random_set(&mut rng, m, dim);
        for metric in Metric::all(2.5) {
            let ab = distance_matrix(&a, &b, metric).unwrap();
            let ba = distance_matrix(&b, &a, metric).unwrap();
            for i in 0..n {
                for j in 0..m {
                    prop_assert!((ab.get(i, j) - ba.get(j, i)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_way_within_one_way(seed in 0u64..1000, n in 1usize..12, m in 2usize..12) {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = random_set(&mut rng, n, 8);
        let b = random_set(&mut rng, m, 8);
        let dm = distance_matrix(&a, &b, Metric::Euclidean).unwrap();
        for (one, two, t) in [(Method::Nn1, Method::Nn2, 0.5), (Method::Nnr1, Method::Nnr2, 1.2)] {
            let m1 = match_descriptors(&dm, &MatchParams::new(one, t).unwrap()).unwrap();
            let m2 = match_descriptors(&dm, &MatchParams::new(two, t).unwrap()).unwrap();
            prop_assert!(m2.iter().all(|p| m1.contains(p)));
            // Two-way matches never share a column.
            let mut cols: Vec<usize> = m2.iter().map(|p| p.idx_b).collect();
            cols.sort();
            cols.dedup();
            prop_assert_eq!(cols.len(), m2.len());
        }
    }
}
