//! Procedural test scenes with known geometry.

use crate::geometry::Homography;
use crate::imaging::{warp_perspective, Image};
use crate::rng::XorShift64Star;

/// Grey background with `count` random Gaussian blobs of both polarities.
/// Deterministic in `seed`.
pub fn textured_image(width: usize, height: usize, count: usize, seed: u64) -> Image {
    let mut rng = XorShift64Star::new(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            let x = rng.next_f64() * width as f64;
            let y = rng.next_f64() * height as f64;
            let s = 1.5 + rng.next_f64() * 5.0;
            let a = (rng.next_f64() - 0.5) * 0.9;
            (x, y, s, a)
        })
        .collect();
    Image::from_fn(width, height, |px, py| {
        let (px, py) = (px as f64, py as f64);
        0.5 + blobs
            .iter()
            .filter(|(x, y, s, _)| (px - x).abs() < 4.0 * s && (py - y).abs() < 4.0 * s)
            .map(|(x, y, s, a)| a * (-((px - x).powi(2) + (py - y).powi(2)) / (2.0 * s * s)).exp())
            .sum::<f64>()
    })
}

/// Similarity (rotation `deg`, `scale`) about the image centre followed by
/// a small projective tilt `(p, q)` in the bottom row, re-centred so the
/// image centre stays fixed.
pub fn centred_warp(
    width: usize,
    height: usize,
    deg: f64,
    scale: f64,
    p: f64,
    q: f64,
) -> Homography {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let (s, c) = deg.to_radians().sin_cos();
    let to_origin = Homography::translation(-cx, -cy);
    let back = Homography::translation(cx, cy);
    let sim = Homography::from_rows([
        [scale * c, -scale * s, 0.0],
        [scale * s, scale * c, 0.0],
        [0.0, 0.0, 1.0],
    ])
    .expect("similarity is invertible");
    let tilt = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [p, q, 1.0]])
        .expect("tilt is invertible");
    back.compose(&tilt)
        .and_then(|h| h.compose(&sim))
        .and_then(|h| h.compose(&to_origin))
        .expect("composition of invertible maps")
}

/// A textured scene and its image under `h`, both `width x height`.
pub fn warped_pair(
    width: usize,
    height: usize,
    blobs: usize,
    seed: u64,
    h: &Homography,
) -> (Image, Image) {
    let a = textured_image(width, height, blobs, seed);
    let b = warp_perspective(&a, h, width, height, 0.5);
    (a, b)
}
