//! Difference-of-Gaussians keypoint detection.
//!
//! Each octave holds `scales_per_octave + 3` Gaussian levels with absolute
//! scale `base_sigma * k^i` (in octave pixels, `k = 2^(1/s)`), built by
//! incremental blurring. Adjacent levels are subtracted into DoG layers and
//! 3x3x3 extrema of the interior DoG layers become keypoints. The next octave
//! starts from the level at scale `2 * base_sigma`, decimated by two.
//!
//! Extrema stay on the integer grid of their octave (no quadratic
//! refinement) and no orientation is assigned.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::imaging::{downsample_half, gaussian_blur, Image};

/// Smallest side length an octave may have.
pub const MIN_OCTAVE_SIDE: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("image too small for the scale space: {width}x{height} (minimum side {min})")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("detector needs a single-channel image, got {0} channels")]
    NotGrayscale(usize),
    #[error("invalid detector parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Column in original-image pixels.
    pub x: f64,
    /// Row in original-image pixels.
    pub y: f64,
    /// Scale in original-image pixels.
    pub sigma: f64,
    pub octave: usize,
    /// DoG value at the extremum (signed).
    pub response: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub base_sigma: f64,
    pub scales_per_octave: usize,
    /// Upper bound on octaves; `None` builds octaves until the next one
    /// would have a side below [`MIN_OCTAVE_SIDE`].
    pub octaves: Option<usize>,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub max_keypoints: Option<usize>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            base_sigma: 1.6,
            scales_per_octave: 3,
            octaves: None,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            max_keypoints: None,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: &str| Err(DetectError::InvalidParams(m.into()));
        if !(self.base_sigma > 0.0) || !self.base_sigma.is_finite() {
            return bad("base_sigma must be positive");
        }
        if self.scales_per_octave < 1 {
            return bad("scales_per_octave must be >= 1");
        }
        if self.octaves == Some(0) {
            return bad("octaves must be positive");
        }
        if !(self.contrast_threshold > 0.0) {
            return bad("contrast_threshold must be positive");
        }
        if !(self.edge_ratio > 0.0) {
            return bad("edge_ratio must be positive");
        }
        if self.max_keypoints == Some(0) {
            return bad("max_keypoints must be positive");
        }
        Ok(())
    }

    fn k(&self) -> f64 {
        2f64.powf(1.0 / self.scales_per_octave as f64)
    }

    /// Absolute scale of Gaussian level `i` within an octave.
    pub fn level_sigma(&self, i: usize) -> f64 {
        self.base_sigma * self.k().powi(i as i32)
    }
}

/// A single-channel plane used for DoG layers (values may be negative).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone)]
pub struct Octave {
    pub index: usize,
    pub gaussians: Vec<Image>,
    pub dogs: Vec<Plane>,
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
}

fn octave_count(width: usize, height: usize, cap: Option<usize>) -> usize {
    let mut side = width.min(height);
    let mut n = 0;
    while side >= MIN_OCTAVE_SIDE {
        n += 1;
        side /= 2;
    }
    cap.map_or(n, |c| n.min(c))
}

fn check_input(img: &Image, params: &DetectorParams) -> Result<(), DetectError> {
    params.validate()?;
    if img.channels() != 1 {
        return Err(DetectError::NotGrayscale(img.channels()));
    }
    if img.width().min(img.height()) < MIN_OCTAVE_SIDE {
        return Err(DetectError::TooSmall {
            width: img.width(),
            height: img.height(),
            min: MIN_OCTAVE_SIDE,
        });
    }
    Ok(())
}

fn difference(a: &Image, b: &Image) -> Plane {
    Plane {
        width: a.width(),
        height: a.height(),
        data: b
            .data()
            .iter()
            .zip(a.data())
            .map(|(hi, lo)| hi - lo)
            .collect(),
    }
}

pub fn build_scale_space(img: &Image, params: &DetectorParams) -> Result<ScaleSpace, DetectError> {
    check_input(img, params)?;
    let n_oct = octave_count(img.width(), img.height(), params.octaves);
    let levels = params.scales_per_octave + 3;
    let increments: Vec<f64> = (1..levels)
        .map(|i| {
            let (prev, cur) = (params.level_sigma(i - 1), params.level_sigma(i));
            (cur * cur - prev * prev).sqrt()
        })
        .collect();

    let mut octaves = Vec::with_capacity(n_oct);
    let mut seed = gaussian_blur(img, params.base_sigma);
    for o in 0..n_oct {
        let mut gaussians = Vec::with_capacity(levels);
        gaussians.push(seed);
        for inc in &increments {
            let next = gaussian_blur(gaussians.last().expect("non-empty"), *inc);
            gaussians.push(next);
        }
        let dogs = gaussians
            .windows(2)
            .map(|w| difference(&w[0], &w[1]))
            .collect();
        seed = if o + 1 < n_oct {
            downsample_half(&gaussians[params.scales_per_octave]).expect("octave side >= 16")
        } else {
            Image::filled(1, 1, 1, 0.0)
        };
        octaves.push(Octave {
            index: o,
            gaussians,
            dogs,
        });
    }
    Ok(ScaleSpace { octaves })
}

fn is_extremum(dogs: &[Plane], s: usize, x: usize, y: usize) -> bool {
    let v = dogs[s].get(x, y);
    let (mut greater, mut less) = (true, true);
    for layer in &dogs[s - 1..=s + 1] {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if std::ptr::eq(layer, &dogs[s]) && nx == x && ny == y {
                    continue;
                }
                let n = layer.get(nx, ny);
                greater &= v > n;
                less &= v < n;
                if !greater && !less {
                    return false;
                }
            }
        }
    }
    greater || less
}

fn passes_edge_test(d: &Plane, x: usize, y: usize, edge_ratio: f64) -> bool {
    let c = d.get(x, y);
    let dxx = d.get(x + 1, y) + d.get(x - 1, y) - 2.0 * c;
    let dyy = d.get(x, y + 1) + d.get(x, y - 1) - 2.0 * c;
    let dxy = (d.get(x + 1, y + 1) - d.get(x - 1, y + 1) - d.get(x + 1, y - 1)
        + d.get(x - 1, y - 1))
        / 4.0;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && tr * tr / det < (edge_ratio + 1.0).powi(2) / edge_ratio
}

fn octave_keypoints(oct: &Octave, params: &DetectorParams) -> Vec<Keypoint> {
    let scale = (1usize << oct.index) as f64;
    // Geometric centre of the DoG band between levels s and s+1.
    let band = params.k().sqrt();
    let mut out = Vec::new();
    for s in 1..oct.dogs.len() - 1 {
        let d = &oct.dogs[s];
        if d.width < 3 || d.height < 3 {
            continue;
        }
        for y in 1..d.height - 1 {
            for x in 1..d.width - 1 {
                let v = d.get(x, y);
                if v.abs() < params.contrast_threshold {
                    continue;
                }
                if !is_extremum(&oct.dogs, s, x, y) || !passes_edge_test(d, x, y, params.edge_ratio)
                {
                    continue;
                }
                out.push(Keypoint {
                    x: x as f64 * scale,
                    y: y as f64 * scale,
                    sigma: params.level_sigma(s) * band * scale,
                    octave: oct.index,
                    response: v,
                });
            }
        }
    }
    out
}

fn keypoint_order(a: &Keypoint, b: &Keypoint) -> Ordering {
    b.response
        .abs()
        .total_cmp(&a.response.abs())
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
        .then(a.octave.cmp(&b.octave))
        .then(a.sigma.total_cmp(&b.sigma))
}

/// Detects DoG extrema, sorted by decreasing `|response|` with ties broken
/// by `(y, x, octave)`.
pub fn detect_keypoints(
    img: &Image,
    params: &DetectorParams,
) -> Result<Vec<Keypoint>, DetectError> {
    let space = build_scale_space(img, params)?;
    Ok(detect_in_scale_space(&space, params))
}

pub fn detect_in_scale_space(space: &ScaleSpace, params: &DetectorParams) -> Vec<Keypoint> {
    let mut kps: Vec<Keypoint> = space
        .octaves
        .par_iter()
        .flat_map_iter(|o| octave_keypoints(o, params))
        .collect();
    kps.sort_by(keypoint_order);
    if let Some(max) = params.max_keypoints {
        kps.truncate(max);
    }
    kps
}

/// One keypoint per line: `x y sigma octave response` with 9 significant
/// digits.
pub fn format_keypoints(kps: &[Keypoint]) -> String {
    let mut s = String::new();
    for k in kps {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            sig9(k.x),
            sig9(k.y),
            sig9(k.sigma),
            k.octave,
            sig9(k.response)
        );
    }
    s
}

pub fn parse_keypoints(text: &str) -> Result<Vec<Keypoint>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 5 {
                return Err(format!(
                    "line {}: expected 5 fields, found {}",
                    n + 1,
                    t.len()
                ));
            }
            let f = |i: usize| -> Result<f64, String> {
                t[i].parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("line {}: bad number {:?}", n + 1, t[i]))
            };
            Ok(Keypoint {
                x: f(0)?,
                y: f(1)?,
                sigma: f(2)?,
                octave: t[3]
                    .parse()
                    .map_err(|_| format!("line {}: bad octave {:?}", n + 1, t[3]))?,
                response: f(4)?,
            })
        })
        .collect()
}

/// Formats with 9 significant digits in scientific notation.
pub(crate) fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}
