//! Planar projective geometry: homographies, normalized DLT fitting and
//! RANSAC robust estimation.
//!
//! A [`Homography`] maps image-1 pixel coordinates to image-2 pixel
//! coordinates, `p2 ~ H p1`. Matrices are always kept in canonical scale
//! (`m[2][2] = 1` when possible, unit Frobenius norm otherwise) so that two
//! estimates of the same map compare entrywise.

use std::fmt;

use nalgebra::{DMatrix, Matrix3};
use thiserror::Error;

use crate::rng::XorShift64Star;

const W_EPS: f64 = 1e-12;
const DET_EPS: f64 = 1e-12;
/// Collinearity tolerance on Hartley-normalized coordinates.
pub const COLLINEAR_EPS: f64 = 1e-9;
/// Relative singular-value gap below which the DLT system is rank deficient.
const RANK_EPS: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point maps to infinity (|w| = {0:e})")]
    DegeneratePoint(f64),
    #[error("homography parse error: {0}")]
    Parse(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("matrix is not an invertible homography")]
    NotInvertible,
    #[error("insufficient data: need at least 4 correspondences, got {0}")]
    InsufficientData(usize),
    #[error("no consensus: best model has {found} inliers, need {required}")]
    NoConsensus { found: usize, required: usize },
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p1: Point2,
    pub p2: Point2,
}

impl Correspondence {
    pub const fn new(p1: Point2, p2: Point2) -> Self {
        Self { p1, p2 }
    }
}

/// 3x3 projective map stored row-major in canonical scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Builds a homography from a row-major matrix, applying canonical
    /// normalization and rejecting non-finite or singular input.
    pub fn from_rows(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NotInvertible);
        }
        let m = canonicalize(m).ok_or(GeometryError::NotInvertible)?;
        let det = Matrix3::from(m).transpose().determinant();
        if det.abs() <= DET_EPS || !det.is_finite() {
            return Err(GeometryError::NotInvertible);
        }
        Ok(Self { m })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn to_array(&self) -> [f64; 9] {
        let m = self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn from_array(a: [f64; 9]) -> Result<Self, GeometryError> {
        Self::from_rows([[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.m[r][c]
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = to_na(&self.m)
            .try_inverse()
            .ok_or(GeometryError::NotInvertible)?;
        Self::from_rows(from_na(&inv))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self, GeometryError> {
        Self::from_rows(from_na(&(to_na(&self.m) * to_na(&other.m))))
    }

    pub fn apply(&self, p: Point2) -> Result<Point2, GeometryError> {
        apply_homography(self, p)
    }

    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Text form accepted by [`parse_homography_file`]: three lines of three
    /// reals, shortest round-trip decimal representation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for row in &self.m {
            s.push_str(&format!("{:e} {:e} {:e}\n", row[0], row[1], row[2]));
        }
        s
    }
}

impl fmt::Display for Homography {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.m {
            writeln!(f, "{:.9} {:.9} {:.9}", row[0], row[1], row[2])?;
        }
        Ok(())
    }
}

fn to_na(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
    )
}

fn from_na(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

fn canonicalize(mut m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let fro = m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if fro == 0.0 || !fro.is_finite() {
        return None;
    }
    let m22 = m[2][2];
    let scale = if m22.abs() > W_EPS * fro { m22 } else { fro };
    for v in m.iter_mut().flatten() {
        *v /= scale;
    }
    Some(m)
}

pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2, GeometryError> {
    let m = &h.m;
    let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    if w.abs() <= W_EPS {
        return Err(GeometryError::DegeneratePoint(w));
    }
    Ok(Point2 {
        x: (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
        y: (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
    })
}

/// Parses the dataset ground-truth format: exactly nine whitespace separated
/// reals in row-major order.
pub fn parse_homography_file(text: &[u8]) -> Result<Homography, GeometryError> {
    let text = std::str::from_utf8(text)
        .map_err(|e| GeometryError::Parse(format!("not valid UTF-8: {e}")))?;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 9 {
        return Err(GeometryError::Parse(format!(
            "expected 9 values, found {}",
            tokens.len()
        )));
    }
    let mut a = [0.0; 9];
    for (slot, tok) in a.iter_mut().zip(&tokens) {
        let v: f64 = tok
            .parse()
            .map_err(|_| GeometryError::Parse(format!("not a real number: {tok:?}")))?;
        if !v.is_finite() {
            return Err(GeometryError::Parse(format!("non-finite value: {tok:?}")));
        }
        *slot = v;
    }
    Homography::from_array(a).map_err(|_| GeometryError::Parse("matrix is singular".into()))
}

/// Similarity transform taking a point set to zero centroid and mean
/// distance sqrt(2) from the origin.
#[derive(Debug, Clone, Copy)]
struct Normalizer {
    cx: f64,
    cy: f64,
    s: f64,
}

impl Normalizer {
    fn fit<'a>(points: impl Iterator<Item = &'a Point2> + Clone) -> Option<Self> {
        let n = points.clone().count() as f64;
        let (sx, sy) = points
            .clone()
            .fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
        let (cx, cy) = (sx / n, sy / n);
        let mean_d = points.map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
        if !(mean_d > 0.0) || !mean_d.is_finite() {
            return None;
        }
        Some(Self {
            cx,
            cy,
            s: std::f64::consts::SQRT_2 / mean_d,
        })
    }

    fn apply(&self, p: &Point2) -> Point2 {
        Point2::new((p.x - self.cx) * self.s, (p.y - self.cy) * self.s)
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.s,
            0.0,
            -self.s * self.cx,
            0.0,
            self.s,
            -self.s * self.cy,
            0.0,
            0.0,
            1.0,
        )
    }

    fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.s,
            0.0,
            self.cx,
            0.0,
            1.0 / self.s,
            self.cy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Least-squares homography from `n >= 4` correspondences using the direct
/// linear transform on Hartley-normalized coordinates.
pub fn estimate_homography_dlt(pairs: &[Correspondence]) -> Result<Homography, GeometryError> {
    let n = pairs.len();
    if n < 4 {
        return Err(GeometryError::InsufficientData(n));
    }
    if pairs.iter().any(|c| !c.p1.is_finite() || !c.p2.is_finite()) {
        return Err(GeometryError::DegenerateConfiguration(
            "non-finite coordinate".into(),
        ));
    }
    let degenerate = || GeometryError::DegenerateConfiguration("coincident points".into());
    let t1 = Normalizer::fit(pairs.iter().map(|c| &c.p1)).ok_or_else(degenerate)?;
    let t2 = Normalizer::fit(pairs.iter().map(|c| &c.p2)).ok_or_else(degenerate)?;

    // SVD needs at least as many rows as columns to expose the full right
    // singular basis; pad the 8x9 minimal system with a zero row.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, c) in pairs.iter().enumerate() {
        let p = t1.apply(&c.p1);
        let q = t2.apply(&c.p2);
        let (r0, r1) = (2 * i, 2 * i + 1);
        a[(r0, 0)] = -p.x;
        a[(r0, 1)] = -p.y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = q.x * p.x;
        a[(r0, 7)] = q.x * p.y;
        a[(r0, 8)] = q.x;
        a[(r1, 3)] = -p.x;
        a[(r1, 4)] = -p.y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = q.y * p.x;
        a[(r1, 7)] = q.y * p.y;
        a[(r1, 8)] = q.y;
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| GeometryError::DegenerateConfiguration("SVD failed".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let smallest = order[0];
    let largest = sv[order[order.len() - 1]];
    let second = sv[order[1]];
    if !(largest > 0.0) || second <= RANK_EPS * largest {
        return Err(GeometryError::DegenerateConfiguration(
            "design matrix is rank deficient".into(),
        ));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let full = t2.inverse_matrix() * hn * t1.matrix();
    Homography::from_rows(from_na(&full))
        .map_err(|_| GeometryError::DegenerateConfiguration("fitted matrix is singular".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Reprojection error bound in pixels (strict `<`).
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            inlier_threshold: 2.0,
            min_inliers: 4,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.max_iterations < 1 {
            return Err(GeometryError::InvalidParams(
                "max_iterations must be >= 1".into(),
            ));
        }
        if !(self.inlier_threshold > 0.0) || !self.inlier_threshold.is_finite() {
            return Err(GeometryError::InvalidParams(
                "inlier_threshold must be a positive real".into(),
            ));
        }
        if self.min_inliers < 4 {
            return Err(GeometryError::InvalidParams(
                "min_inliers must be >= 4".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    pub inlier_mask: Vec<bool>,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

fn reprojection_error(h: &Homography, c: &Correspondence) -> f64 {
    match apply_homography(h, c.p1) {
        Ok(p) => p.distance(&c.p2),
        Err(_) => f64::INFINITY,
    }
}

fn cross(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn has_collinear_triple(pts: [Point2; 4]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES
        .iter()
        .any(|t| cross(&pts[t[0]], &pts[t[1]], &pts[t[2]]).abs() < COLLINEAR_EPS)
}

fn draw_sample(rng: &mut XorShift64Star, n: usize) -> [usize; 4] {
    let mut idx = [0usize; 4];
    let mut k = 0;
    while k < 4 {
        let candidate = rng.next_index(n);
        if !idx[..k].contains(&candidate) {
            idx[k] = candidate;
            k += 1;
        }
    }
    idx
}

/// Robust homography fit with a fixed iteration budget.
///
/// Every iteration draws four distinct correspondences, skips samples with a
/// collinear triple in either image, fits a DLT model and counts pairs whose
/// reprojection error is below the threshold. The model with the most
/// inliers wins (ties: smaller summed inlier error, then earlier iteration).
/// The returned matrix is the DLT refit on the winning inlier set; the mask
/// is the winning model's inlier set.
pub fn ransac_homography(
    pairs: &[Correspondence],
    params: &RansacParams,
) -> Result<RansacResult, GeometryError> {
    params.validate()?;
    let n = pairs.len();
    if n < 4 {
        return Err(GeometryError::InsufficientData(n));
    }
    let no_consensus = GeometryError::NoConsensus {
        found: 0,
        required: params.min_inliers,
    };
    let t1 = Normalizer::fit(pairs.iter().map(|c| &c.p1)).ok_or(no_consensus.clone())?;
    let t2 = Normalizer::fit(pairs.iter().map(|c| &c.p2)).ok_or(no_consensus)?;
    let norm1: Vec<Point2> = pairs.iter().map(|c| t1.apply(&c.p1)).collect();
    let norm2: Vec<Point2> = pairs.iter().map(|c| t2.apply(&c.p2)).collect();

    let mut rng = XorShift64Star::new(params.seed);
    let mut best: Option<(usize, f64, Homography)> = None;
    let mut sample = Vec::with_capacity(4);

    for _ in 0..params.max_iterations {
        let idx = draw_sample(&mut rng, n);
        if has_collinear_triple(idx.map(|i| norm1[i]))
            || has_collinear_triple(idx.map(|i| norm2[i]))
        {
            continue;
        }
        sample.clear();
        sample.extend(idx.iter().map(|&i| pairs[i]));
        let Ok(h) = estimate_homography_dlt(&sample) else {
            continue;
        };
        let (count, sum) = pairs.iter().fold((0usize, 0.0f64), |(cnt, s), c| {
            let e = reprojection_error(&h, c);
            if e < params.inlier_threshold {
                (cnt + 1, s + e)
            } else {
                (cnt, s)
            }
        });
        let better = match &best {
            None => true,
            Some((bc, bs, _)) => count > *bc || (count == *bc && sum < *bs),
        };
        if better {
            best = Some((count, sum, h));
        }
    }

    let Some((count, _, consensus)) = best else {
        return Err(GeometryError::NoConsensus {
            found: 0,
            required: params.min_inliers,
        });
    };
    if count < params.min_inliers {
        return Err(GeometryError::NoConsensus {
            found: count,
            required: params.min_inliers,
        });
    }
    let inlier_mask: Vec<bool> = pairs
        .iter()
        .map(|c| reprojection_error(&consensus, c) < params.inlier_threshold)
        .collect();
    let inliers: Vec<Correspondence> = pairs
        .iter()
        .zip(&inlier_mask)
        .filter_map(|(c, &m)| m.then_some(*c))
        .collect();
    let homography = estimate_homography_dlt(&inliers).unwrap_or(consensus);
    Ok(RansacResult {
        homography,
        inlier_mask,
    })
}
