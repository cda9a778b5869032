//! Keypoint descriptors: raw normalized patches or CNN activations, plus the
//! `KPD1` text interchange format.

pub mod cnn;

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::detector::Keypoint;
use crate::geometry::Point2;
use crate::imaging::{extract_patch, resize_square, to_grayscale, Image, ImageError, Patch};

pub use cnn::{
    validate_network, CnnError, InputSpec, LayerSpec, Network, NetworkConfig, Shape, WeightsBlob,
};

const KPD_MAGIC: &str = "KPD1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptorError {
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("descriptor file parse error: {0}")]
    Parse(String),
    #[error("invalid descriptor set: {0}")]
    Invalid(String),
}

/// Keypoints paired with an `n x dim` matrix of descriptor rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub keypoints: Vec<Keypoint>,
    /// Row-major `n x dim`.
    pub vectors: Vec<f32>,
    pub dim: usize,
    /// Every row has unit L2 norm.
    pub normalized: bool,
    /// Keypoints whose sampling window left the image.
    pub dropped_out_of_bounds: usize,
    /// Rows discarded because they were all zero.
    pub dropped_zero: usize,
}

impl DescriptorSet {
    pub fn new(
        keypoints: Vec<Keypoint>,
        vectors: Vec<f32>,
        dim: usize,
    ) -> Result<Self, DescriptorError> {
        if vectors.len() != keypoints.len() * dim {
            return Err(DescriptorError::Invalid(format!(
                "{} values for {} rows of dim {dim}",
                vectors.len(),
                keypoints.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(DescriptorError::Invalid(
                "non-finite descriptor entry".into(),
            ));
        }
        let mut set = Self {
            keypoints,
            vectors,
            dim,
            normalized: false,
            dropped_out_of_bounds: 0,
            dropped_zero: 0,
        };
        set.normalized = !set.is_empty() && set.rows().all(|r| (l2(r) - 1.0).abs() <= 1e-6);
        Ok(set)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            keypoints: Vec::new(),
            vectors: Vec::new(),
            dim,
            normalized: false,
            dropped_out_of_bounds: 0,
            dropped_zero: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        (0..self.len()).map(move |i| self.row(i))
    }
}

fn l2(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

/// Mean-centred, L2-normalized grayscale pixels. A constant patch yields the
/// zero vector.
pub fn describe_patch_raw(patch: &Patch) -> Vec<f64> {
    let gray = patch.to_grayscale();
    let mean = gray.iter().sum::<f64>() / gray.len() as f64;
    let centred: Vec<f64> = gray.iter().map(|v| v - mean).collect();
    let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return vec![0.0; centred.len()];
    }
    centred.into_iter().map(|v| v / norm).collect()
}

#[derive(Debug, Clone, Copy)]
pub enum Backend<'a> {
    /// Grayscale patch resized to `side x side`.
    RawPatch {
        side: usize,
    },
    Cnn(&'a Network),
}

impl Backend<'_> {
    pub fn input_side(&self) -> usize {
        match self {
            Backend::RawPatch { side } => *side,
            Backend::Cnn(net) => net.input_side(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Backend::RawPatch { side } => side * side,
            Backend::Cnn(net) => net.output_len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescribeParams {
    /// Window side at `base_sigma`; scaled by `kp.sigma / base_sigma`.
    pub window: f64,
    pub base_sigma: f64,
    pub normalize: bool,
}

impl Default for DescribeParams {
    fn default() -> Self {
        Self {
            window: 64.0,
            base_sigma: 1.6,
            normalize: true,
        }
    }
}

impl DescribeParams {
    pub fn effective_window(&self, kp: &Keypoint) -> usize {
        ((self.window * kp.sigma / self.base_sigma).round() as usize).max(1)
    }
}

fn cnn_input(patch: &Patch, channels: usize) -> Vec<f32> {
    match (patch.channels, channels) {
        (a, b) if a == b => patch.data.iter().map(|&v| v as f32).collect(),
        (1, 3) => patch.data.iter().flat_map(|&v| [v as f32; 3]).collect(),
        _ => patch.to_grayscale().iter().map(|&v| v as f32).collect(),
    }
}

enum Described {
    OutOfBounds,
    Row(Vec<f32>),
}

/// Describes every keypoint whose scale-adapted window fits in the image.
///
/// Survivors keep their input order. With `normalize`, rows are scaled to
/// unit L2 norm and all-zero rows are dropped.
pub fn describe_keypoints(
    img: &Image,
    kps: &[Keypoint],
    backend: Backend<'_>,
    params: &DescribeParams,
) -> Result<DescriptorSet, DescriptorError> {
    if !(params.window > 0.0) || !(params.base_sigma > 0.0) {
        return Err(DescriptorError::Invalid(
            "window and base_sigma must be positive".into(),
        ));
    }
    let source = match backend {
        Backend::RawPatch { .. } => to_grayscale(img),
        Backend::Cnn(_) => img.clone(),
    };
    let side = backend.input_side();
    let dim = backend.dim();

    let described: Vec<Result<Described, DescriptorError>> = kps
        .par_iter()
        .map(|kp| {
            let window = params.effective_window(kp);
            // Sample the full window first, then shrink: extract at the
            // native window size and resize separately so large windows
            // are averaged rather than point-sampled.
            let patch = match extract_patch(&source, Point2::new(kp.x, kp.y), window, window) {
                Ok(p) => p,
                Err(ImageError::OutOfBounds) => return Ok(Described::OutOfBounds),
                Err(e) => return Err(e.into()),
            };
            let patch = Patch {
                side,
                channels: patch.channels,
                data: shrink(&patch.data, window, patch.channels, side),
            };
            let row = match backend {
                Backend::RawPatch { .. } => describe_patch_raw(&patch)
                    .iter()
                    .map(|&v| v as f32)
                    .collect(),
                Backend::Cnn(net) => net.forward(&cnn_input(&patch, net.input_channels()))?,
            };
            Ok(Described::Row(row))
        })
        .collect();

    let mut set = DescriptorSet::empty(dim);
    for (kp, d) in kps.iter().zip(described) {
        match d? {
            Described::OutOfBounds => set.dropped_out_of_bounds += 1,
            Described::Row(mut row) => {
                if params.normalize {
                    let n = l2(&row);
                    if n < 1e-12 {
                        set.dropped_zero += 1;
                        continue;
                    }
                    row.iter_mut().for_each(|v| *v = (*v as f64 / n) as f32);
                }
                set.keypoints.push(*kp);
                set.vectors.extend_from_slice(&row);
            }
        }
    }
    set.normalized = params.normalize && !set.is_empty();
    Ok(set)
}

/// Area-aware downscale: repeated halving by 2x2 box averages while the
/// buffer is at least twice the target, then a bilinear resize.
fn shrink(data: &[f64], side: usize, channels: usize, out_side: usize) -> Vec<f64> {
    let mut cur = data.to_vec();
    let mut s = side;
    while s >= 2 * out_side && s >= 2 {
        let ns = s / 2;
        let mut next = Vec::with_capacity(ns * ns * channels);
        for y in 0..ns {
            for x in 0..ns {
                for c in 0..channels {
                    let at = |xx: usize, yy: usize| cur[(yy * s + xx) * channels + c];
                    next.push(
                        (at(2 * x, 2 * y)
                            + at(2 * x + 1, 2 * y)
                            + at(2 * x, 2 * y + 1)
                            + at(2 * x + 1, 2 * y + 1))
                            / 4.0,
                    );
                }
            }
        }
        cur = next;
        s = ns;
    }
    resize_square(&cur, s, channels, out_side)
}

/// Serializes to the `KPD1` text format.
pub fn write_descriptors(set: &DescriptorSet) -> Vec<u8> {
    let mut s = format!("{KPD_MAGIC}\n{} {}\n", set.len(), set.dim);
    for (kp, row) in set.keypoints.iter().zip(set.rows()) {
        let _ = write!(
            s,
            "{} {} {} {} {}",
            kp.x, kp.y, kp.sigma, kp.octave, kp.response
        );
        for v in row {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s.into_bytes()
}

pub fn read_descriptors(bytes: &[u8]) -> Result<DescriptorSet, DescriptorError> {
    let perr = |m: String| DescriptorError::Parse(m);
    let text = std::str::from_utf8(bytes).map_err(|e| perr(format!("not UTF-8: {e}")))?;
    let mut lines = text.lines();
    if lines.next() != Some(KPD_MAGIC) {
        return Err(perr("missing KPD1 magic".into()));
    }
    let header = lines.next().ok_or_else(|| perr("missing header".into()))?;
    let hdr: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| perr(format!("bad header token {t:?}")))
        })
        .collect::<Result<_, _>>()?;
    let [n, dim] = hdr[..] else {
        return Err(perr(format!("header must be '<n> <dim>', got {header:?}")));
    };
    let mut keypoints = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * dim);
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| perr(format!("expected {n} rows, found {i}")))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 5 + dim {
            return Err(perr(format!(
                "row {i}: expected {} fields, found {}",
                5 + dim,
                tok.len()
            )));
        }
        let real = |t: &str| -> Result<f64, DescriptorError> {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(format!("row {i}: bad number {t:?}")))
        };
        keypoints.push(Keypoint {
            x: real(tok[0])?,
            y: real(tok[1])?,
            sigma: real(tok[2])?,
            octave: tok[3]
                .parse()
                .map_err(|_| perr(format!("row {i}: bad octave {:?}", tok[3])))?,
            response: real(tok[4])?,
        });
        for t in &tok[5..] {
            let v: f32 = t
                .parse()
                .ok()
                .filter(|v: &f32| v.is_finite())
                .ok_or_else(|| perr(format!("row {i}: bad value {t:?}")))?;
            vectors.push(v);
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(perr(format!("more than {n} rows")));
    }
    DescriptorSet::new(keypoints, vectors, dim)
}
