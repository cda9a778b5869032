//! Dataset ingestion and the benchmark grid runner.
//!
//! A subset directory holds six images (the reference first) and the five
//! ground-truth homographies `H1to2p` .. `H1to6p`. Every pair `(1, k)` is
//! scored over the grid `metrics x methods x thresholds`; each grid cell
//! becomes one [`ResultRow`].

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{BackendSpec, MatcherGrid, RunConfig, Settings};
pub use report::{emit_report, read_results_csv, write_results_csv};

use crate::descriptor::{
    describe_keypoints, read_descriptors, Backend, DescriptorSet, Network, NetworkConfig,
    WeightsBlob,
};
use crate::detector::detect_keypoints;
use crate::distance::distance_matrix;
use crate::eval::evaluate_pair_with;
use crate::geometry::{parse_homography_file, Homography};
use crate::imaging::{load_image, to_grayscale, Image};
use crate::matcher::match_descriptors;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("{file}: {message}")]
    Data { file: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn data_err(path: &Path, message: impl ToString) -> HarnessError {
    HarnessError::Data {
        file: path.display().to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSubset {
    pub name: String,
    /// `images[0]` is the reference image.
    pub images: Vec<Image>,
    /// `homographies[k - 2]` maps image 1 onto image `k`.
    pub homographies: Vec<Homography>,
}

fn image_path(dir: &Path, k: usize, pattern: Option<&str>) -> Result<PathBuf, HarnessError> {
    match pattern {
        Some(p) => {
            let path = dir.join(p.replace("{}", &k.to_string()));
            if path.is_file() {
                Ok(path)
            } else {
                Err(HarnessError::MissingFile(
                    path.file_name()
                        .unwrap_or_default()
                        .to_string_lossy()
                        .into(),
                ))
            }
        }
        None => ["pgm", "ppm", "pnm"]
            .iter()
            .map(|ext| dir.join(format!("img{k}.{ext}")))
            .find(|p| p.is_file())
            .ok_or_else(|| HarnessError::MissingFile(format!("img{k}"))),
    }
}

/// Loads `img1..img6` and `H1to2p..H1to6p` from `dir`.
pub fn load_subset(dir: &Path, image_pattern: Option<&str>) -> Result<DatasetSubset, HarnessError> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let mut image_paths = Vec::with_capacity(6);
    for k in 1..=6 {
        image_paths.push(image_path(dir, k, image_pattern)?);
    }
    let mut h_paths = Vec::with_capacity(5);
    for k in 2..=6 {
        let p = dir.join(format!("H1to{k}p"));
        if !p.is_file() {
            return Err(HarnessError::MissingFile(format!("H1to{k}p")));
        }
        h_paths.push(p);
    }
    let images = image_paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).map_err(io_err(p))?;
            load_image(&bytes).map_err(|e| data_err(p, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let homographies = h_paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).map_err(io_err(p))?;
            parse_homography_file(&bytes).map_err(|e| data_err(p, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DatasetSubset {
        name,
        images,
        homographies,
    })
}

/// Wall-clock milliseconds per stage for one grid cell. Detection and
/// description are shared by all cells of a pair and reported as the sum over
/// both images.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimes {
    pub detect_ms: f64,
    pub describe_ms: f64,
    pub distance_ms: f64,
    pub match_ms: f64,
    pub eval_ms: f64,
}

/// One grid cell for one image pair. Field order is the `results.csv`
/// column order; stage times go to `timings.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub subset: String,
    /// Index `k` of the pair `(1, k)`.
    pub pair: usize,
    pub backend: String,
    pub tap: String,
    pub metric: String,
    pub method: String,
    pub threshold: f64,
    pub n_keypoints_a: usize,
    pub n_keypoints_b: usize,
    pub n_matches: usize,
    pub tp: usize,
    pub ke_gh: Option<f64>,
    pub ke_ch: Option<f64>,
    pub inlier_ratio: Option<f64>,
    pub ransac_failed: bool,
    /// Empty when the cell ran to completion.
    pub error: String,
    #[serde(skip)]
    pub times: StageTimes,
}

/// Descriptors of one image plus the time spent producing them.
#[derive(Debug, Clone)]
pub struct Described {
    pub set: DescriptorSet,
    pub detect_ms: f64,
    pub describe_ms: f64,
}

/// Runtime form of [`BackendSpec`] with networks loaded.
#[derive(Debug, Clone)]
pub enum Describer {
    Raw { side: usize },
    Cnn { network: Box<Network>, tap: String },
    Import { dir: PathBuf },
}

impl Describer {
    pub fn from_spec(spec: &BackendSpec, raw_side: usize) -> Result<Self, HarnessError> {
        Ok(match spec {
            BackendSpec::Raw => Describer::Raw { side: raw_side },
            BackendSpec::Cnn {
                config,
                weights,
                tap,
            } => {
                let mut cfg =
                    NetworkConfig::load(config).map_err(|e| HarnessError::Config(e.to_string()))?;
                cfg.tap = tap.clone();
                let bytes = std::fs::read(weights).map_err(io_err(weights))?;
                let blob = WeightsBlob::from_bytes(&bytes).map_err(|e| data_err(weights, e))?;
                let network =
                    Network::new(cfg, &blob).map_err(|e| HarnessError::Config(e.to_string()))?;
                Describer::Cnn {
                    network: Box::new(network),
                    tap: tap.clone(),
                }
            }
            BackendSpec::Import { dir } => Describer::Import { dir: dir.clone() },
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Describer::Raw { .. } => "raw",
            Describer::Cnn { .. } => "cnn",
            Describer::Import { .. } => "import",
        }
    }

    pub fn tap(&self) -> &str {
        match self {
            Describer::Cnn { tap, .. } => tap,
            _ => "",
        }
    }

    /// Detects and describes image `k` of `subset`.
    pub fn describe(
        &self,
        subset: &str,
        k: usize,
        img: &Image,
        settings: &Settings,
    ) -> Result<Described, HarnessError> {
        let backend = match self {
            Describer::Import { dir } => {
                let path = dir.join(subset).join(format!("img{k}.kpd"));
                let start = Instant::now();
                let bytes = std::fs::read(&path).map_err(io_err(&path))?;
                let set = read_descriptors(&bytes).map_err(|e| data_err(&path, e))?;
                return Ok(Described {
                    set,
                    detect_ms: 0.0,
                    describe_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
            Describer::Raw { side } => Backend::RawPatch { side: *side },
            Describer::Cnn { network, .. } => Backend::Cnn(network),
        };
        let label = format!("{subset}/img{k}");
        let start = Instant::now();
        let kps = detect_keypoints(&to_grayscale(img), &settings.detector).map_err(|e| {
            HarnessError::Data {
                file: label.clone(),
                message: e.to_string(),
            }
        })?;
        let detect_ms = start.elapsed().as_secs_f64() * 1e3;
        let start = Instant::now();
        let set = describe_keypoints(img, &kps, backend, &settings.describe).map_err(|e| {
            HarnessError::Data {
                file: label,
                message: e.to_string(),
            }
        })?;
        Ok(Described {
            set,
            detect_ms,
            describe_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Scores one described pair over every grid cell, in grid order.
pub fn run_pair(
    subset: &str,
    pair: usize,
    a: &Described,
    b: &Described,
    h_gt: &Homography,
    describer: &Describer,
    settings: &Settings,
) -> Vec<ResultRow> {
    let base_times = StageTimes {
        detect_ms: a.detect_ms + b.detect_ms,
        describe_ms: a.describe_ms + b.describe_ms,
        ..StageTimes::default()
    };
    let blank = |metric: String, method: String, threshold: f64| ResultRow {
        subset: subset.to_string(),
        pair,
        backend: describer.label().to_string(),
        tap: describer.tap().to_string(),
        metric,
        method,
        threshold,
        n_keypoints_a: a.set.len(),
        n_keypoints_b: b.set.len(),
        n_matches: 0,
        tp: 0,
        ke_gh: None,
        ke_ch: None,
        inlier_ratio: None,
        ransac_failed: false,
        error: String::new(),
        times: base_times,
    };

    settings
        .metrics
        .par_iter()
        .flat_map_iter(|metric| {
            let start = Instant::now();
            let dm = distance_matrix(&a.set, &b.set, *metric);
            let distance_ms = ms_since(start);
            settings.cells.iter().map(move |cell| {
                let mut row = blank(metric.to_string(), cell.method.to_string(), cell.threshold);
                row.times.distance_ms = distance_ms;
                let dm = match &dm {
                    Ok(dm) => dm,
                    Err(e) => {
                        row.error = format!("distance: {e}");
                        return row;
                    }
                };
                let start = Instant::now();
                let matches = match match_descriptors(dm, cell) {
                    Ok(m) => m,
                    Err(e) => {
                        row.error = format!("match: {e}");
                        return row;
                    }
                };
                row.times.match_ms = ms_since(start);
                let start = Instant::now();
                match evaluate_pair_with(
                    &matches,
                    &a.set.keypoints,
                    &b.set.keypoints,
                    h_gt,
                    &settings.ransac,
                    settings.aggregator,
                ) {
                    Ok(r) => {
                        row.n_matches = r.n_matches;
                        row.tp = r.tp;
                        row.ke_gh = r.ke_gh;
                        row.ke_ch = r.ke_ch;
                        row.inlier_ratio = r.inlier_ratio;
                        row.ransac_failed = r.ransac_failed;
                    }
                    Err(e) => row.error = format!("eval: {e}"),
                }
                row.times.eval_ms = ms_since(start);
                row
            })
        })
        .collect()
}

/// Runs the whole grid over every configured subset. Rows come out ordered
/// by (subset, pair, metric, method, threshold) in configuration order.
pub fn run_benchmark(config: &RunConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let settings = config.settings()?;
    let describer = Describer::from_spec(&config.backend, settings.raw_side)?;
    let mut rows = Vec::new();
    for name in &config.subsets {
        let subset = load_subset(
            &config.dataset_root.join(name),
            config.image_pattern.as_deref(),
        )?;
        rows.extend(run_subset(&subset, &describer, &settings)?);
    }
    Ok(rows)
}

pub fn run_subset(
    subset: &DatasetSubset,
    describer: &Describer,
    settings: &Settings,
) -> Result<Vec<ResultRow>, HarnessError> {
    let described = subset
        .images
        .par_iter()
        .enumerate()
        .map(|(i, img)| describer.describe(&subset.name, i + 1, img, settings))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(subset
        .homographies
        .iter()
        .enumerate()
        .flat_map(|(i, h)| {
            run_pair(
                &subset.name,
                i + 2,
                &described[0],
                &described[i + 1],
                h,
                describer,
                settings,
            )
        })
        .collect())
}

/// Scores an in-memory image pair (image `a` as reference).
pub fn run_image_pair(
    subset: &str,
    a: &Image,
    b: &Image,
    h_gt: &Homography,
    describer: &Describer,
    settings: &Settings,
) -> Result<Vec<ResultRow>, HarnessError> {
    let da = describer.describe(subset, 1, a, settings)?;
    let db = describer.describe(subset, 2, b, settings)?;
    Ok(run_pair(subset, 2, &da, &db, h_gt, describer, settings))
}
