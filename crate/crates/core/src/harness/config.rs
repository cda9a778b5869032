//! Benchmark run configuration (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::descriptor::DescribeParams;
use crate::detector::DetectorParams;
use crate::distance::Metric;
use crate::eval::Aggregator;
use crate::geometry::RansacParams;
use crate::matcher::{MatchParams, Method};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding one sub-directory per subset.
    pub dataset_root: PathBuf,
    pub subsets: Vec<String>,
    pub output_dir: PathBuf,
    /// Image file name template, `{}` is replaced by 1..=6. When absent,
    /// `img{}.pgm`, `img{}.ppm` and `img{}.pnm` are tried in that order.
    #[serde(default)]
    pub image_pattern: Option<String>,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub patch: PatchSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub matcher: MatcherGrid,
    #[serde(default)]
    pub ransac: RansacSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub chart: ChartSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub base_sigma: f64,
    pub scales_per_octave: usize,
    pub octaves: Option<usize>,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub max_keypoints: Option<usize>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorParams::default();
        Self {
            base_sigma: d.base_sigma,
            scales_per_octave: d.scales_per_octave,
            octaves: d.octaves,
            contrast_threshold: d.contrast_threshold,
            edge_ratio: d.edge_ratio,
            max_keypoints: d.max_keypoints,
        }
    }
}

impl DetectorSection {
    pub fn params(&self) -> DetectorParams {
        DetectorParams {
            base_sigma: self.base_sigma,
            scales_per_octave: self.scales_per_octave,
            octaves: self.octaves,
            contrast_threshold: self.contrast_threshold,
            edge_ratio: self.edge_ratio,
            max_keypoints: self.max_keypoints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    #[default]
    Raw,
    Cnn {
        config: PathBuf,
        weights: PathBuf,
        /// Overrides the network config's tap (e.g. "fc6", "fc7").
        tap: String,
    },
    /// Precomputed `KPD1` files at `<dir>/<subset>/img<k>.kpd`.
    Import { dir: PathBuf },
}

impl BackendSpec {
    pub fn label(&self) -> &'static str {
        match self {
            BackendSpec::Raw => "raw",
            BackendSpec::Cnn { .. } => "cnn",
            BackendSpec::Import { .. } => "import",
        }
    }

    pub fn tap(&self) -> &str {
        match self {
            BackendSpec::Cnn { tap, .. } => tap,
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchSection {
    /// Window side in pixels at the base detector scale.
    pub window: f64,
    /// Side of the resized patch fed to the raw backend.
    pub raw_side: usize,
    pub normalize: bool,
}

impl Default for PatchSection {
    fn default() -> Self {
        Self {
            window: 64.0,
            raw_side: 16,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub names: Vec<String>,
    pub minkowski_r: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            names: [
                "cityblock",
                "euclidean",
                "cosine",
                "minkowski",
                "correlation",
            ]
            .map(String::from)
            .to_vec(),
            minkowski_r: 3.0,
        }
    }
}

impl MetricsSection {
    pub fn metrics(&self) -> Result<Vec<Metric>, HarnessError> {
        self.names
            .iter()
            .map(|n| {
                let m: Metric = n
                    .parse()
                    .map_err(|e| HarnessError::Config(format!("metrics: {e}")))?;
                Ok(match m {
                    Metric::Minkowski(_) if n.trim().eq_ignore_ascii_case("minkowski") => {
                        Metric::Minkowski(self.minkowski_r)
                    }
                    m => m,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatcherGrid {
    pub methods: Vec<String>,
    pub nn_thresholds: Vec<f64>,
    pub nnr_thresholds: Vec<f64>,
}

impl Default for MatcherGrid {
    fn default() -> Self {
        Self::standard()
    }
}

impl MatcherGrid {
    /// All four methods at NN {0.3, 0.5, 0.7} and NNR {1.1, 1.2, 1.3}.
    pub fn standard() -> Self {
        Self {
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            nn_thresholds: vec![0.3, 0.5, 0.7],
            nnr_thresholds: vec![1.1, 1.2, 1.3],
        }
    }

    /// The standard grid plus NN threshold 0.8.
    pub fn with_nn_08() -> Self {
        Self {
            nn_thresholds: vec![0.3, 0.5, 0.7, 0.8],
            ..Self::standard()
        }
    }

    /// Grid cells in run order: methods as listed, thresholds as listed.
    pub fn cells(&self) -> Result<Vec<MatchParams>, HarnessError> {
        let mut out = Vec::new();
        for name in &self.methods {
            let method: Method = name
                .parse()
                .map_err(|e| HarnessError::Config(format!("matcher: {e}")))?;
            let thresholds = if method.is_ratio() {
                &self.nnr_thresholds
            } else {
                &self.nn_thresholds
            };
            for &t in thresholds {
                out.push(
                    MatchParams::new(method, t)
                        .map_err(|e| HarnessError::Config(format!("matcher: {e}")))?,
                );
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacSection {
    pub max_iterations: usize,
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacSection {
    fn default() -> Self {
        let r = RansacParams::default();
        Self {
            max_iterations: r.max_iterations,
            inlier_threshold: r.inlier_threshold,
            min_inliers: r.min_inliers,
            seed: r.seed,
        }
    }
}

impl RansacSection {
    pub fn params(&self) -> RansacParams {
        RansacParams {
            max_iterations: self.max_iterations,
            inlier_threshold: self.inlier_threshold,
            min_inliers: self.min_inliers,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// "mean" or "median" aggregation of keypoint errors.
    pub aggregator: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            aggregator: "mean".into(),
        }
    }
}

/// Which matcher cell the per-subset charts plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChartSection {
    pub method: String,
    pub threshold: f64,
}

impl Default for ChartSection {
    fn default() -> Self {
        Self {
            method: "nnr1".into(),
            threshold: 1.1,
        }
    }
}

/// Fully checked, ready-to-run view of a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Settings {
    pub detector: DetectorParams,
    pub describe: DescribeParams,
    pub raw_side: usize,
    pub metrics: Vec<Metric>,
    pub cells: Vec<MatchParams>,
    pub ransac: RansacParams,
    pub aggregator: Aggregator,
    pub chart: (Method, f64),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset_root);
        fix(&mut self.output_dir);
        match &mut self.backend {
            BackendSpec::Raw => {}
            BackendSpec::Cnn {
                config, weights, ..
            } => {
                fix(config);
                fix(weights);
            }
            BackendSpec::Import { dir } => fix(dir),
        }
    }

    /// Checks everything that can be checked without touching the dataset
    /// images: parameters, grids and path existence.
    pub fn settings(&self) -> Result<Settings, HarnessError> {
        let cfg_err = |m: String| HarnessError::Config(m);
        if self.subsets.is_empty() {
            return Err(cfg_err("subsets list is empty".into()));
        }
        let detector = self.detector.params();
        detector.validate().map_err(|e| cfg_err(e.to_string()))?;
        if !(self.patch.window > 0.0) || self.patch.raw_side == 0 {
            return Err(cfg_err(
                "patch.window and patch.raw_side must be positive".into(),
            ));
        }
        let metrics = self.metrics.metrics()?;
        if metrics.is_empty() {
            return Err(cfg_err("metrics list is empty".into()));
        }
        let cells = self.matcher.cells()?;
        if cells.is_empty() {
            return Err(cfg_err("matcher grid is empty".into()));
        }
        let ransac = self.ransac.params();
        ransac.validate().map_err(|e| cfg_err(e.to_string()))?;
        let aggregator: Aggregator = self
            .eval
            .aggregator
            .parse()
            .map_err(|e| cfg_err(format!("eval: {e}")))?;
        let chart_method: Method = self
            .chart
            .method
            .parse()
            .map_err(|e| cfg_err(format!("chart: {e}")))?;

        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(cfg_err(format!("{what} does not exist: {}", p.display())))
            }
        };
        must_exist(&self.dataset_root, "dataset_root")?;
        match &self.backend {
            BackendSpec::Raw => {}
            BackendSpec::Cnn {
                config, weights, ..
            } => {
                must_exist(config, "backend.config")?;
                must_exist(weights, "backend.weights")?;
            }
            BackendSpec::Import { dir } => must_exist(dir, "backend.dir")?,
        }
        Ok(Settings {
            describe: DescribeParams {
                window: self.patch.window,
                base_sigma: detector.base_sigma,
                normalize: self.patch.normalize,
            },
            detector,
            raw_side: self.patch.raw_side,
            metrics,
            cells,
            ransac,
            aggregator,
            chart: (chart_method, self.chart.threshold),
        })
    }
}

impl Settings {
    /// Settings for in-memory runs: every default, raw patches.
    pub fn defaults() -> Self {
        let detector = DetectorParams::default();
        Self {
            describe: DescribeParams::default(),
            detector,
            raw_side: PatchSection::default().raw_side,
            metrics: Metric::all(3.0).to_vec(),
            cells: MatcherGrid::standard().cells().expect("standard grid is valid"),
            ransac: RansacParams::default(),
            aggregator: Aggregator::Mean,
            chart: (Method::Nnr1, 1.1),
        }
    }

    /// Rows produced per image pair.
    pub fn cells_per_pair(&self) -> usize {
        self.metrics.len() * self.cells.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        "dataset_root = \".\"\nsubsets = [\"graf\"]\noutput_dir = \"out\"\n".into()
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_toml(&minimal()).unwrap();
        assert_eq!(cfg.backend, BackendSpec::Raw);
        assert_eq!(cfg.patch.window, 64.0);
        let s = cfg.settings().unwrap();
        assert_eq!(s.cells_per_pair(), 60);
        assert_eq!(s.metrics[3], Metric::Minkowski(3.0));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml(&(minimal() + "colour = true\n")).is_err());
        assert!(RunConfig::from_toml(&(minimal() + "[ransac]\nseeds = 3\n")).is_err());
    }

    #[test]
    fn empty_subsets_rejected() {
        let cfg = RunConfig::from_toml("dataset_root = \".\"\nsubsets = []\noutput_dir = \"o\"\n")
            .unwrap();
        assert!(matches!(cfg.settings(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn bad_grid_rejected() {
        let cfg = RunConfig::from_toml(
            &(minimal() + "[matcher]\nmethods = [\"nn1\"]\nnn_thresholds = [1.2]\n"),
        )
        .unwrap();
        assert!(cfg.settings().is_err());
        let cfg = RunConfig::from_toml(&(minimal() + "[matcher]\nmethods = [\"nnr9\"]\n")).unwrap();
        assert!(cfg.settings().is_err());
    }

    #[test]
    fn missing_paths_rejected() {
        let cfg = RunConfig::from_toml(
            &(minimal() + "[backend]\nkind = \"cnn\"\nconfig = \"/nonexistent/net.toml\"\nweights = \"/nonexistent/w.bin\"\ntap = \"fc6\"\n"),
        )
        .unwrap();
        assert!(
            matches!(cfg.settings(), Err(HarnessError::Config(m)) if m.contains("backend.config"))
        );
    }

    #[test]
    fn conclusion_preset() {
        let g = MatcherGrid::with_nn_08();
        assert_eq!(g.cells().unwrap().len(), 2 * 4 + 2 * 3);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::from_toml(&minimal()).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
