use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use featreg::descriptor::{
    describe_keypoints, read_descriptors, validate_network, write_descriptors, Backend,
    DescribeParams, Network, NetworkConfig, WeightsBlob,
};
use featreg::detector::{detect_keypoints, format_keypoints, DetectorParams};
use featreg::distance::{distance_matrix, Metric};
use featreg::eval::{evaluate_pair_with, Aggregator};
use featreg::geometry::{parse_homography_file, RansacParams};
use featreg::harness::{emit_report, run_benchmark, RunConfig};
use featreg::imaging::{load_image, to_grayscale, Image};
use featreg::matcher::{format_matches, match_descriptors, MatchParams, Method};
use featreg::{exit, Error, Result};

#[derive(Parser)]
#[command(
    name = "featreg",
    version,
    about = "Feature-based image registration toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect DoG keypoints and print `x y sigma octave response` per line.
    Detect {
        image: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Detect and describe keypoints, writing a KPD1 descriptor file.
    Describe {
        image: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Match two KPD1 files and print `idx_a idx_b d1 d2` per match.
    Match {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        matcher: MatcherArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Register two images; prints the estimated homography and, with
    /// `--gt`, the quality measures.
    Register {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        matcher: MatcherArgs,
        #[command(flatten)]
        ransac: RansacArgs,
        /// Ground-truth homography file (nine numbers).
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, default_value = "mean")]
        aggregator: String,
    },
    /// Run the benchmark grid described by a TOML run configuration.
    Bench {
        config: PathBuf,
        /// Overrides `output_dir` from the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a network configuration and print each layer's output shape.
    ValidateNet {
        config: PathBuf,
        /// Also check that a weights blob has the expected size.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DetectorArgs {
    #[arg(long, default_value_t = 1.6)]
    sigma: f64,
    #[arg(long, default_value_t = 3)]
    scales: usize,
    #[arg(long)]
    octaves: Option<usize>,
    #[arg(long, default_value_t = 0.03)]
    contrast: f64,
    #[arg(long, default_value_t = 10.0)]
    edge_ratio: f64,
    #[arg(long)]
    max_keypoints: Option<usize>,
}

impl DetectorArgs {
    fn params(&self) -> DetectorParams {
        DetectorParams {
            base_sigma: self.sigma,
            scales_per_octave: self.scales,
            octaves: self.octaves,
            contrast_threshold: self.contrast,
            edge_ratio: self.edge_ratio,
            max_keypoints: self.max_keypoints,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Raw,
    Cnn,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "raw")]
    backend: BackendKind,
    /// Raw patch side.
    #[arg(long, default_value_t = 16)]
    raw_side: usize,
    /// Patch window side at the base scale.
    #[arg(long, default_value_t = 64.0)]
    window: f64,
    #[arg(long)]
    no_normalize: bool,
    /// Network configuration (TOML) for the CNN backend.
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Layer whose activations form the descriptor; defaults to the
    /// configuration's tap.
    #[arg(long)]
    tap: Option<String>,
}

impl BackendArgs {
    fn network(&self) -> Result<Option<Network>> {
        match self.backend {
            BackendKind::Raw => Ok(None),
            BackendKind::Cnn => {
                let (Some(net), Some(weights)) = (&self.net, &self.weights) else {
                    return Err(Error::Usage(
                        "--backend cnn needs --net and --weights".into(),
                    ));
                };
                let mut cfg = NetworkConfig::load(net)?;
                if let Some(tap) = &self.tap {
                    cfg.tap = tap.clone();
                }
                let blob = WeightsBlob::from_bytes(&read(weights)?)?;
                Ok(Some(Network::new(cfg, &blob)?))
            }
        }
    }

    fn describe_params(&self, base_sigma: f64) -> DescribeParams {
        DescribeParams {
            window: self.window,
            base_sigma,
            normalize: !self.no_normalize,
        }
    }
}

#[derive(Args)]
struct MatcherArgs {
    #[arg(long, default_value = "euclidean")]
    metric: String,
    #[arg(long, default_value = "nnr1")]
    method: String,
    #[arg(long, default_value_t = 1.1)]
    threshold: f64,
}

impl MatcherArgs {
    fn parse(&self) -> Result<(Metric, MatchParams)> {
        let metric: Metric = self.metric.parse()?;
        metric.validate()?;
        let method: Method = self.method.parse()?;
        Ok((metric, MatchParams::new(method, self.threshold)?))
    }
}

#[derive(Args)]
struct RansacArgs {
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 2.0)]
    inlier_threshold: f64,
    #[arg(long, default_value_t = 4)]
    min_inliers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RansacArgs {
    fn params(&self) -> RansacParams {
        RansacParams {
            max_iterations: self.iterations,
            inlier_threshold: self.inlier_threshold,
            min_inliers: self.min_inliers,
            seed: self.seed,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn image(path: &Path) -> Result<Image> {
    Ok(load_image(&read(path)?)?)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn describe_image(
    img: &Image,
    detector: &DetectorArgs,
    backend: &BackendArgs,
    net: Option<&Network>,
) -> Result<featreg::descriptor::DescriptorSet> {
    let params = detector.params();
    let kps = detect_keypoints(&to_grayscale(img), &params)?;
    let b = match net {
        Some(n) => Backend::Cnn(n),
        None => Backend::RawPatch {
            side: backend.raw_side,
        },
    };
    Ok(describe_keypoints(
        img,
        &kps,
        b,
        &backend.describe_params(params.base_sigma),
    )?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect {
            image: path,
            detector,
            out,
        } => {
            let img = image(&path)?;
            let kps = detect_keypoints(&to_grayscale(&img), &detector.params())?;
            emit(out.as_deref(), format_keypoints(&kps).as_bytes())
        }
        Command::Describe {
            image: path,
            detector,
            backend,
            out,
        } => {
            let img = image(&path)?;
            let net = backend.network()?;
            let set = describe_image(&img, &detector, &backend, net.as_ref())?;
            eprintln!(
                "{} descriptors of dim {} ({} out of bounds, {} zero)",
                set.len(),
                set.dim,
                set.dropped_out_of_bounds,
                set.dropped_zero
            );
            emit(out.as_deref(), &write_descriptors(&set))
        }
        Command::Match { a, b, matcher, out } => {
            let (metric, params) = matcher.parse()?;
            let da = read_descriptors(&read(&a)?)?;
            let db = read_descriptors(&read(&b)?)?;
            let dm = distance_matrix(&da, &db, metric)?;
            let matches = match_descriptors(&dm, &params)?;
            emit(out.as_deref(), format_matches(&matches).as_bytes())
        }
        Command::Register {
            a,
            b,
            detector,
            backend,
            matcher,
            ransac,
            gt,
            aggregator,
        } => {
            let (metric, params) = matcher.parse()?;
            let agg: Aggregator = aggregator.parse()?;
            let ransac = ransac.params();
            ransac.validate()?;
            let h_gt = gt
                .as_deref()
                .map(|p| read(p).and_then(|b| Ok(parse_homography_file(&b)?)))
                .transpose()?;
            let net = backend.network()?;
            let da = describe_image(&image(&a)?, &detector, &backend, net.as_ref())?;
            let db = describe_image(&image(&b)?, &detector, &backend, net.as_ref())?;
            let dm = distance_matrix(&da, &db, metric)?;
            let matches = match_descriptors(&dm, &params)?;
            let pairs = featreg::eval::matched_points(&matches, &da.keypoints, &db.keypoints)?;
            let fit = featreg::geometry::ransac_homography(&pairs, &ransac)?;
            println!("keypoints {} {}", da.len(), db.len());
            println!("matches {}", matches.len());
            println!("inliers {}", fit.inlier_count());
            print!("{}", fit.homography);
            if let Some(h_gt) = h_gt {
                let r = evaluate_pair_with(
                    &matches,
                    &da.keypoints,
                    &db.keypoints,
                    &h_gt,
                    &ransac,
                    agg,
                )?;
                println!("ke_gh {}", opt(r.ke_gh));
                println!("tp {}", r.tp);
                println!("ke_ch {}", opt(r.ke_ch));
                println!("inlier_ratio {}", opt(r.inlier_ratio));
            }
            Ok(())
        }
        Command::Bench { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let settings = cfg.settings()?;
            let rows = run_benchmark(&cfg)?;
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            let written = emit_report(&rows, &cfg.output_dir, settings.chart)?;
            eprintln!(
                "{} rows ({} with errors) -> {}",
                rows.len(),
                failed,
                cfg.output_dir.display()
            );
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::ValidateNet { config, weights } => {
            let cfg = NetworkConfig::load(&config)?;
            let trace = validate_network(&cfg)?;
            println!(
                "input {}x{}x{}",
                cfg.input.side, cfg.input.side, cfg.input.channels
            );
            for (name, shape) in &trace {
                let mark = if *name == cfg.tap { "  <- tap" } else { "" };
                println!("{name} {shape}{mark}");
            }
            println!("parameters {}", cfg.parameter_count());
            if let Some(w) = weights {
                let blob = WeightsBlob::from_bytes(&read(&w)?)?;
                Network::new(cfg, &blob)?;
                println!("weights ok");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
