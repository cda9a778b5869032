//! Feature-based image registration: a Difference-of-Gaussians detector,
//! raw-patch and CNN descriptors, distance metrics, nearest-neighbour
//! matchers, homography estimation with RANSAC, registration quality
//! measures and a benchmark harness that sweeps them over a dataset.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod descriptor;
pub mod detector;
pub mod distance;
pub mod eval;
pub mod geometry;
pub mod harness;
pub mod imaging;
pub mod matcher;
pub mod rng;
pub mod synth;

use thiserror::Error;

use descriptor::{CnnError, DescriptorError};
use detector::DetectError;
use distance::DistanceError;
use eval::EvalError;
use geometry::GeometryError;
use harness::HarnessError;
use imaging::ImageError;
use matcher::MatchError;

/// Process exit codes used by the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    /// Invalid configuration, parameters or network definition.
    pub const CONFIG: i32 = 1;
    /// Missing or malformed input data.
    pub const DATA: i32 = 2;
    pub const INTERNAL: i32 = 3;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Match(_) => exit::CONFIG,
            Error::Cnn(_) => exit::CONFIG,
            Error::Detect(DetectError::InvalidParams(_)) => exit::CONFIG,
            Error::Geometry(GeometryError::InvalidParams(_)) => exit::CONFIG,
            Error::Distance(DistanceError::UnknownMetric(_) | DistanceError::BadOrder(_)) => {
                exit::CONFIG
            }
            Error::Eval(EvalError::UnknownAggregator(_)) => exit::CONFIG,
            Error::Eval(EvalError::IndexOutOfRange { .. }) => exit::INTERNAL,
            Error::Descriptor(DescriptorError::Cnn(_)) => exit::CONFIG,
            Error::Harness(HarnessError::Config(_)) => exit::CONFIG,
            _ => exit::DATA,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
