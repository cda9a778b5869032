//! Dissimilarity measures between descriptor vectors and dense distance
//! matrices between descriptor sets.
//!
//! All sums accumulate in `f64` whatever the storage type. Cosine and
//! correlation are reported as `1 - similarity`, so every measure is zero for
//! identical directions and non-negative.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::descriptor::DescriptorSet;

const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty vectors")]
    Empty,
    #[error("zero vector has no direction (rows {0:?})")]
    ZeroVector(Vec<usize>),
    #[error("constant vector has no correlation (rows {0:?})")]
    ConstantVector(Vec<usize>),
    #[error("Minkowski order must be positive and finite, got {0}")]
    BadOrder(f64),
    #[error("descriptor dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Cityblock,
    Euclidean,
    Cosine,
    Minkowski(f64),
    Correlation,
}

impl Metric {
    /// The five measures of the benchmark grid, Minkowski at order `r`.
    pub fn all(r: f64) -> [Metric; 5] {
        [
            Metric::Cityblock,
            Metric::Euclidean,
            Metric::Cosine,
            Metric::Minkowski(r),
            Metric::Correlation,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Cityblock => "cityblock",
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::Minkowski(_) => "minkowski",
            Metric::Correlation => "correlation",
        }
    }

    pub fn validate(&self) -> Result<(), DistanceError> {
        match *self {
            Metric::Minkowski(r) if !(r > 0.0 && r.is_finite()) => Err(DistanceError::BadOrder(r)),
            _ => Ok(()),
        }
    }

    pub fn eval<T: Copy + Into<f64>>(&self, p: &[T], q: &[T]) -> Result<f64, DistanceError> {
        match *self {
            Metric::Cityblock => cityblock(p, q),
            Metric::Euclidean => euclidean(p, q),
            Metric::Cosine => cosine_distance(p, q),
            Metric::Minkowski(r) => minkowski(p, q, r),
            Metric::Correlation => correlation_distance(p, q),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Minkowski(r) => write!(f, "minkowski{r}"),
            m => f.write_str(m.name()),
        }
    }
}

/// Accepts `cityblock`, `euclidean`, `cosine`, `correlation`, `minkowski`
/// (order 3) and `minkowski<r>` / `minkowski:<r>`.
impl FromStr for Metric {
    type Err = DistanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let m = match lower.as_str() {
            "cityblock" | "manhattan" | "l1" => Metric::Cityblock,
            "euclidean" | "l2" => Metric::Euclidean,
            "cosine" => Metric::Cosine,
            "correlation" => Metric::Correlation,
            "minkowski" => Metric::Minkowski(3.0),
            other => {
                let r = other
                    .strip_prefix("minkowski")
                    .map(|t| t.trim_start_matches(':'))
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| DistanceError::UnknownMetric(s.to_string()))?;
                Metric::Minkowski(r)
            }
        };
        m.validate()?;
        Ok(m)
    }
}

fn check<T>(p: &[T], q: &[T]) -> Result<(), DistanceError> {
    if p.len() != q.len() {
        return Err(DistanceError::LengthMismatch(p.len(), q.len()));
    }
    if p.is_empty() {
        return Err(DistanceError::Empty);
    }
    Ok(())
}

fn diffs<'a, T: Copy + Into<f64>>(p: &'a [T], q: &'a [T]) -> impl Iterator<Item = f64> + 'a {
    p.iter().zip(q).map(|(&a, &b)| a.into() - b.into())
}

pub fn cityblock<T: Copy + Into<f64>>(p: &[T], q: &[T]) -> Result<f64, DistanceError> {
    check(p, q)?;
    Ok(diffs(p, q).map(f64::abs).sum())
}

pub fn euclidean<T: Copy + Into<f64>>(p: &[T], q: &[T]) -> Result<f64, DistanceError> {
    check(p, q)?;
    Ok(diffs(p, q).map(|d| d * d).sum::<f64>().sqrt())
}

pub fn minkowski<T: Copy + Into<f64>>(p: &[T], q: &[T], r: f64) -> Result<f64, DistanceError> {
    Metric::Minkowski(r).validate()?;
    check(p, q)?;
    Ok(diffs(p, q)
        .map(|d| d.abs().powf(r))
        .sum::<f64>()
        .powf(1.0 / r))
}

pub fn cosine_distance<T: Copy + Into<f64>>(p: &[T], q: &[T]) -> Result<f64, DistanceError> {
    check(p, q)?;
    let (mut dot, mut pp, mut qq) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(q) {
        let (a, b): (f64, f64) = (a.into(), b.into());
        dot += a * b;
        pp += a * a;
        qq += b * b;
    }
    let (np, nq) = (pp.sqrt(), qq.sqrt());
    let zero: Vec<usize> = [(0, np), (1, nq)]
        .iter()
        .filter(|(_, n)| *n <= DEGENERATE_EPS)
        .map(|(i, _)| *i)
        .collect();
    if !zero.is_empty() {
        return Err(DistanceError::ZeroVector(zero));
    }
    Ok(similarity_to_distance(dot / (np * nq)))
}

pub fn correlation_distance<T: Copy + Into<f64>>(p: &[T], q: &[T]) -> Result<f64, DistanceError> {
    check(p, q)?;
    let n = p.len() as f64;
    let mp = p.iter().map(|&v| v.into()).sum::<f64>() / n;
    let mq = q.iter().map(|&v| v.into()).sum::<f64>() / n;
    let (mut cov, mut vp, mut vq) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(q) {
        let (a, b) = (a.into() - mp, b.into() - mq);
        cov += a * b;
        vp += a * a;
        vq += b * b;
    }
    let constant: Vec<usize> = [(0, vp / n), (1, vq / n)]
        .iter()
        .filter(|(_, v)| *v <= DEGENERATE_EPS)
        .map(|(i, _)| *i)
        .collect();
    if !constant.is_empty() {
        return Err(DistanceError::ConstantVector(constant));
    }
    Ok(similarity_to_distance(cov / (vp.sqrt() * vq.sqrt())))
}

fn similarity_to_distance(s: f64) -> f64 {
    (1.0 - s).clamp(0.0, 2.0)
}

/// `rows x cols` matrix of pairwise distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub metric: Metric,
}

impl DistanceMatrix {
    /// Builds a matrix from explicit values; entries must be finite and
    /// non-negative.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>, metric: Metric) -> Option<Self> {
        (values.len() == rows * cols && values.iter().all(|v| v.is_finite() && *v >= 0.0))
            .then_some(Self {
                rows,
                cols,
                values,
                metric,
            })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// CSV dump: one line per row, comma separated.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Per-row statistics cached so the inner loop is one dot product.
struct Prepared {
    /// Row values in f64, centred for correlation.
    rows: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn prepare(set: &DescriptorSet, centre: bool) -> Prepared {
    let rows: Vec<Vec<f64>> = set
        .rows()
        .map(|r| {
            let v: Vec<f64> = r.iter().map(|&x| x as f64).collect();
            if centre {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.into_iter().map(|x| x - m).collect()
            } else {
                v
            }
        })
        .collect();
    let norms = rows
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    Prepared { rows, norms }
}

fn degenerate_rows(p: &Prepared, dim: usize, centred: bool) -> Vec<usize> {
    p.norms
        .iter()
        .enumerate()
        .filter(|(_, &n)| {
            if centred {
                n * n / dim as f64 <= DEGENERATE_EPS
            } else {
                n <= DEGENERATE_EPS
            }
        })
        .map(|(i, _)| i)
        .collect()
}

/// Computes `metric(A.row(i), B.row(j))` for every pair.
///
/// Rows that violate the metric's preconditions are reported together:
/// indices `< A.len()` refer to `A`, the rest are `A.len() + j` for row `j`
/// of `B`.
pub fn distance_matrix(
    a: &DescriptorSet,
    b: &DescriptorSet,
    metric: Metric,
) -> Result<DistanceMatrix, DistanceError> {
    metric.validate()?;
    if a.dim != b.dim {
        return Err(DistanceError::DimMismatch(a.dim, b.dim));
    }
    let (rows, cols, dim) = (a.len(), b.len(), a.dim);
    if dim == 0 && rows * cols > 0 {
        return Err(DistanceError::Empty);
    }

    let values: Vec<f64> = match metric {
        Metric::Cosine | Metric::Correlation => {
            let centre = metric == Metric::Correlation;
            let pa = prepare(a, centre);
            let pb = prepare(b, centre);
            let mut bad = degenerate_rows(&pa, dim, centre);
            bad.extend(
                degenerate_rows(&pb, dim, centre)
                    .into_iter()
                    .map(|j| rows + j),
            );
            if !bad.is_empty() {
                return Err(if centre {
                    DistanceError::ConstantVector(bad)
                } else {
                    DistanceError::ZeroVector(bad)
                });
            }
            (0..rows)
                .into_par_iter()
                .flat_map_iter(|i| {
                    let (ra, na) = (&pa.rows[i], pa.norms[i]);
                    let pb = &pb;
                    (0..cols).map(move |j| {
                        let dot: f64 = ra.iter().zip(&pb.rows[j]).map(|(x, y)| x * y).sum();
                        similarity_to_distance(dot / (na * pb.norms[j]))
                    })
                })
                .collect()
        }
        _ => (0..rows)
            .into_par_iter()
            .flat_map_iter(|i| {
                let ra = a.row(i);
                (0..cols).map(move |j| metric.eval(ra, b.row(j)).expect("validated"))
            })
            .collect(),
    };
    Ok(DistanceMatrix {
        rows,
        cols,
        values,
        metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Keypoint;

    fn set(rows: &[&[f32]]) -> DescriptorSet {
        let kp = Keypoint {
            x: 0.0,
            y: 0.0,
            sigma: 1.0,
            octave: 0,
            response: 1.0,
        };
        DescriptorSet::new(vec![kp; rows.len()], rows.concat(), rows[0].len()).unwrap()
    }

    #[test]
    fn cityblock_examples() {
        assert_eq!(cityblock(&[1.0, 2.0], &[4.0, 6.0]).unwrap(), 7.0);
        assert_eq!(cityblock(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(matches!(
            cityblock(&[1.0], &[1.0, 2.0]),
            Err(DistanceError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean(&[0.3f32, 0.1], &[0.3, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_examples() {
        assert!(cosine_distance(&[0.3, -1.2, 4.0], &[0.3, -1.2, 4.0]).unwrap() < 1e-12);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 1.0], &[-1.0, -1.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(
            cosine_distance(&[0.0, 0.0], &[1.0, 1.0]),
            Err(DistanceError::ZeroVector(_))
        ));
    }

    #[test]
    fn minkowski_examples() {
        let d = minkowski(&[0.0, 0.0], &[1.0, 1.0], 3.0).unwrap();
        assert!((d - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
        assert!((d - 1.259921).abs() < 1e-6);
        assert!(matches!(
            minkowski(&[0.0], &[1.0], 0.0),
            Err(DistanceError::BadOrder(_))
        ));
        assert!(matches!(
            minkowski(&[0.0], &[1.0], -1.0),
            Err(DistanceError::BadOrder(_))
        ));
    }

    #[test]
    fn correlation_examples() {
        let p = [0.5, -1.0, 2.0, 3.5];
        let q: Vec<f64> = p.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!(correlation_distance(&p, &q).unwrap() < 1e-12);
        let z = [-1.0, 2.0, -3.0, 2.0];
        let nz: Vec<f64> = z.iter().map(|v| -v).collect();
        assert!((correlation_distance(&z, &nz).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            correlation_distance(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(DistanceError::ConstantVector(v)) if v == vec![0]
        ));
    }

    #[test]
    fn parse_metric_names() {
        assert_eq!("cosine".parse::<Metric>().unwrap(), Metric::Cosine);
        assert_eq!(
            "minkowski".parse::<Metric>().unwrap(),
            Metric::Minkowski(3.0)
        );
        assert_eq!(
            "minkowski:1.5".parse::<Metric>().unwrap(),
            Metric::Minkowski(1.5)
        );
        assert_eq!(
            "Minkowski4".parse::<Metric>().unwrap(),
            Metric::Minkowski(4.0)
        );
        assert!("hamming".parse::<Metric>().is_err());
        assert!("minkowski:-2".parse::<Metric>().is_err());
    }

    #[test]
    fn matrix_single_unit() {
        let a = set(&[&[0.6, 0.8]]);
        let m = distance_matrix(&a, &a, Metric::Euclidean).unwrap();
        assert_eq!((m.rows, m.cols), (1, 1));
        assert_eq!(m.values, vec![0.0]);
    }

    #[test]
    fn matrix_zero_row_under_cosine() {
        let a = set(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let b = set(&[&[1.0, 1.0]]);
        match distance_matrix(&a, &b, Metric::Cosine) {
            Err(DistanceError::ZeroVector(rows)) => assert_eq!(rows, vec![1]),
            other => panic!("{other:?}"),
        }
        // Euclidean has no such precondition.
        assert!(distance_matrix(&a, &b, Metric::Euclidean).is_ok());
        // Offending rows of B are offset by |A|.
        match distance_matrix(&b, &a, Metric::Cosine) {
            Err(DistanceError::ZeroVector(rows)) => assert_eq!(rows, vec![2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matrix_dim_mismatch() {
        let a = set(&[&[1.0, 0.0]]);
        let b = set(&[&[1.0, 0.0, 3.0]]);
        assert!(matches!(
            distance_matrix(&a, &b, Metric::Cityblock),
            Err(DistanceError::DimMismatch(2, 3))
        ));
    }

    #[test]
    fn matrix_empty_sets() {
        let a = DescriptorSet::empty(4);
        let b = set(&[&[1.0, 0.0, 0.0, 1.0]]);
        let m = distance_matrix(&a, &b, Metric::Cosine).unwrap();
        assert_eq!((m.rows, m.cols), (0, 1));
    }
}
