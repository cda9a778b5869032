//! Nearest-neighbour matching strategies over a distance matrix.
//!
//! * `nn1`: accept each row's nearest column when its min-max normalized
//!   distance is below the threshold.
//! * `nn2`: `nn1` restricted to mutual nearest neighbours.
//! * `nnr1`: accept when `d2 / d1 >= threshold` (second-nearest over
//!   nearest, so thresholds are >= 1 and larger is stricter).
//! * `nnr2`: `nnr1` for the row, the same ratio test down the chosen
//!   column, and mutual nearest neighbours.
//!
//! Ties always resolve to the smallest index.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::distance::DistanceMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("ratio matching needs at least 2 columns, matrix has {0}")]
    TooFewColumns(usize),
    #[error("invalid threshold {threshold} for {method}")]
    BadThreshold { method: Method, threshold: f64 },
    #[error("unknown matching method {0:?}")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Nn1,
    Nn2,
    Nnr1,
    Nnr2,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nn1, Method::Nn2, Method::Nnr1, Method::Nnr2];

    pub fn is_ratio(&self) -> bool {
        matches!(self, Method::Nnr1 | Method::Nnr2)
    }

    pub fn is_two_way(&self) -> bool {
        matches!(self, Method::Nn2 | Method::Nnr2)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Nn1 => "nn1",
            Method::Nn2 => "nn2",
            Method::Nnr1 => "nnr1",
            Method::Nnr2 => "nnr2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nn1" | "1nn" => Ok(Method::Nn1),
            "nn2" | "2nn" => Ok(Method::Nn2),
            "nnr1" | "1nnr" => Ok(Method::Nnr1),
            "nnr2" | "2nnr" => Ok(Method::Nnr2),
            _ => Err(MatchError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub method: Method,
    pub threshold: f64,
}

impl MatchParams {
    pub fn new(method: Method, threshold: f64) -> Result<Self, MatchError> {
        let p = Self { method, threshold };
        p.validate()?;
        Ok(p)
    }

    /// NN thresholds live in `(0, 1]`, ratio thresholds in `[1, inf)`.
    pub fn validate(&self) -> Result<(), MatchError> {
        let t = self.threshold;
        let ok = if self.method.is_ratio() {
            t >= 1.0 && t.is_finite()
        } else {
            t > 0.0 && t <= 1.0
        };
        if ok {
            Ok(())
        } else {
            Err(MatchError::BadThreshold {
                method: self.method,
                threshold: t,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub idx_a: usize,
    pub idx_b: usize,
    /// Nearest distance in row `idx_a`.
    pub d1: f64,
    /// Second-nearest distance in the same row (`inf` with one column).
    pub d2: f64,
    /// `d1` min-max normalized over the whole matrix.
    pub norm_d1: f64,
}

/// Smallest and second-smallest entries (distinct positions) of a sequence;
/// the smallest index wins ties.
fn two_smallest(values: impl Iterator<Item = f64>) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut second = f64::INFINITY;
    for (j, v) in values.enumerate() {
        match best {
            None => best = Some((j, v)),
            Some((_, b)) if v < b => {
                second = b;
                best = Some((j, v));
            }
            Some(_) => second = second.min(v),
        }
    }
    best.map(|(j, d1)| (j, d1, second))
}

fn ratio_passes(d1: f64, d2: f64, threshold: f64) -> bool {
    if d1 == 0.0 {
        d2 > 0.0
    } else {
        d2 / d1 >= threshold
    }
}

pub fn match_descriptors(
    d: &DistanceMatrix,
    params: &MatchParams,
) -> Result<Vec<MatchPair>, MatchError> {
    params.validate()?;
    let method = params.method;
    if method.is_ratio() && d.cols < 2 && d.rows > 0 {
        return Err(MatchError::TooFewColumns(d.cols));
    }
    if d.rows == 0 || d.cols == 0 {
        return Ok(Vec::new());
    }

    let (lo, hi) = d
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let normalize = |v: f64| {
        if span > 0.0 {
            ((v - lo) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };

    let column_best: Vec<Option<(usize, f64, f64)>> = if method.is_two_way() {
        (0..d.cols)
            .map(|j| two_smallest((0..d.rows).map(|i| d.get(i, j))))
            .collect()
    } else {
        Vec::new()
    };

    let mut out = Vec::new();
    for i in 0..d.rows {
        let (j, d1, d2) = two_smallest(d.row(i).iter().copied()).expect("cols > 0");
        let norm_d1 = normalize(d1);
        let mutual = || column_best[j].is_some_and(|(k, _, _)| k == i);
        let accept = match method {
            Method::Nn1 => norm_d1 < params.threshold,
            Method::Nn2 => norm_d1 < params.threshold && mutual(),
            Method::Nnr1 => ratio_passes(d1, d2, params.threshold),
            Method::Nnr2 => {
                ratio_passes(d1, d2, params.threshold)
                    && mutual()
                    && d.rows >= 2
                    && column_best[j]
                        .is_some_and(|(_, c1, c2)| ratio_passes(c1, c2, params.threshold))
            }
        };
        if accept {
            out.push(MatchPair {
                idx_a: i,
                idx_b: j,
                d1,
                d2,
                norm_d1,
            });
        }
    }
    Ok(out)
}

/// One match per line: `idx_a idx_b d1 d2`.
pub fn format_matches(matches: &[MatchPair]) -> String {
    matches
        .iter()
        .map(|m| format!("{} {} {} {}\n", m.idx_a, m.idx_b, m.d1, m.d2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::Metric;

    fn dm(rows: &[&[f64]]) -> DistanceMatrix {
        DistanceMatrix::from_values(rows.len(), rows[0].len(), rows.concat(), Metric::Euclidean)
            .unwrap()
    }

    fn pairs(m: &[MatchPair]) -> Vec<(usize, usize)> {
        m.iter().map(|p| (p.idx_a, p.idx_b)).collect()
    }

    #[test]
    fn diagonal_nn1() {
        let d = dm(&[&[0.1, 0.9], &[0.9, 0.1]]);
        let m = match_descriptors(&d, &MatchParams::new(Method::Nn1, 0.5).unwrap()).unwrap();
        assert_eq!(pairs(&m), vec![(0, 0), (1, 1)]);
        assert!(m.iter().all(|p| p.norm_d1 == 0.0));
    }

    #[test]
    fn shared_column_ratio() {
        let d = dm(&[&[1.0, 2.0], &[1.0, 2.0]]);
        let m = match_descriptors(&d, &MatchParams::new(Method::Nnr1, 1.1).unwrap()).unwrap();
        assert_eq!(pairs(&m), vec![(0, 0), (1, 0)]);
        assert!(m.iter().all(|p| p.d2 / p.d1 == 2.0));
        // Column 0 holds 1.0 twice: the column ratio test sees d2/d1 = 1,
        // so nnr2 keeps nothing at 1.1; with threshold 1.0 only row 0 (the
        // column's argmin by tie-break) survives.
        let m2 = match_descriptors(&d, &MatchParams::new(Method::Nnr2, 1.1).unwrap()).unwrap();
        assert!(m2.is_empty());
        let m2 = match_descriptors(&d, &MatchParams::new(Method::Nnr2, 1.0).unwrap()).unwrap();
        assert_eq!(pairs(&m2), vec![(0, 0)]);
    }

    #[test]
    fn ratio_threshold_one_accepts_all_distinct() {
        let d = dm(&[
            &[0.5, 0.7, 0.9],
            &[0.0, 0.0, 1.0],
            &[0.0, 0.3, 0.4],
            &[0.2, 0.2, 0.1],
        ]);
        let m = match_descriptors(&d, &MatchParams::new(Method::Nnr1, 1.0).unwrap()).unwrap();
        // Row 1 has d1 = d2 = 0: ambiguous and rejected.
        assert_eq!(pairs(&m), vec![(0, 0), (2, 0), (3, 2)]);
        assert!(m[1].d2.is_finite() && m[1].d1 == 0.0);
    }

    #[test]
    fn constant_matrix_normalizes_to_zero() {
        let d = dm(&[&[0.4, 0.4], &[0.4, 0.4]]);
        let m = match_descriptors(&d, &MatchParams::new(Method::Nn1, 0.3).unwrap()).unwrap();
        assert_eq!(pairs(&m), vec![(0, 0), (1, 0)]);
        let m = match_descriptors(&d, &MatchParams::new(Method::Nn2, 0.3).unwrap()).unwrap();
        assert_eq!(pairs(&m), vec![(0, 0)]);
    }

    #[test]
    fn single_column() {
        let d = dm(&[&[0.4], &[0.2]]);
        assert!(matches!(
            match_descriptors(&d, &MatchParams::new(Method::Nnr1, 1.2).unwrap()),
            Err(MatchError::TooFewColumns(1))
        ));
        let m = match_descriptors(&d, &MatchParams::new(Method::Nn1, 0.5).unwrap()).unwrap();
        assert_eq!(pairs(&m), vec![(1, 0)]);
        assert!(m[0].d2.is_infinite());
    }

    #[test]
    fn threshold_validation() {
        assert!(MatchParams::new(Method::Nn1, 0.0).is_err());
        assert!(MatchParams::new(Method::Nn2, 1.5).is_err());
        assert!(MatchParams::new(Method::Nnr1, 0.8).is_err());
        assert!(MatchParams::new(Method::Nnr2, 1.0).is_ok());
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("knn".parse::<Method>().is_err());
    }

    #[test]
    fn dump_format() {
        let d = dm(&[&[0.25, 0.5]]);
        let m = match_descriptors(&d, &MatchParams::new(Method::Nnr1, 1.1).unwrap()).unwrap();
        assert_eq!(format_matches(&m), "0 0 0.25 0.5\n");
    }
}
