//! Registration quality measures for one image pair: keypoint error under
//! the ground-truth and the RANSAC homography, true positives and the
//! RANSAC inlier ratio.

use std::str::FromStr;

use thiserror::Error;

use crate::detector::Keypoint;
use crate::geometry::{ransac_homography, Correspondence, Homography, Point2, RansacParams};
use crate::matcher::MatchPair;

/// Ground-truth reprojection radius, in pixels, for a true positive.
pub const TP_RADIUS: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("match ({idx_a}, {idx_b}) indexes past the keypoint lists ({len_a}, {len_b})")]
    IndexOutOfRange {
        idx_a: usize,
        idx_b: usize,
        len_a: usize,
        len_b: usize,
    },
    #[error("unknown aggregator {0:?}")]
    UnknownAggregator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregator {
    #[default]
    Mean,
    Median,
}

impl FromStr for Aggregator {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "median" => Ok(Aggregator::Median),
            _ => Err(EvalError::UnknownAggregator(s.into())),
        }
    }
}

impl Aggregator {
    fn apply(&self, mut errors: Vec<f64>) -> Option<f64> {
        if errors.is_empty() {
            return None;
        }
        match self {
            Aggregator::Mean => Some(errors.iter().sum::<f64>() / errors.len() as f64),
            Aggregator::Median => {
                errors.sort_by(f64::total_cmp);
                let n = errors.len();
                Some(if n % 2 == 1 {
                    errors[n / 2]
                } else {
                    (errors[n / 2 - 1] + errors[n / 2]) / 2.0
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub n_matches: usize,
    pub ke_gh: Option<f64>,
    pub tp: usize,
    pub ke_ch: Option<f64>,
    pub inlier_ratio: Option<f64>,
    pub ransac_failed: bool,
}

pub fn matched_points(
    matches: &[MatchPair],
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
) -> Result<Vec<Correspondence>, EvalError> {
    matches
        .iter()
        .map(|m| match (kps_a.get(m.idx_a), kps_b.get(m.idx_b)) {
            (Some(a), Some(b)) => Ok(Correspondence::new(
                Point2::new(a.x, a.y),
                Point2::new(b.x, b.y),
            )),
            _ => Err(EvalError::IndexOutOfRange {
                idx_a: m.idx_a,
                idx_b: m.idx_b,
                len_a: kps_a.len(),
                len_b: kps_b.len(),
            }),
        })
        .collect()
}

/// Per-correspondence reprojection errors; a point mapped to infinity
/// counts as an infinite error.
pub fn reprojection_errors(pairs: &[Correspondence], h: &Homography) -> Vec<f64> {
    pairs
        .iter()
        .map(|c| h.apply(c.p1).map_or(f64::INFINITY, |p| p.distance(&c.p2)))
        .collect()
}

pub fn keypoint_error(
    matches: &[MatchPair],
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h: &Homography,
) -> Result<Option<f64>, EvalError> {
    keypoint_error_with(matches, kps_a, kps_b, h, Aggregator::Mean)
}

pub fn keypoint_error_with(
    matches: &[MatchPair],
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h: &Homography,
    agg: Aggregator,
) -> Result<Option<f64>, EvalError> {
    let pairs = matched_points(matches, kps_a, kps_b)?;
    Ok(agg.apply(reprojection_errors(&pairs, h)))
}

pub fn true_positives(
    matches: &[MatchPair],
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_gt: &Homography,
) -> Result<usize, EvalError> {
    let pairs = matched_points(matches, kps_a, kps_b)?;
    Ok(reprojection_errors(&pairs, h_gt)
        .iter()
        .filter(|&&e| e < TP_RADIUS)
        .count())
}

/// Full report for one set of matches. RANSAC failures are recorded in the
/// report rather than returned as errors.
pub fn evaluate_pair(
    matches: &[MatchPair],
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_gt: &Homography,
    ransac: &RansacParams,
) -> Result<EvalReport, EvalError> {
    evaluate_pair_with(matches, kps_a, kps_b, h_gt, ransac, Aggregator::Mean)
}

pub fn evaluate_pair_with(
    matches: &[MatchPair],
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_gt: &Homography,
    ransac: &RansacParams,
    agg: Aggregator,
) -> Result<EvalReport, EvalError> {
    let pairs = matched_points(matches, kps_a, kps_b)?;
    let gt_errors = reprojection_errors(&pairs, h_gt);
    let tp = gt_errors.iter().filter(|&&e| e < TP_RADIUS).count();
    let ke_gh = agg.apply(gt_errors);

    let (ke_ch, inlier_ratio, ransac_failed) = match ransac_homography(&pairs, ransac) {
        Ok(fit) => (
            agg.apply(reprojection_errors(&pairs, &fit.homography)),
            Some(fit.inlier_count() as f64 / pairs.len() as f64),
            false,
        ),
        Err(_) => (None, None, true),
    };
    Ok(EvalReport {
        n_matches: pairs.len(),
        ke_gh,
        tp,
        ke_ch,
        inlier_ratio,
        ransac_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint {
            x,
            y,
            sigma: 1.6,
            octave: 0,
            response: 0.1,
        }
    }

    fn m(a: usize, b: usize) -> MatchPair {
        MatchPair {
            idx_a: a,
            idx_b: b,
            d1: 0.0,
            d2: 1.0,
            norm_d1: 0.0,
        }
    }

    #[test]
    fn identity_zero_error() {
        let a = vec![kp(1.0, 2.0), kp(5.0, 5.0)];
        let e = keypoint_error(&[m(0, 0), m(1, 1)], &a, &a, &Homography::IDENTITY).unwrap();
        assert_eq!(e, Some(0.0));
    }

    #[test]
    fn three_four_five() {
        let a = vec![kp(1.0, 2.0)];
        let b = vec![kp(4.0, 6.0)];
        assert_eq!(
            keypoint_error(&[m(0, 0)], &a, &b, &Homography::IDENTITY).unwrap(),
            Some(5.0)
        );
    }

    #[test]
    fn empty_matches_are_absent() {
        assert_eq!(
            keypoint_error(&[], &[], &[], &Homography::IDENTITY).unwrap(),
            None
        );
        let r = evaluate_pair(
            &[],
            &[],
            &[],
            &Homography::IDENTITY,
            &RansacParams::default(),
        )
        .unwrap();
        assert_eq!(r.n_matches, 0);
        assert!(r.ke_gh.is_none() && r.ke_ch.is_none() && r.inlier_ratio.is_none());
        assert!(r.ransac_failed);
    }

    #[test]
    fn index_out_of_range() {
        let a = vec![kp(0.0, 0.0)];
        assert!(matches!(
            true_positives(&[m(0, 3)], &a, &a, &Homography::IDENTITY),
            Err(EvalError::IndexOutOfRange { idx_b: 3, .. })
        ));
    }

    #[test]
    fn tp_boundary_is_strict() {
        let a = vec![kp(0.0, 0.0)];
        let b = vec![kp(2.0, 0.0)];
        assert_eq!(
            true_positives(&[m(0, 0)], &a, &b, &Homography::IDENTITY).unwrap(),
            0
        );
        let b = vec![kp(1.999, 0.0)];
        assert_eq!(
            true_positives(&[m(0, 0)], &a, &b, &Homography::IDENTITY).unwrap(),
            1
        );
    }

    #[test]
    fn tp_counts_planted_offsets() {
        let a: Vec<Keypoint> = (0..9)
            .map(|i| kp(10.0 * i as f64, 3.0 * i as f64))
            .collect();
        // First 6 offset by 1 px, last 3 by 5 px.
        let b: Vec<Keypoint> = a
            .iter()
            .enumerate()
            .map(|(i, k)| {
                if i < 6 {
                    kp(k.x + 1.0, k.y)
                } else {
                    kp(k.x, k.y + 5.0)
                }
            })
            .collect();
        let ms: Vec<MatchPair> = (0..9).map(|i| m(i, i)).collect();
        assert_eq!(
            true_positives(&ms, &a, &b, &Homography::IDENTITY).unwrap(),
            6
        );
    }

    #[test]
    fn too_few_matches_flag_ransac() {
        let a = vec![kp(0.0, 0.0), kp(5.0, 1.0), kp(2.0, 7.0)];
        let ms: Vec<MatchPair> = (0..3).map(|i| m(i, i)).collect();
        let r =
            evaluate_pair(&ms, &a, &a, &Homography::IDENTITY, &RansacParams::default()).unwrap();
        assert!(r.ransac_failed);
        assert_eq!(r.ke_gh, Some(0.0));
        assert_eq!(r.tp, 3);
        assert!(r.ke_ch.is_none());
    }

    #[test]
    fn median_aggregator() {
        let a = vec![kp(0.0, 0.0); 4];
        let b = vec![kp(1.0, 0.0), kp(2.0, 0.0), kp(10.0, 0.0), kp(3.0, 0.0)];
        let ms: Vec<MatchPair> = (0..4).map(|i| m(i, i)).collect();
        let med =
            keypoint_error_with(&ms, &a, &b, &Homography::IDENTITY, Aggregator::Median).unwrap();
        assert_eq!(med, Some(2.5));
        let mean = keypoint_error(&ms, &a, &b, &Homography::IDENTITY).unwrap();
        assert_eq!(mean, Some(4.0));
    }
}
