//! Confidence refactoring: a match whose camera-B endpoint lies far from
//! where the pair homography sends its camera-A endpoint is down-weighted
//! by an unnormalized Gaussian of that distance.

use alloc::vec::Vec;

use thiserror::Error;

use crate::correspondence::{KeypointMatch, MatchSet};
use crate::geometry::Homography;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefactorError {
    #[error("distance coefficient must be positive, got {0}")]
    NonPositiveCoefficient(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefactorParams {
    /// Gaussian scale in pixels. Zero disables refactoring.
    pub distance_coefficient: f64,
    /// Average the A->B and B->A residuals instead of using A->B only.
    pub symmetric: bool,
}

impl RefactorParams {
    pub const fn new(distance_coefficient: f64) -> Self {
        Self {
            distance_coefficient,
            symmetric: false,
        }
    }

    pub fn is_disabled(&self) -> bool {
        !(self.distance_coefficient > 0.0)
    }
}

impl Default for RefactorParams {
    fn default() -> Self {
        Self::new(10.0)
    }
}

/// `exp(-d^2 / (2 coeff^2))`: 1 at zero distance, strictly decreasing.
pub fn gaussian_confidence(distance_px: f64, coeff: f64) -> Result<f64, RefactorError> {
    if !(coeff > 0.0) {
        return Err(RefactorError::NonPositiveCoefficient(coeff));
    }
    Ok(libm::exp(-(distance_px * distance_px) / (2.0 * coeff * coeff)))
}

/// Per-match record of one refactoring step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefactorDiagnostic {
    /// Reprojection residual in pixels; infinite when the point maps to infinity.
    pub distance: f64,
    pub factor: f64,
    pub old_confidence: f64,
    pub new_confidence: f64,
}

pub fn refactor_matches(ms: &MatchSet, h: &Homography, params: &RefactorParams) -> MatchSet {
    refactor_matches_with_diagnostics(ms, h, params).0
}

/// Refactors every confidence and reports both factors per match.
/// With a zero coefficient the input is returned unchanged.
pub fn refactor_matches_with_diagnostics(
    ms: &MatchSet,
    h: &Homography,
    params: &RefactorParams,
) -> (MatchSet, Vec<RefactorDiagnostic>) {
    if params.is_disabled() {
        let diag = ms
            .matches
            .iter()
            .map(|m| RefactorDiagnostic {
                distance: f64::NAN,
                factor: 1.0,
                old_confidence: m.confidence,
                new_confidence: m.confidence,
            })
            .collect();
        return (ms.clone(), diag);
    }
    let inverse = if params.symmetric { h.inverse().ok() } else { None };
    let coeff = params.distance_coefficient;

    let mut out = ms.empty_like();
    out.matches.reserve(ms.len());
    let mut diag = Vec::with_capacity(ms.len());
    for m in &ms.matches {
        let forward = h.project(&m.pt_a).map(|p| (p - m.pt_b).norm());
        let distance = match (forward, params.symmetric) {
            (Ok(d), false) => d,
            (Ok(d), true) => match inverse.as_ref().map(|inv| inv.project(&m.pt_b)) {
                Some(Ok(p)) => 0.5 * (d + (p - m.pt_a).norm()),
                _ => f64::INFINITY,
            },
            (Err(_), _) => f64::INFINITY,
        };
        let factor = if distance.is_finite() {
            libm::exp(-(distance * distance) / (2.0 * coeff * coeff))
        } else {
            0.0
        };
        let new_confidence = m.confidence * factor;
        out.matches.push(KeypointMatch {
            confidence: new_confidence,
            ..*m
        });
        diag.push(RefactorDiagnostic {
            distance,
            factor,
            old_confidence: m.confidence,
            new_confidence,
        });
    }
    (out, diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::Provenance;
    use crate::geometry::ImageSize;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Point2};
    use proptest::prelude::*;
    use std::vec;
    use std::vec::Vec;

    fn set(matches: Vec<KeypointMatch>) -> MatchSet {
        let size = ImageSize::new(1280, 720);
        MatchSet::new(5, (1, size), (4, size), matches, Provenance::Synthetic).unwrap()
    }

    #[test]
    fn gaussian_closed_forms() {
        assert_eq!(gaussian_confidence(0.0, 10.0).unwrap(), 1.0);
        assert_relative_eq!(
            gaussian_confidence(10.0, 10.0).unwrap(),
            0.606_530_659_712_633_4,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            gaussian_confidence(20.0, 10.0).unwrap(),
            0.135_335_283_236_612_7,
            epsilon = 1e-15
        );
        assert!(gaussian_confidence(1.0, 0.0).is_err());
        assert!(gaussian_confidence(1.0, -2.0).is_err());
    }

    #[test]
    fn zero_coefficient_is_identity() {
        let ms = set(vec![
            KeypointMatch {
                pt_a: Point2::new(1.0, 2.0),
                pt_b: Point2::new(400.0, 2.0),
                confidence: 0.3,
            },
            KeypointMatch {
                pt_a: Point2::new(7.0, 9.0),
                pt_b: Point2::new(7.0, 9.0),
                confidence: 1.0,
            },
        ]);
        let out = refactor_matches(&ms, &Homography::translation(3.0, 3.0), &RefactorParams::new(0.0));
        assert_eq!(out, ms);
    }

    #[test]
    fn on_prediction_keeps_confidence() {
        let h = Homography::translation(10.0, -5.0);
        let ms = set(vec![KeypointMatch {
            pt_a: Point2::new(100.0, 100.0),
            pt_b: Point2::new(110.0, 95.0),
            confidence: 0.8,
        }]);
        assert_eq!(
            refactor_matches(&ms, &h, &RefactorParams::new(5.0)).matches[0].confidence,
            0.8
        );
    }

    #[test]
    fn one_sigma_residual() {
        let ms = set(vec![KeypointMatch {
            pt_a: Point2::new(100.0, 100.0),
            pt_b: Point2::new(106.0, 108.0),
            confidence: 0.8,
        }]);
        let (out, diag) = refactor_matches_with_diagnostics(&ms, &Homography::identity(), &RefactorParams::new(10.0));
        assert_relative_eq!(out.matches[0].confidence, 0.485_224_527_770_106_7, epsilon = 1e-12);
        assert_relative_eq!(diag[0].distance, 10.0, epsilon = 1e-12);
        assert_eq!(diag[0].old_confidence, 0.8);
        assert_eq!(out.matches[0].pt_a, ms.matches[0].pt_a);
        assert_eq!(out.matches[0].pt_b, ms.matches[0].pt_b);
    }

    #[test]
    fn projection_to_infinity_zeroes_confidence() {
        let h = Homography::from_matrix(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.01, 0.0, 1.0)).unwrap();
        let ms = set(vec![KeypointMatch {
            pt_a: Point2::new(-100.0, 3.0),
            pt_b: Point2::new(0.0, 0.0),
            confidence: 0.9,
        }]);
        let (out, diag) = refactor_matches_with_diagnostics(&ms, &h, &RefactorParams::new(10.0));
        assert_eq!(out.matches[0].confidence, 0.0);
        assert!(diag[0].distance.is_infinite());
    }

    #[test]
    fn symmetric_residual_averages_directions() {
        let h = Homography::from_matrix(Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 2.0, 1.0))).unwrap();
        // forward: (20, 20) vs (26, 28) -> 10; backward: (13, 14) vs (10, 10) -> 5
        let ms = set(vec![KeypointMatch {
            pt_a: Point2::new(10.0, 10.0),
            pt_b: Point2::new(26.0, 28.0),
            confidence: 1.0,
        }]);
        let params = RefactorParams {
            distance_coefficient: 7.5,
            symmetric: true,
        };
        let (_, diag) = refactor_matches_with_diagnostics(&ms, &h, &params);
        assert_relative_eq!(diag[0].distance, 7.5, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_by_original(
            c in 0.0..=1.0f64, dx in -100.0..100.0f64, dy in -100.0..100.0f64,
            coeff in prop::sample::select(vec![0.0, 2.0, 5.0, 10.0, 20.0, 40.0]),
        ) {
            let ms = set(vec![KeypointMatch { pt_a: Point2::new(300.0, 200.0), pt_b: Point2::new(300.0 + dx, 200.0 + dy), confidence: c }]);
            let out = refactor_matches(&ms, &Homography::identity(), &RefactorParams::new(coeff)).matches[0].confidence;
            prop_assert!((0.0..=1.0).contains(&out));
            prop_assert!(out <= c);
            if coeff == 0.0 || (dx == 0.0 && dy == 0.0) {
                prop_assert_eq!(out, c);
            }
        }

        #[test]
        fn monotone_in_distance_and_coefficient(d1 in 0.0..200.0f64, d2 in 0.0..200.0f64, s1 in 0.5..50.0f64, s2 in 0.5..50.0f64) {
            let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(gaussian_confidence(dhi, s1).unwrap() <= gaussian_confidence(dlo, s1).unwrap());
            let (slo, shi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(gaussian_confidence(d1, shi).unwrap() >= gaussian_confidence(d1, slo).unwrap());
        }
    }
}
