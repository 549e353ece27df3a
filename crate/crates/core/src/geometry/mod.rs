//! Camera model, ground grid and camera-pair homographies.

mod camera;
mod grid;
mod homography;

pub use camera::{
    project_points, rodrigues, rotation_to_rvec, scale_calibration, CameraCalibration, ImageSize, MIN_DEPTH,
};
pub use grid::{generate_ground_grid, GroundGrid};
pub use homography::{
    compute_pair_homography, estimate_homography_ransac, fit_homography_dlt, plane_induced_homography, project_point_h,
    symmetric_transfer_error, Homography, HomographyFit, RansacParams,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid calibration: {0}")]
    InvalidCalibration(&'static str),
    #[error("ground grid must have at least one row and one column")]
    EmptyGrid,
    #[error("need at least 4 correspondences, got {0}")]
    NotEnoughPoints(usize),
    #[error("source and destination point lists differ in length ({src} vs {dst})")]
    LengthMismatch { src: usize, dst: usize },
    #[error("homography estimation failed: every sampled configuration was degenerate")]
    EstimationFailed,
    #[error("point maps to infinity under the homography")]
    PointAtInfinity,
    #[error("homography is singular")]
    SingularHomography,
    #[error("camera pair has only {0} co-visible grid points")]
    NoOverlap(usize),
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
}
