//! Multi-camera person association core.
//!
//! Given calibrated camera pairs, per-frame person detections and dense
//! keypoint correspondences with confidences, this crate decides which
//! detection in camera A is the same person as which detection in camera B.
//!
//! The stages are:
//!
//! 1. **Geometry** – pinhole projection, elevated ground grid, and a
//!    DLT + RANSAC homography between every camera pair.
//! 2. **Correspondence** – confidence thresholding, homography overlap
//!    masking, and grouping of matches by detection pair.
//! 3. **Refactor** – rescale match confidences by a Gaussian of the
//!    homography reprojection residual.
//! 4. **Affinity** – fuse the grouped confidences into a detection-pair
//!    affinity matrix (single-frame noisy-OR, or its multi-frame mean).
//! 5. **Assignment** – Hungarian solve over `1 - affinity`.
//! 6. **Evaluation** – micro precision / recall / F1 and the
//!    hyperparameter sweep.
//!
//! [`synth`] generates fully known scenes used as an end-to-end oracle.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the CLI and
//! parallel execution live in the companion `mca` crate.
#![no_std]
// NaN must fail validation, hence `!(x > 0.0)` style checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod affinity;
pub mod assignment;
pub mod correspondence;
pub mod detection;
pub mod evaluation;
pub mod geometry;
pub mod pipeline;
pub mod refactor;
pub mod synth;

pub use affinity::{AffinityHistory, AffinityMatrix, AffinityTracker, Metric};
pub use assignment::{AssignmentError, AssociatedPair, Association};
pub use correspondence::{CorrespondenceError, KeypointMatch, MatchSet, Provenance};
pub use detection::{BBox, Detection, FramePair};
pub use evaluation::{EvalCounts, Metrics, SweepConfig, SweepReport, SweepRow};
pub use geometry::{CameraCalibration, GeometryError, GroundGrid, Homography, HomographyFit, ImageSize, RansacParams};
pub use pipeline::{FrameInput, PipelineParams};
pub use refactor::RefactorParams;
