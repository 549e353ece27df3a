//! Ground-truth person detections and synchronized frame pairs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::Point2;

use crate::geometry::ImageSize;

/// Axis-aligned box in pixels, `(xmin, ymin)` to `(xmax, ymax)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self { xmin, ymin, xmax, ymax }
    }

    /// Smallest box containing every point; `None` for an empty iterator.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Point2<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        Some(it.fold(Self::new(first.x, first.y, first.x, first.y), |b, p| Self {
            xmin: b.xmin.min(p.x),
            ymin: b.ymin.min(p.y),
            xmax: b.xmax.max(p.x),
            ymax: b.ymax.max(p.y),
        }))
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn is_valid(&self) -> bool {
        self.xmin < self.xmax && self.ymin < self.ymax
    }

    /// Closed-interval containment, boundary included.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.xmin * s, self.ymin * s, self.xmax * s, self.ymax * s)
    }

    /// Clamps to `[0, width] x [0, height]`.
    pub fn clipped(&self, size: ImageSize) -> Self {
        let (w, h) = (f64::from(size.width), f64::from(size.height));
        Self::new(
            self.xmin.clamp(0.0, w),
            self.ymin.clamp(0.0, h),
            self.xmax.clamp(0.0, w),
            self.ymax.clamp(0.0, h),
        )
    }
}

/// One person seen by one camera in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_id: u32,
    pub camera_id: u32,
    pub person_id: u32,
    pub bbox: BBox,
}

/// Detections of two cameras at the same annotated frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FramePair {
    pub frame_id: u32,
    pub camera_a: u32,
    pub camera_b: u32,
    pub detections_a: Vec<Detection>,
    pub detections_b: Vec<Detection>,
}

/// Person ids present in both camera views.
pub fn covisible_people(dets_a: &[Detection], dets_b: &[Detection]) -> Vec<u32> {
    let mut ids: Vec<u32> = dets_a
        .iter()
        .filter(|a| dets_b.iter().any(|b| b.person_id == a.person_id))
        .map(|a| a.person_id)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// One [`FramePair`] per annotated frame in `frame_range` (inclusive bounds),
/// in frame order. Frames where a camera saw nobody keep an empty side.
///
/// `annotations` maps frame id to every detection of that frame.
pub fn build_frame_pairs(
    annotations: &BTreeMap<u32, Vec<Detection>>,
    camera_a: u32,
    camera_b: u32,
    frame_range: core::ops::RangeInclusive<u32>,
) -> Vec<FramePair> {
    assert_ne!(camera_a, camera_b, "frame pair cameras must differ");
    annotations
        .range(frame_range)
        .map(|(&frame_id, dets)| {
            let pick = |cam: u32| dets.iter().filter(|d| d.camera_id == cam).copied().collect::<Vec<_>>();
            FramePair {
                frame_id,
                camera_a,
                camera_b,
                detections_a: pick(camera_a),
                detections_b: pick(camera_b),
            }
        })
        .collect()
}
