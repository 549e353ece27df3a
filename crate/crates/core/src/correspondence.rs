//! Keypoint correspondences between two views and the filters applied to
//! them before affinity fusion: confidence threshold, homography overlap
//! mask, and grouping by detection pair.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{Point2, Vector3};
use thiserror::Error;

use crate::detection::Detection;
use crate::geometry::{Homography, ImageSize};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrespondenceError {
    #[error("match {index}: confidence {value} outside [0, 1]")]
    InvalidConfidence { index: usize, value: f64 },
    #[error("match {index}: non-finite coordinate")]
    NonFiniteCoordinate { index: usize },
    #[error("match set cameras must differ (both {0})")]
    SameCamera(u32),
    #[error("overlap mask is degenerate: {0}")]
    MaskDegenerate(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    File,
    Synthetic,
}

/// A pixel in camera A matched to a pixel in camera B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointMatch {
    pub pt_a: Point2<f64>,
    pub pt_b: Point2<f64>,
    pub confidence: f64,
}

impl KeypointMatch {
    pub fn new(pt_a: Point2<f64>, pt_b: Point2<f64>, confidence: f64) -> Result<Self, CorrespondenceError> {
        let m = Self { pt_a, pt_b, confidence };
        m.validate(0)?;
        Ok(m)
    }

    fn validate(&self, index: usize) -> Result<(), CorrespondenceError> {
        if !(self.pt_a.x.is_finite() && self.pt_a.y.is_finite() && self.pt_b.x.is_finite() && self.pt_b.y.is_finite()) {
            return Err(CorrespondenceError::NonFiniteCoordinate { index });
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(CorrespondenceError::InvalidConfidence {
                index,
                value: self.confidence,
            });
        }
        Ok(())
    }
}

/// All correspondences of one frame for one camera pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub frame_id: u32,
    pub camera_a: u32,
    pub camera_b: u32,
    pub size_a: ImageSize,
    pub size_b: ImageSize,
    pub matches: Vec<KeypointMatch>,
    pub provenance: Provenance,
}

impl MatchSet {
    pub fn new(
        frame_id: u32,
        (camera_a, size_a): (u32, ImageSize),
        (camera_b, size_b): (u32, ImageSize),
        matches: Vec<KeypointMatch>,
        provenance: Provenance,
    ) -> Result<Self, CorrespondenceError> {
        let ms = Self {
            frame_id,
            camera_a,
            camera_b,
            size_a,
            size_b,
            matches,
            provenance,
        };
        ms.validate()?;
        Ok(ms)
    }

    /// Empty set with the same frame, cameras and sizes.
    pub fn empty_like(&self) -> Self {
        Self {
            frame_id: self.frame_id,
            camera_a: self.camera_a,
            camera_b: self.camera_b,
            size_a: self.size_a,
            size_b: self.size_b,
            matches: Vec::new(),
            provenance: self.provenance,
        }
    }

    pub fn validate(&self) -> Result<(), CorrespondenceError> {
        if self.camera_a == self.camera_b {
            return Err(CorrespondenceError::SameCamera(self.camera_a));
        }
        self.matches.iter().enumerate().try_for_each(|(i, m)| m.validate(i))
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    fn retain(&self, mut keep: impl FnMut(&KeypointMatch) -> bool) -> Self {
        Self {
            matches: self.matches.iter().copied().filter(|m| keep(m)).collect(),
            ..self.empty_like()
        }
    }
}

/// Keeps matches with `confidence >= threshold`, preserving order.
pub fn filter_by_confidence(ms: &MatchSet, threshold: f64) -> MatchSet {
    ms.retain(|m| m.confidence >= threshold)
}

/// Convex image region, counter-clockwise or clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexQuad {
    pub corners: [Point2<f64>; 4],
}

impl ConvexQuad {
    /// Warps `size`'s image rectangle through `h`. Fails if the warped
    /// rectangle crosses the line at infinity, is not convex, or has
    /// (near-)zero area.
    pub fn warp_rect(h: &Homography, size: ImageSize) -> Result<Self, CorrespondenceError> {
        let mut corners = [Point2::origin(); 4];
        let mut sign = 0.0f64;
        for (out, c) in corners.iter_mut().zip(size.corners()) {
            let q = h.matrix * Vector3::new(c.x, c.y, 1.0);
            if q.z.abs() < 1e-12 || !q.z.is_finite() {
                return Err(CorrespondenceError::MaskDegenerate("corner maps to infinity"));
            }
            if sign != 0.0 && q.z.signum() != sign {
                return Err(CorrespondenceError::MaskDegenerate(
                    "warped rectangle crosses the horizon",
                ));
            }
            sign = q.z.signum();
            *out = Point2::new(q.x / q.z, q.y / q.z);
        }
        let quad = Self { corners };
        let area = quad.signed_area();
        let rect_area = f64::from(size.width) * f64::from(size.height);
        if !(area.abs() > 1e-9 * rect_area) {
            return Err(CorrespondenceError::MaskDegenerate("near-zero area"));
        }
        let turns = quad.turns();
        if turns.iter().any(|&t| t * area < 0.0) {
            return Err(CorrespondenceError::MaskDegenerate("self-intersecting or non-convex"));
        }
        Ok(quad)
    }

    pub fn signed_area(&self) -> f64 {
        let c = &self.corners;
        0.5 * (0..4)
            .map(|i| {
                let (p, q) = (c[i], c[(i + 1) % 4]);
                p.x * q.y - q.x * p.y
            })
            .sum::<f64>()
    }

    fn turns(&self) -> [f64; 4] {
        let c = &self.corners;
        core::array::from_fn(|i| {
            let (p, q, r) = (c[i], c[(i + 1) % 4], c[(i + 2) % 4]);
            let (u, v) = (q - p, r - q);
            u.x * v.y - u.y * v.x
        })
    }

    /// Boundary-inclusive containment.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        let orientation = self.signed_area().signum();
        (0..4).all(|i| {
            let (a, b) = (self.corners[i], self.corners[(i + 1) % 4]);
            let (e, d) = (b - a, p - a);
            let cross = (e.x * d.y - e.y * d.x) * orientation;
            cross >= -1e-9 * e.norm() * (1.0 + d.norm())
        })
    }
}

/// Region of each image that the other camera also sees, under `h` (A -> B).
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMask {
    pub size_a: ImageSize,
    pub size_b: ImageSize,
    /// Camera B's image rectangle warped into camera A.
    pub region_a: ConvexQuad,
    /// Camera A's image rectangle warped into camera B.
    pub region_b: ConvexQuad,
}

impl OverlapMask {
    pub fn new(h: &Homography, size_a: ImageSize, size_b: ImageSize) -> Result<Self, CorrespondenceError> {
        let inv = h
            .inverse()
            .map_err(|_| CorrespondenceError::MaskDegenerate("homography is singular"))?;
        Ok(Self {
            size_a,
            size_b,
            region_a: ConvexQuad::warp_rect(&inv, size_b)?,
            region_b: ConvexQuad::warp_rect(h, size_a)?,
        })
    }

    pub fn keeps(&self, m: &KeypointMatch) -> bool {
        self.size_a.contains(&m.pt_a)
            && self.region_a.contains(&m.pt_a)
            && self.size_b.contains(&m.pt_b)
            && self.region_b.contains(&m.pt_b)
    }

    pub fn apply(&self, ms: &MatchSet) -> MatchSet {
        ms.retain(|m| self.keeps(m))
    }
}

/// Keeps matches whose endpoints both lie in the mutually visible part of
/// the two images.
pub fn overlap_mask_filter(
    ms: &MatchSet,
    h: &Homography,
    size_a: ImageSize,
    size_b: ImageSize,
) -> Result<MatchSet, CorrespondenceError> {
    Ok(OverlapMask::new(h, size_a, size_b)?.apply(ms))
}

/// Per-point overlap test for homographies whose warped image rectangle is
/// unbounded: keeps a match when `H pt_a` lands in B and `H^-1 pt_b` lands
/// in A.
pub fn overlap_mask_filter_pointwise(
    ms: &MatchSet,
    h: &Homography,
    size_a: ImageSize,
    size_b: ImageSize,
) -> Result<MatchSet, CorrespondenceError> {
    let inv = h
        .inverse()
        .map_err(|_| CorrespondenceError::MaskDegenerate("homography is singular"))?;
    Ok(ms.retain(|m| {
        size_a.contains(&m.pt_a)
            && size_b.contains(&m.pt_b)
            && h.project(&m.pt_a).is_ok_and(|p| size_b.contains(&p))
            && inv.project(&m.pt_b).is_ok_and(|p| size_a.contains(&p))
    }))
}

/// Matches grouped by `(index into dets_a, index into dets_b)`.
pub type DetectionGroups = BTreeMap<(usize, usize), Vec<KeypointMatch>>;

/// Routes each match to every detection pair whose boxes contain both of
/// its endpoints. Matches outside all boxes on either side are dropped.
pub fn assign_to_detections(ms: &MatchSet, dets_a: &[Detection], dets_b: &[Detection]) -> DetectionGroups {
    let mut groups = DetectionGroups::new();
    let mut hits_b = Vec::new();
    for m in &ms.matches {
        hits_b.clear();
        hits_b.extend(
            dets_b
                .iter()
                .enumerate()
                .filter(|(_, d)| d.bbox.contains(&m.pt_b))
                .map(|(j, _)| j),
        );
        if hits_b.is_empty() {
            continue;
        }
        for (i, da) in dets_a.iter().enumerate() {
            if !da.bbox.contains(&m.pt_a) {
                continue;
            }
            for &j in &hits_b {
                groups.entry((i, j)).or_default().push(*m);
            }
        }
    }
    groups
}
