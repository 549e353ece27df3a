//! Per-frame association for one camera pair:
//! threshold -> overlap mask -> refactor -> group -> affinity -> assign -> score.

use alloc::vec::Vec;

use crate::affinity::{AffinityMatrix, AffinityTracker};
use crate::assignment::{associate, Association};
use crate::correspondence::{
    assign_to_detections, filter_by_confidence, overlap_mask_filter_pointwise, MatchSet, OverlapMask,
};
use crate::detection::FramePair;
use crate::evaluation::{score_frame, EvalCounts, SweepConfig};
use crate::geometry::{Homography, ImageSize};
use crate::refactor::{refactor_matches, RefactorParams};

/// Settings shared by every configuration of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    /// Annotated frames averaged by the multi-frame metric, current included.
    pub window: usize,
    /// Assigned pairs with affinity at or below this are rejected.
    pub accept_threshold: f64,
    /// Apply the homography overlap mask.
    pub mask: bool,
    pub symmetric_refactor: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            window: 3,
            accept_threshold: 0.0,
            mask: true,
            symmetric_refactor: false,
        }
    }
}

/// Detections of one frame plus its correspondences, if any were supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub frame: FramePair,
    pub matches: Option<MatchSet>,
}

/// A frame whose configuration-independent filtering (the overlap mask)
/// has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFrame {
    pub frame: FramePair,
    pub matches: Option<MatchSet>,
    /// The exact warped-rectangle mask was degenerate and the per-point
    /// test was used instead.
    pub mask_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_id: u32,
    pub affinity: AffinityMatrix,
    pub association: Association,
    pub counts: EvalCounts,
    /// Correspondences left after thresholding and masking.
    pub matches_used: usize,
    pub missing_matches: bool,
    pub mask_fallback: bool,
}

/// Overlap masks cached per image-size pair.
struct MaskCache<'h> {
    homography: &'h Homography,
    entries: Vec<((ImageSize, ImageSize), Option<OverlapMask>)>,
}

impl<'h> MaskCache<'h> {
    fn new(homography: &'h Homography) -> Self {
        Self {
            homography,
            entries: Vec::new(),
        }
    }

    /// Returns the masked set and whether the per-point fallback was used.
    fn apply(&mut self, ms: &MatchSet) -> (MatchSet, bool) {
        let key = (ms.size_a, ms.size_b);
        let pos = match self.entries.iter().position(|(k, _)| *k == key) {
            Some(p) => p,
            None => {
                let mask = OverlapMask::new(self.homography, ms.size_a, ms.size_b).ok();
                self.entries.push((key, mask));
                self.entries.len() - 1
            }
        };
        match &self.entries[pos].1 {
            Some(mask) => (mask.apply(ms), false),
            None => {
                let out = overlap_mask_filter_pointwise(ms, self.homography, ms.size_a, ms.size_b)
                    .unwrap_or_else(|_| ms.empty_like());
                (out, true)
            }
        }
    }
}

/// Masks every frame once; thresholding commutes with masking, so the
/// result can be reused by every configuration.
pub fn prepare_frames(frames: &[FrameInput], homography: &Homography, params: &PipelineParams) -> Vec<PreparedFrame> {
    let mut cache = MaskCache::new(homography);
    frames
        .iter()
        .map(|f| {
            let (matches, mask_fallback) = match (&f.matches, params.mask) {
                (Some(ms), true) => {
                    let (masked, fallback) = cache.apply(ms);
                    (Some(masked), fallback)
                }
                (m, _) => (m.clone(), false),
            };
            PreparedFrame {
                frame: f.frame.clone(),
                matches,
                mask_fallback,
            }
        })
        .collect()
}

/// Runs one configuration over the frames of one camera pair, in order.
pub fn run_pair(
    frames: &[PreparedFrame],
    homography: &Homography,
    config: &SweepConfig,
    params: &PipelineParams,
) -> Vec<FrameResult> {
    let mut tracker = AffinityTracker::new(params.window);
    let refactor = RefactorParams {
        distance_coefficient: config.distance_coefficient,
        symmetric: params.symmetric_refactor,
    };
    frames
        .iter()
        .map(|f| associate_frame(f, homography, config, &refactor, params, &mut tracker))
        .collect()
}

/// Associates one prepared frame; `tracker` carries the multi-frame history.
pub fn associate_frame(
    input: &PreparedFrame,
    homography: &Homography,
    config: &SweepConfig,
    refactor: &RefactorParams,
    params: &PipelineParams,
    tracker: &mut AffinityTracker,
) -> FrameResult {
    let frame = &input.frame;
    let (groups, matches_used) = match &input.matches {
        Some(ms) => {
            let kept = filter_by_confidence(ms, config.loftr_threshold);
            let refactored = refactor_matches(&kept, homography, refactor);
            let groups = assign_to_detections(&refactored, &frame.detections_a, &frame.detections_b);
            (groups, kept.len())
        }
        None => (Default::default(), 0),
    };
    let affinity = tracker.build(
        frame.frame_id,
        &frame.detections_a,
        &frame.detections_b,
        &groups,
        config.metric,
    );
    let association = associate(&affinity, params.accept_threshold);
    let counts = score_frame(&association, &frame.detections_a, &frame.detections_b);
    FrameResult {
        frame_id: frame.frame_id,
        affinity,
        association,
        counts,
        matches_used,
        missing_matches: input.matches.is_none(),
        mask_fallback: input.mask_fallback,
    }
}
