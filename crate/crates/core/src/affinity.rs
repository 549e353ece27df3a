//! Detection-pair affinity matrices.
//!
//! Two metrics are provided:
//! - [`Metric::Bayesian`] ("M4"): noisy-OR fusion `1 - prod(1 - c_k)` of the
//!   refactored confidences supporting a detection pair in one frame.
//! - [`Metric::MultiFrame`] ("M5"): mean of the M4 values of the same
//!   identity pair over a short window of recent annotated frames.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::correspondence::DetectionGroups;
use crate::detection::Detection;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AffinityError {
    #[error("multi-frame window is empty")]
    EmptyWindow,
    #[error("unknown association metric {0:?} (expected M4 or M5)")]
    UnknownMetric(alloc::string::String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// M4
    Bayesian,
    /// M5
    MultiFrame,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Bayesian, Metric::MultiFrame];

    pub fn tag(&self) -> &'static str {
        match self {
            Metric::Bayesian => "M4",
            Metric::MultiFrame => "M5",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Metric {
    type Err = AffinityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M4" | "m4" | "bayesian" => Ok(Metric::Bayesian),
            "M5" | "m5" | "multi-frame" | "multiframe" => Ok(Metric::MultiFrame),
            other => Err(AffinityError::UnknownMetric(other.into())),
        }
    }
}

/// Noisy-OR fusion of independent match confidences; 0 for no evidence.
pub fn affinity_m4(confidences: impl IntoIterator<Item = f64>) -> f64 {
    let miss: f64 = confidences.into_iter().map(|c| 1.0 - c).product();
    (1.0 - miss).clamp(0.0, 1.0)
}

/// Mean of per-frame M4 values for one identity pair.
pub fn affinity_m5(per_frame_values: &[(u32, f64)]) -> Result<f64, AffinityError> {
    if per_frame_values.is_empty() {
        return Err(AffinityError::EmptyWindow);
    }
    let sum: f64 = per_frame_values.iter().map(|&(_, v)| v).sum();
    Ok(sum / per_frame_values.len() as f64)
}

/// `|A| x |B|` match probabilities for one frame. Rows and columns carry
/// the person ids of the detections they stand for.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub frame_id: u32,
    pub metric: Metric,
    pub row_ids: Vec<u32>,
    pub col_ids: Vec<u32>,
    pub values: DMatrix<f64>,
}

impl AffinityMatrix {
    pub fn zeros(frame_id: u32, metric: Metric, row_ids: Vec<u32>, col_ids: Vec<u32>) -> Self {
        let values = DMatrix::zeros(row_ids.len(), col_ids.len());
        Self {
            frame_id,
            metric,
            row_ids,
            col_ids,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FrameValues {
    frame_id: u32,
    values: BTreeMap<(u32, u32), f64>,
}

/// M4 values of the most recent `window - 1` frames, keyed by person-id pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityHistory {
    window: usize,
    frames: VecDeque<FrameValues>,
}

impl AffinityHistory {
    /// `window` counts the current frame; it is clamped to at least 1.
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            frames: VecDeque::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Stores an M4 matrix, evicting frames that fell out of the window.
    pub fn record(&mut self, m4: &AffinityMatrix) {
        debug_assert_eq!(m4.metric, Metric::Bayesian);
        if self.window == 1 {
            return;
        }
        let mut values = BTreeMap::new();
        for (i, &pa) in m4.row_ids.iter().enumerate() {
            for (j, &pb) in m4.col_ids.iter().enumerate() {
                values.insert((pa, pb), m4.values[(i, j)]);
            }
        }
        self.frames.push_back(FrameValues {
            frame_id: m4.frame_id,
            values,
        });
        while self.frames.len() > self.window - 1 {
            self.frames.pop_front();
        }
    }

    /// `(frame_id, M4)` for every stored frame in which both people were present.
    pub fn values_for(&self, person_a: u32, person_b: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.frames
            .iter()
            .filter_map(move |f| f.values.get(&(person_a, person_b)).map(|&v| (f.frame_id, v)))
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }
}

/// Fills the affinity of every detection pair of one frame.
///
/// For [`Metric::MultiFrame`] the current M4 value is averaged with the
/// values `history` holds for the same person-id pair. Pairs without any
/// supporting keypoint in the current frame stay 0 under both metrics.
pub fn build_affinity(
    frame_id: u32,
    dets_a: &[Detection],
    dets_b: &[Detection],
    groups: &DetectionGroups,
    metric: Metric,
    history: &AffinityHistory,
) -> AffinityMatrix {
    let m4 = bayesian_matrix(frame_id, dets_a, dets_b, groups);
    match metric {
        Metric::Bayesian => m4,
        Metric::MultiFrame => multi_frame_matrix(&m4, groups, history),
    }
}

fn bayesian_matrix(
    frame_id: u32,
    dets_a: &[Detection],
    dets_b: &[Detection],
    groups: &DetectionGroups,
) -> AffinityMatrix {
    let mut out = AffinityMatrix::zeros(
        frame_id,
        Metric::Bayesian,
        dets_a.iter().map(|d| d.person_id).collect(),
        dets_b.iter().map(|d| d.person_id).collect(),
    );
    for (&(i, j), matches) in groups {
        if i < out.nrows() && j < out.ncols() {
            out.values[(i, j)] = affinity_m4(matches.iter().map(|m| m.confidence));
        }
    }
    out
}

fn multi_frame_matrix(m4: &AffinityMatrix, groups: &DetectionGroups, history: &AffinityHistory) -> AffinityMatrix {
    let mut out = m4.clone();
    out.metric = Metric::MultiFrame;
    let mut window = Vec::with_capacity(history.window());
    for &(i, j) in groups.keys() {
        if i >= out.nrows() || j >= out.ncols() {
            continue;
        }
        window.clear();
        window.push((m4.frame_id, m4.values[(i, j)]));
        window.extend(history.values_for(m4.row_ids[i], m4.col_ids[j]));
        // window is never empty here
        out.values[(i, j)] = affinity_m5(&window).unwrap_or(0.0);
    }
    out
}

/// Owns the multi-frame history for one camera pair and keeps it in step
/// with the frames it builds.
#[derive(Debug, Clone)]
pub struct AffinityTracker {
    history: AffinityHistory,
}

impl AffinityTracker {
    pub fn new(window: usize) -> Self {
        Self {
            history: AffinityHistory::new(window),
        }
    }

    pub fn history(&self) -> &AffinityHistory {
        &self.history
    }

    /// Builds this frame's matrix, then records its M4 values.
    pub fn build(
        &mut self,
        frame_id: u32,
        dets_a: &[Detection],
        dets_b: &[Detection],
        groups: &DetectionGroups,
        metric: Metric,
    ) -> AffinityMatrix {
        let m4 = bayesian_matrix(frame_id, dets_a, dets_b, groups);
        let out = match metric {
            Metric::Bayesian => m4.clone(),
            Metric::MultiFrame => multi_frame_matrix(&m4, groups, &self.history),
        };
        self.history.record(&m4);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::KeypointMatch;
    use crate::detection::BBox;
    use approx::assert_relative_eq;
    use nalgebra::Point2;
    use proptest::prelude::*;
    use std::string::ToString;
    use std::vec;

    fn det(frame_id: u32, cam: u32, pid: u32) -> Detection {
        Detection {
            frame_id,
            camera_id: cam,
            person_id: pid,
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
        }
    }

    fn km(c: f64) -> KeypointMatch {
        KeypointMatch {
            pt_a: Point2::origin(),
            pt_b: Point2::origin(),
            confidence: c,
        }
    }

    #[test]
    fn m4_examples() {
        assert_eq!(affinity_m4([]), 0.0);
        assert_eq!(affinity_m4([0.8]), 0.8);
        assert_eq!(affinity_m4([0.5, 0.5]), 0.75);
        assert_eq!(affinity_m4([0.0, 0.0, 0.0]), 0.0);
        assert_eq!(affinity_m4([0.2, 1.0, 0.3]), 1.0);
    }

    #[test]
    fn m5_examples() {
        assert_eq!(affinity_m5(&[(0, 0.42)]).unwrap(), 0.42);
        assert_relative_eq!(affinity_m5(&[(0, 0.2), (5, 0.4)]).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(affinity_m5(&[]), Err(AffinityError::EmptyWindow));
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("M4".parse::<Metric>().unwrap(), Metric::Bayesian);
        assert_eq!("m5".parse::<Metric>().unwrap(), Metric::MultiFrame);
        assert!("M6".parse::<Metric>().is_err());
        assert_eq!(Metric::MultiFrame.to_string(), "M5");
    }

    #[test]
    fn no_matches_zero_matrix() {
        let a = [det(0, 1, 0), det(0, 1, 1)];
        let b = [det(0, 4, 0)];
        let m = build_affinity(
            0,
            &a,
            &b,
            &DetectionGroups::new(),
            Metric::Bayesian,
            &AffinityHistory::new(3),
        );
        assert_eq!(m.values, DMatrix::zeros(2, 1));
        assert_eq!(m.row_ids, vec![0, 1]);
    }

    #[test]
    fn single_keypoint_single_entry() {
        let a = [det(0, 1, 0)];
        let b = [det(0, 4, 0)];
        let mut groups = DetectionGroups::new();
        groups.insert((0, 0), vec![km(0.9)]);
        let m = build_affinity(0, &a, &b, &groups, Metric::Bayesian, &AffinityHistory::new(3));
        assert_eq!(m.values[(0, 0)], 0.9);
    }

    #[test]
    fn window_mean_over_present_frames() {
        // frames 0, 5, 10; person 2 is missing from camera B at frame 5
        let mut tracker = AffinityTracker::new(3);
        let mut g = DetectionGroups::new();
        g.insert((0, 0), vec![km(0.3)]);
        tracker.build(0, &[det(0, 1, 1)], &[det(0, 4, 2)], &g, Metric::MultiFrame);
        tracker.build(5, &[det(5, 1, 1)], &[det(5, 4, 9)], &g, Metric::MultiFrame);
        let mut g = DetectionGroups::new();
        g.insert((0, 0), vec![km(0.6)]);
        let m = tracker.build(10, &[det(10, 1, 1)], &[det(10, 4, 2)], &g, Metric::MultiFrame);
        assert_relative_eq!(m.values[(0, 0)], 0.45, epsilon = 1e-15);
        assert_eq!(m.metric, Metric::MultiFrame);
    }

    #[test]
    fn window_evicts_old_frames() {
        let mut tracker = AffinityTracker::new(2);
        let a = [det(0, 1, 1)];
        let b = [det(0, 4, 1)];
        for (f, c) in [(0, 0.1), (5, 0.5), (10, 0.9)] {
            let mut g = DetectionGroups::new();
            g.insert((0, 0), vec![km(c)]);
            let m = tracker.build(f, &a, &b, &g, Metric::MultiFrame);
            if f == 10 {
                assert_relative_eq!(m.values[(0, 0)], 0.7, epsilon = 1e-15);
            }
        }
        assert_eq!(tracker.history().len(), 1);
    }

    #[test]
    fn single_frame_window_equals_m4() {
        let mut tracker = AffinityTracker::new(1);
        let a = [det(0, 1, 1), det(0, 1, 2)];
        let b = [det(0, 4, 1), det(0, 4, 2)];
        let mut g = DetectionGroups::new();
        g.insert((0, 0), vec![km(0.5), km(0.4)]);
        g.insert((1, 0), vec![km(0.2)]);
        let m4 = tracker.build(0, &a, &b, &g, Metric::Bayesian);
        let m5 = tracker.build(0, &a, &b, &g, Metric::MultiFrame);
        assert_eq!(m4.values, m5.values);
    }

    #[test]
    fn no_current_evidence_stays_zero_under_m5() {
        let mut tracker = AffinityTracker::new(3);
        let a = [det(0, 1, 1)];
        let b = [det(0, 4, 1)];
        let mut g = DetectionGroups::new();
        g.insert((0, 0), vec![km(0.9)]);
        tracker.build(0, &a, &b, &g, Metric::MultiFrame);
        let m = tracker.build(5, &a, &b, &DetectionGroups::new(), Metric::MultiFrame);
        assert_eq!(m.values[(0, 0)], 0.0);
    }

    /// Enumerates every presence pattern of a 3-frame window and checks the
    /// mean runs over exactly the frames where both people were present.
    #[test]
    fn m5_presence_patterns() {
        let values = [0.2, 0.5, 0.8];
        for pattern in 0u8..4 {
            // bit k set: person present in camera B at history frame k
            let mut tracker = AffinityTracker::new(3);
            let a = [det(0, 1, 1)];
            let mut expected = vec![];
            for (k, &v) in values.iter().take(2).enumerate() {
                let mut g = DetectionGroups::new();
                let b = if pattern & (1 << k) != 0 {
                    g.insert((0, 0), vec![km(v)]);
                    expected.push(v);
                    vec![det(0, 4, 1)]
                } else {
                    vec![det(0, 4, 42)]
                };
                tracker.build(k as u32, &a, &b, &g, Metric::MultiFrame);
            }
            let mut g = DetectionGroups::new();
            g.insert((0, 0), vec![km(values[2])]);
            expected.push(values[2]);
            let m = tracker.build(2, &a, &[det(2, 4, 1)], &g, Metric::MultiFrame);
            let mean = expected.iter().sum::<f64>() / expected.len() as f64;
            assert_relative_eq!(m.values[(0, 0)], mean, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn m4_invariants(mut cs in prop::collection::vec(0.0..=1.0f64, 0..20), extra in 0.0..=1.0f64) {
            let base = affinity_m4(cs.iter().copied());
            prop_assert!((0.0..=1.0).contains(&base));
            let mut reversed = cs.clone();
            reversed.reverse();
            prop_assert!((affinity_m4(reversed) - base).abs() < 1e-12);
            cs.push(extra);
            prop_assert!(affinity_m4(cs.iter().copied()) >= base - 1e-15);
        }

        #[test]
        fn m5_within_range(vals in prop::collection::vec(0.0..=1.0f64, 1..10)) {
            let window: Vec<_> = vals.iter().enumerate().map(|(k, &v)| (k as u32, v)).collect();
            let m = affinity_m5(&window).unwrap();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        }

        #[test]
        fn entries_in_unit_interval(
            confs in prop::collection::vec((0usize..3, 0usize..3, 0.0..=1.0f64), 0..40),
            metric in prop::sample::select(vec![Metric::Bayesian, Metric::MultiFrame]),
        ) {
            let a = [det(0, 1, 0), det(0, 1, 1), det(0, 1, 2)];
            let b = [det(0, 4, 0), det(0, 4, 1), det(0, 4, 2)];
            let mut g = DetectionGroups::new();
            for (i, j, c) in confs {
                g.entry((i, j)).or_default().push(km(c));
            }
            let mut tracker = AffinityTracker::new(3);
            for f in 0..3 {
                let m = tracker.build(f, &a, &b, &g, metric);
                prop_assert!(m.values.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
