//! Association scoring and the hyperparameter sweep.
//!
//! Only true positives, false positives and false negatives are counted;
//! true negatives (the many non-matching detection pairs) would swamp any
//! accuracy figure.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign};

use crate::affinity::Metric;
use crate::assignment::Association;
use crate::detection::{covisible_people, Detection};
use crate::geometry::Homography;
use crate::pipeline::{prepare_frames, run_pair, FrameInput, PipelineParams, PreparedFrame};

/// Matcher confidence thresholds of the sweep grid.
pub const LOFTR_THRESHOLDS: [f64; 4] = [0.0, 0.2, 0.4, 0.6];
/// Refactor distance coefficients of the sweep grid; 0 disables refactoring.
pub const DISTANCE_COEFFICIENTS: [f64; 6] = [0.0, 2.0, 5.0, 10.0, 20.0, 40.0];
/// WILDTRACK camera pairs with substantial overlap.
pub const BENCHMARK_CAMERA_PAIRS: [(u32, u32); 8] = [(1, 4), (1, 6), (1, 7), (2, 3), (4, 7), (5, 6), (5, 7), (6, 7)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct EvalCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl EvalCounts {
    pub const fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    /// `None` when nothing was predicted.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when there was nothing to find.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

impl Add for EvalCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_)
    }
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl core::iter::Sum for EvalCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Counts for one frame. Positives are the people with a detection in both
/// cameras; a predicted pair is a true positive when both detections carry
/// the same person id. A wrong pair is a false positive, and the people it
/// failed to pair remain false negatives.
pub fn score_frame(pred: &Association, dets_a: &[Detection], dets_b: &[Detection]) -> EvalCounts {
    let positives = covisible_people(dets_a, dets_b);
    let mut tp = 0;
    let mut fp = 0;
    for p in &pred.pairs {
        match (dets_a.get(p.index_a), dets_b.get(p.index_b)) {
            (Some(a), Some(b)) if a.person_id == b.person_id => tp += 1,
            _ => fp += 1,
        }
    }
    EvalCounts::new(tp, fp, positives.len().saturating_sub(tp))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision, recall and F1 of counts already summed over frames.
/// Undefined ratios are reported as 0.
pub fn micro_f1(counts: &EvalCounts) -> Metrics {
    let precision = counts.precision().unwrap_or(0.0);
    let recall = counts.recall().unwrap_or(0.0);
    Metrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub loftr_threshold: f64,
    pub distance_coefficient: f64,
    pub metric: Metric,
}

impl SweepConfig {
    /// Full 4 x 6 x 2 grid, thresholds outermost.
    pub fn grid() -> Vec<SweepConfig> {
        Self::grid_from(&LOFTR_THRESHOLDS, &DISTANCE_COEFFICIENTS, &Metric::ALL)
    }

    pub fn grid_from(thresholds: &[f64], coefficients: &[f64], metrics: &[Metric]) -> Vec<SweepConfig> {
        let mut out = Vec::with_capacity(thresholds.len() * coefficients.len() * metrics.len());
        for &loftr_threshold in thresholds {
            for &distance_coefficient in coefficients {
                for &metric in metrics {
                    out.push(SweepConfig {
                        loftr_threshold,
                        distance_coefficient,
                        metric,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub pair: (u32, u32),
    pub config: SweepConfig,
    pub counts: EvalCounts,
    pub metrics: Metrics,
    /// Frames evaluated without correspondences (missing input).
    pub failed_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub pair: (u32, u32),
    /// Sorted by F1, best first.
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.first()
    }
}

/// Orders rows by F1 descending. Ties keep grid order (stable sort).
pub fn rank_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| b.metrics.f1.total_cmp(&a.metrics.f1));
}

/// Scores one configuration over prepared frames.
pub fn evaluate_config(
    pair: (u32, u32),
    frames: &[PreparedFrame],
    homography: &Homography,
    config: &SweepConfig,
    params: &PipelineParams,
) -> SweepRow {
    let results = run_pair(frames, homography, config, params);
    let counts: EvalCounts = results.iter().map(|r| r.counts).sum();
    SweepRow {
        pair,
        config: *config,
        counts,
        metrics: micro_f1(&counts),
        failed_frames: results.iter().filter(|r| r.missing_matches).count(),
    }
}

/// Evaluates every configuration on one camera pair and ranks them.
/// Frames without correspondences are scored as empty predictions and
/// counted in each row's `failed_frames`.
pub fn run_sweep(
    pair: (u32, u32),
    frames: &[FrameInput],
    homography: &Homography,
    configs: &[SweepConfig],
    params: &PipelineParams,
) -> SweepReport {
    let prepared = prepare_frames(frames, homography, params);
    let mut rows: Vec<SweepRow> = configs
        .iter()
        .map(|c| evaluate_config(pair, &prepared, homography, c, params))
        .collect();
    rank_rows(&mut rows);
    SweepReport { pair, rows }
}
