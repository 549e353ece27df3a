//! Delimited and JSON result files.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use mca_core::affinity::AffinityMatrix;
use mca_core::detection::Detection;
use mca_core::evaluation::{EvalCounts, Metrics, SweepRow};
use mca_core::pipeline::FrameResult;
use mca_core::refactor::RefactorDiagnostic;
use mca_core::Homography;
use serde::{Deserialize, Serialize};

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn pair_tag((a, b): (u32, u32)) -> String {
    format!("c{a}_c{b}")
}

/// One predicted association, by ground-truth person id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRecord {
    pub frame_id: u32,
    pub camera_a: u32,
    pub camera_b: u32,
    pub person_a: u32,
    pub person_b: u32,
    pub affinity: f64,
}

pub fn association_records(
    pair: (u32, u32),
    result: &FrameResult,
    dets_a: &[Detection],
    dets_b: &[Detection],
) -> Vec<AssociationRecord> {
    result
        .association
        .pairs
        .iter()
        .map(|p| AssociationRecord {
            frame_id: result.frame_id,
            camera_a: pair.0,
            camera_b: pair.1,
            person_a: dets_a[p.index_a].person_id,
            person_b: dets_b[p.index_b].person_id,
            affinity: p.affinity,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScoreRecord {
    pub frame_id: u32,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Empty when undefined.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub matches_used: usize,
    pub missing_matches: bool,
    pub mask_fallback: bool,
}

impl FrameScoreRecord {
    pub fn new(frame_id: u32, counts: EvalCounts) -> Self {
        Self {
            frame_id,
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            precision: counts.precision(),
            recall: counts.recall(),
            matches_used: 0,
            missing_matches: false,
            mask_fallback: false,
        }
    }

    pub fn from_result(r: &FrameResult) -> Self {
        Self {
            matches_used: r.matches_used,
            missing_matches: r.missing_matches,
            mask_fallback: r.mask_fallback,
            ..Self::new(r.frame_id, r.counts)
        }
    }
}

/// Totals of one camera pair, as percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub camera_a: u32,
    pub camera_b: u32,
    pub frames: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision_pct: f64,
    pub recall_pct: f64,
    pub f1_pct: f64,
}

impl SummaryRecord {
    pub fn new(pair: (u32, u32), frames: usize, counts: EvalCounts, m: Metrics) -> Self {
        Self {
            camera_a: pair.0,
            camera_b: pair.1,
            frames,
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            precision_pct: 100.0 * m.precision,
            recall_pct: 100.0 * m.recall,
            f1_pct: 100.0 * m.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityRecord {
    pub frame_id: u32,
    pub person_a: u32,
    pub person_b: u32,
    pub value: f64,
}

pub fn affinity_records(m: &AffinityMatrix) -> Vec<AffinityRecord> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for (i, &pa) in m.row_ids.iter().enumerate() {
        for (j, &pb) in m.col_ids.iter().enumerate() {
            out.push(AffinityRecord {
                frame_id: m.frame_id,
                person_a: pa,
                person_b: pb,
                value: m.values[(i, j)],
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefactorRecord {
    pub frame_id: u32,
    pub index: usize,
    /// Empty when refactoring is disabled.
    pub distance: Option<f64>,
    pub factor: f64,
    pub old_confidence: f64,
    pub new_confidence: f64,
}

pub fn refactor_records(frame_id: u32, diags: &[RefactorDiagnostic]) -> Vec<RefactorRecord> {
    diags
        .iter()
        .enumerate()
        .map(|(index, d)| RefactorRecord {
            frame_id,
            index,
            distance: (!d.distance.is_nan()).then_some(d.distance),
            factor: d.factor,
            old_confidence: d.old_confidence,
            new_confidence: d.new_confidence,
        })
        .collect()
}

/// One sweep configuration's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub camera_a: u32,
    pub camera_b: u32,
    /// 1 = best within the pair.
    pub rank: usize,
    pub precision_pct: f64,
    pub recall_pct: f64,
    pub f1_pct: f64,
    pub loftr_threshold: f64,
    pub distance_coefficient: f64,
    pub metric: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub failed_frames: usize,
}

impl SweepRecord {
    pub fn new(rank: usize, row: &SweepRow) -> Self {
        Self {
            camera_a: row.pair.0,
            camera_b: row.pair.1,
            rank,
            precision_pct: 100.0 * row.metrics.precision,
            recall_pct: 100.0 * row.metrics.recall,
            f1_pct: 100.0 * row.metrics.f1,
            loftr_threshold: row.config.loftr_threshold,
            distance_coefficient: row.config.distance_coefficient,
            metric: row.config.metric.tag().to_string(),
            tp: row.counts.tp,
            fp: row.counts.fp,
            fn_: row.counts.fn_,
            failed_frames: row.failed_frames,
        }
    }
}

/// Best configuration of a pair, in reference-results column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub camera_pair: [u32; 2],
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub loftr_conf_threshold: f64,
    pub refactor_distance_coefficient: f64,
    pub association_metric: String,
}

impl BestRecord {
    pub fn new(row: &SweepRow) -> Self {
        let r = SweepRecord::new(1, row);
        Self {
            camera_pair: [r.camera_a, r.camera_b],
            precision: r.precision_pct,
            recall: r.recall_pct,
            f_score: r.f1_pct,
            loftr_conf_threshold: r.loftr_threshold,
            refactor_distance_coefficient: r.distance_coefficient,
            association_metric: r.metric,
        }
    }

    /// CSV cannot hold the pair as one array column.
    pub fn flat(&self) -> BestCsvRecord {
        BestCsvRecord {
            camera_a: self.camera_pair[0],
            camera_b: self.camera_pair[1],
            precision: self.precision,
            recall: self.recall,
            f_score: self.f_score,
            loftr_conf_threshold: self.loftr_conf_threshold,
            refactor_distance_coefficient: self.refactor_distance_coefficient,
            association_metric: self.association_metric.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCsvRecord {
    pub camera_a: u32,
    pub camera_b: u32,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub loftr_conf_threshold: f64,
    pub refactor_distance_coefficient: f64,
    pub association_metric: String,
}

/// F1 of one (threshold, coefficient) cell, for surface plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub camera_a: u32,
    pub camera_b: u32,
    pub metric: String,
    pub loftr_threshold: f64,
    pub distance_coefficient: f64,
    pub f1_pct: f64,
}

/// Rows in grid order (threshold, coefficient, metric), independent of rank.
pub fn surface_records(rows: &[SweepRow]) -> Vec<SurfaceRecord> {
    let mut out: Vec<SurfaceRecord> = rows
        .iter()
        .map(|r| SurfaceRecord {
            camera_a: r.pair.0,
            camera_b: r.pair.1,
            metric: r.config.metric.tag().to_string(),
            loftr_threshold: r.config.loftr_threshold,
            distance_coefficient: r.config.distance_coefficient,
            f1_pct: 100.0 * r.metrics.f1,
        })
        .collect();
    out.sort_by(|a, b| {
        (a.camera_a, a.camera_b, &a.metric)
            .cmp(&(b.camera_a, b.camera_b, &b.metric))
            .then(a.loftr_threshold.total_cmp(&b.loftr_threshold))
            .then(a.distance_coefficient.total_cmp(&b.distance_coefficient))
    });
    out
}

/// Serialized homography of one camera pair, or why there is none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomographyRecord {
    pub camera_a: u32,
    pub camera_b: u32,
    /// Row-major, scaled so the bottom-right entry is 1.
    pub matrix: Option<[[f64; 3]; 3]>,
    pub inlier_count: usize,
    pub error: Option<String>,
}

impl HomographyRecord {
    pub fn ok(h: &Homography) -> Self {
        let m = h.matrix;
        Self {
            camera_a: h.src_camera,
            camera_b: h.dst_camera,
            matrix: Some(std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))),
            inlier_count: h.inlier_count,
            error: None,
        }
    }

    pub fn failed(pair: (u32, u32), error: String) -> Self {
        Self {
            camera_a: pair.0,
            camera_b: pair.1,
            matrix: None,
            inlier_count: 0,
            error: Some(error),
        }
    }

    pub fn homography(&self) -> Option<Homography> {
        let m = self.matrix?;
        let matrix = nalgebra::Matrix3::from_fn(|r, c| m[r][c]);
        let mut h = Homography::from_matrix(matrix)
            .ok()?
            .with_cameras(self.camera_a, self.camera_b);
        h.inlier_count = self.inlier_count;
        Some(h)
    }
}

/// A corner of one image rectangle warped into the other view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpCornerRecord {
    pub camera_a: u32,
    pub camera_b: u32,
    /// `a_to_b` or `b_to_a`.
    pub direction: String,
    pub corner: usize,
    /// Empty when the corner maps to infinity.
    pub x: Option<f64>,
    pub y: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use mca_core::{Metric, SweepConfig};

    fn row(t: f64, c: f64, metric: Metric, f1: f64) -> SweepRow {
        SweepRow {
            pair: (1, 4),
            config: SweepConfig {
                loftr_threshold: t,
                distance_coefficient: c,
                metric,
            },
            counts: EvalCounts::new(1, 0, 0),
            metrics: Metrics {
                precision: 1.0,
                recall: 1.0,
                f1,
            },
            failed_frames: 0,
        }
    }

    #[test]
    fn surface_is_in_grid_order() {
        let rows = [
            row(0.4, 2.0, Metric::Bayesian, 0.9),
            row(0.0, 10.0, Metric::MultiFrame, 0.5),
            row(0.0, 2.0, Metric::Bayesian, 0.7),
        ];
        let s = surface_records(&rows);
        assert_eq!(s[0].loftr_threshold, 0.0);
        assert_eq!(s[1].loftr_threshold, 0.4);
        assert_eq!(s[2].metric, "M5");
    }

    #[test]
    fn homography_record_round_trip() {
        let mut h = Homography::translation(3.0, -2.0).with_cameras(1, 4);
        h.inlier_count = 12;
        let rec = HomographyRecord::ok(&h);
        let json = serde_json::to_string(&rec).unwrap();
        let back: HomographyRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.homography().unwrap(), h);
        assert!(HomographyRecord::failed((1, 2), "no overlap".into())
            .homography()
            .is_none());
    }

    #[test]
    fn csv_leaves_undefined_ratios_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_csv(&p, [FrameScoreRecord::new(3, EvalCounts::default())]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "3,0,0,0,,,0,false,false");
        assert!(text.starts_with("frame_id,tp,fp,fn,precision,recall"));
    }
}
