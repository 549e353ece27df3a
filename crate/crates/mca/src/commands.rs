//! Subcommand implementations. Each writes its outputs and a manifest into
//! the configured output directory and returns what it computed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use mca_core::correspondence::filter_by_confidence;
use mca_core::detection::{build_frame_pairs, covisible_people, Detection, FramePair};
use mca_core::evaluation::{evaluate_config, micro_f1, rank_rows, score_frame, EvalCounts, SweepReport, SweepRow};
use mca_core::geometry::{compute_pair_homography, CameraCalibration, GroundGrid};
use mca_core::pipeline::{prepare_frames, run_pair, FrameInput, FrameResult, PreparedFrame};
use mca_core::refactor::{refactor_matches_with_diagnostics, RefactorParams};
use mca_core::synth::{generate_scene, Scene};
use mca_core::{AssociatedPair, Association, Homography};
use rayon::prelude::*;

use crate::config::{synth_grid, DataConfig, GridConfig, RunConfig, Source};
use crate::dataset::{write_annotations, write_calibration, DatasetLayout, CENTIMETERS};
use crate::interchange::{write_matches, MatchDir};
use crate::manifest::Manifest;
use crate::report::*;

/// Inputs of a run, loaded once.
pub struct Workspace {
    pub calibrations: BTreeMap<u32, CameraCalibration>,
    pub annotations: BTreeMap<u32, Vec<Detection>>,
    pub pairs: Vec<(u32, u32)>,
    pub grid: GroundGrid,
    matches: Matches,
    /// Files read so far, for the manifest.
    pub input_files: Vec<PathBuf>,
}

enum Matches {
    Dir(Option<MatchDir>),
    Scene(Box<Scene>),
}

impl Workspace {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        match cfg.source()? {
            Source::Recorded(data) => Self::load_recorded(cfg, data),
            Source::Synthetic(spec) => {
                let scene = generate_scene(&spec).context("generating synthetic scene")?;
                let pairs = cfg
                    .pairs
                    .as_ref()
                    .map(|p| p.iter().map(|&[a, b]| (a, b)).collect())
                    .unwrap_or_else(|| scene.camera_pairs());
                let range = cfg.frame_range();
                let annotations = scene
                    .annotations()
                    .into_iter()
                    .filter(|(f, _)| range.contains(f))
                    .collect();
                Ok(Self {
                    calibrations: scene.calibrations.iter().map(|c| (c.camera_id, c.clone())).collect(),
                    annotations,
                    pairs,
                    grid: cfg.grid.as_ref().map_or_else(|| synth_grid(&spec), GroundGrid::from),
                    matches: Matches::Scene(Box::new(scene)),
                    input_files: Vec::new(),
                })
            }
        }
    }

    fn load_recorded(cfg: &RunConfig, data: &DataConfig) -> Result<Self> {
        let layout = data.layout()?;
        let pairs: Vec<(u32, u32)> = cfg
            .pairs
            .as_ref()
            .map(|p| p.iter().map(|&[a, b]| (a, b)).collect())
            .unwrap_or_else(|| cfg.default_pairs());
        let mut cameras: Vec<u32> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        cameras.sort_unstable();
        cameras.dedup();

        let mut input_files = Vec::new();
        let mut calibrations = BTreeMap::new();
        for &cam in &cameras {
            let calib = layout
                .load_calibration(cam, data.native_size(), data.translation_to_meters, cfg.scale)
                .with_context(|| format!("camera {cam}"))?;
            input_files.push(layout.intrinsic_path(cam));
            input_files.push(layout.extrinsic_path(cam));
            calibrations.insert(cam, calib);
        }
        let bounds = data.native_size().scaled(cfg.scale);
        let range = cfg.frame_range();
        let annotations = layout.load_all_annotations(range.clone(), cfg.scale, bounds)?;
        input_files.extend(annotations.keys().map(|&f| layout.annotation_path(f)));
        info!(
            "loaded {} cameras and {} annotated frames from {}",
            calibrations.len(),
            annotations.len(),
            layout.annotations.display()
        );
        let matches = data.matches_dir().map(MatchDir::new);
        if matches.as_ref().is_none_or(|m| !m.dir.is_dir()) {
            warn!("no match directory; every frame is scored without correspondences");
        }
        Ok(Self {
            calibrations,
            annotations,
            pairs,
            grid: cfg.grid.as_ref().map_or_else(GroundGrid::default, GroundGrid::from),
            matches: Matches::Dir(matches),
            input_files,
        })
    }

    pub fn calibration(&self, camera_id: u32) -> Result<&CameraCalibration> {
        self.calibrations
            .get(&camera_id)
            .with_context(|| format!("no calibration for camera {camera_id}"))
    }

    /// Frames of one pair with their correspondences. Unreadable match
    /// files are logged and treated as missing. Returns the match files read.
    pub fn frame_inputs(&self, pair: (u32, u32)) -> (Vec<FrameInput>, Vec<PathBuf>) {
        let (a, b) = pair;
        match &self.matches {
            Matches::Scene(scene) => {
                let inputs = scene
                    .frame_inputs(a, b)
                    .into_iter()
                    .filter(|f| self.annotations.contains_key(&f.frame.frame_id))
                    .collect();
                (inputs, Vec::new())
            }
            Matches::Dir(dir) => {
                let frames = build_frame_pairs(&self.annotations, a, b, 0..=u32::MAX);
                let mut files = Vec::new();
                let inputs = frames
                    .into_iter()
                    .map(|frame| {
                        let matches = dir.as_ref().and_then(|d| match d.load(frame.frame_id, a, b) {
                            Ok(Some(ms)) => {
                                files.push(d.path_for(frame.frame_id, a, b));
                                Some(ms)
                            }
                            Ok(None) => None,
                            Err(e) => {
                                warn!("{e}; frame {} scored without correspondences", frame.frame_id);
                                None
                            }
                        });
                        FrameInput { frame, matches }
                    })
                    .collect::<Vec<_>>();
                let missing = inputs.iter().filter(|f| f.matches.is_none()).count();
                if missing > 0 {
                    warn!(
                        "pair ({a}, {b}): {missing} of {} frames have no correspondences",
                        inputs.len()
                    );
                }
                (inputs, files)
            }
        }
    }
}

/// Camera pair with its homography or the reason there is none.
pub type PairHomography = ((u32, u32), Result<Homography, String>);

/// Pair homographies, precomputed or estimated from the calibrations.
pub fn pair_homographies(cfg: &RunConfig, ws: &Workspace) -> Result<Vec<PairHomography>> {
    if let Some(path) = &cfg.homographies {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let records: Vec<HomographyRecord> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        return Ok(ws
            .pairs
            .iter()
            .map(|&pair| {
                let found = records
                    .iter()
                    .find(|r| (r.camera_a, r.camera_b) == pair)
                    .ok_or_else(|| format!("no homography for pair {pair:?} in {}", path.display()))
                    .and_then(|r| {
                        r.homography()
                            .ok_or_else(|| r.error.clone().unwrap_or_else(|| "invalid matrix".into()))
                    });
                (pair, found)
            })
            .collect());
    }
    let ransac = cfg.ransac_params();
    Ok(ws
        .pairs
        .par_iter()
        .map(|&(a, b)| {
            let h = (|| {
                let (ca, cb) = (
                    ws.calibration(a).map_err(|e| e.to_string())?,
                    ws.calibration(b).map_err(|e| e.to_string())?,
                );
                compute_pair_homography(ca, cb, &ws.grid, &ransac).map_err(|e| e.to_string())
            })();
            ((a, b), h)
        })
        .collect())
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn finish(mut manifest: Manifest, cfg: &RunConfig, ws: Option<&Workspace>, extra_inputs: &[PathBuf]) -> Result<()> {
    if let Some(ws) = ws {
        manifest.add_inputs(ws.input_files.iter().map(PathBuf::as_path))?;
    }
    manifest.add_inputs(extra_inputs.iter().map(PathBuf::as_path))?;
    if let Some(h) = &cfg.homographies {
        manifest.add_inputs([h.as_path()])?;
    }
    manifest.write(&cfg.out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// homography

pub struct HomographyOutcome {
    pub records: Vec<HomographyRecord>,
}

pub fn cmd_homography(cfg: &RunConfig) -> Result<HomographyOutcome> {
    let ws = Workspace::load(cfg)?;
    let out = out_dir(cfg)?;
    let mut manifest = Manifest::new("homography", cfg);
    let mut records = Vec::new();
    let mut corners = Vec::new();
    for (pair, h) in pair_homographies(cfg, &ws)? {
        match h {
            Ok(h) => {
                info!("pair {pair:?}: {} inliers", h.inlier_count);
                records.push(HomographyRecord::ok(&h));
                corners.extend(warp_corners(pair, &h, &ws)?);
            }
            Err(e) => {
                warn!("pair {pair:?}: {e}");
                records.push(HomographyRecord::failed(pair, e));
            }
        }
    }
    write_json(&out.join("homographies.json"), &records)?;
    write_csv(&out.join("warp_corners.csv"), &corners)?;
    manifest.add_output("homographies.json");
    manifest.add_output("warp_corners.csv");
    finish(manifest, cfg, Some(&ws), &[])?;
    Ok(HomographyOutcome { records })
}

/// Image rectangles of each camera warped into the other view.
fn warp_corners(pair: (u32, u32), h: &Homography, ws: &Workspace) -> Result<Vec<WarpCornerRecord>> {
    let (ca, cb) = (ws.calibration(pair.0)?, ws.calibration(pair.1)?);
    let mut out = Vec::new();
    let inverse = h.inverse().ok();
    for (direction, hom, size) in [
        ("a_to_b", Some(h), ca.image_size),
        ("b_to_a", inverse.as_ref(), cb.image_size),
    ] {
        for (corner, p) in size.corners().iter().enumerate() {
            let q = hom.and_then(|hm| hm.project(p).ok());
            out.push(WarpCornerRecord {
                camera_a: pair.0,
                camera_b: pair.1,
                direction: direction.to_string(),
                corner,
                x: q.map(|q| q.x),
                y: q.map(|q| q.y),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// associate

pub struct PairRun {
    pub pair: (u32, u32),
    pub results: Vec<FrameResult>,
    pub counts: EvalCounts,
}

pub struct AssociateOutcome {
    pub runs: Vec<PairRun>,
    pub failed_pairs: Vec<FailedPair>,
}

fn check_distinct(pairs: &[(u32, u32)]) -> Result<()> {
    if let Some(p) = pairs.iter().find(|p| p.0 == p.1) {
        bail!("pair ({}, {}) repeats a camera", p.0, p.1);
    }
    Ok(())
}

struct PreparedPair {
    pair: (u32, u32),
    homography: Homography,
    frames: Vec<PreparedFrame>,
    match_files: Vec<PathBuf>,
}

/// Homography and masked frames of every pair; pairs without a homography
/// are reported and skipped.
/// Camera pair that could not be processed, with the reason.
pub type FailedPair = ((u32, u32), String);

fn prepare_pairs(cfg: &RunConfig, ws: &Workspace) -> Result<(Vec<PreparedPair>, Vec<FailedPair>)> {
    check_distinct(&ws.pairs)?;
    let params = cfg.pipeline.params();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (pair, h) in pair_homographies(cfg, ws)? {
        match h {
            Ok(homography) => {
                let (inputs, match_files) = ws.frame_inputs(pair);
                let frames = prepare_frames(&inputs, &homography, &params);
                let fallbacks = frames.iter().filter(|f| f.mask_fallback).count();
                if fallbacks > 0 {
                    warn!("pair {pair:?}: overlap mask degenerate, per-point test used on {fallbacks} frames");
                }
                ok.push(PreparedPair {
                    pair,
                    homography,
                    frames,
                    match_files,
                });
            }
            Err(e) => {
                warn!("pair {pair:?} skipped: {e}");
                failed.push((pair, e));
            }
        }
    }
    Ok((ok, failed))
}

pub fn cmd_associate(cfg: &RunConfig, diagnostics: bool) -> Result<AssociateOutcome> {
    let ws = Workspace::load(cfg)?;
    let out = out_dir(cfg)?;
    let config = cfg.run.to_config()?;
    let params = cfg.pipeline.params();
    let (prepared, failed_pairs) = prepare_pairs(cfg, &ws)?;
    let mut manifest = Manifest::new("associate", cfg);
    let mut match_files = Vec::new();

    let runs: Vec<PairRun> = prepared
        .par_iter()
        .map(|p| {
            let results = run_pair(&p.frames, &p.homography, &config, &params);
            let counts = results.iter().map(|r| r.counts).sum();
            PairRun {
                pair: p.pair,
                results,
                counts,
            }
        })
        .collect();

    let mut summary = Vec::new();
    for (run, prep) in runs.iter().zip(&prepared) {
        let tag = pair_tag(run.pair);
        let mut assoc = Vec::new();
        for (r, f) in run.results.iter().zip(&prep.frames) {
            assoc.extend(association_records(
                run.pair,
                r,
                &f.frame.detections_a,
                &f.frame.detections_b,
            ));
        }
        write_csv(&out.join(format!("associations_{tag}.csv")), &assoc)?;
        write_csv(
            &out.join(format!("scores_{tag}.csv")),
            run.results.iter().map(FrameScoreRecord::from_result),
        )?;
        manifest.add_output(format!("associations_{tag}.csv"));
        manifest.add_output(format!("scores_{tag}.csv"));
        if diagnostics {
            write_csv(
                &out.join(format!("affinity_{tag}.csv")),
                run.results.iter().flat_map(|r| affinity_records(&r.affinity)),
            )?;
            let refactor = RefactorParams {
                distance_coefficient: config.distance_coefficient,
                symmetric: params.symmetric_refactor,
            };
            let diags = prep.frames.iter().filter_map(|f| {
                let ms = filter_by_confidence(f.matches.as_ref()?, config.loftr_threshold);
                let (_, d) = refactor_matches_with_diagnostics(&ms, &prep.homography, &refactor);
                Some(refactor_records(f.frame.frame_id, &d))
            });
            write_csv(&out.join(format!("refactor_{tag}.csv")), diags.flatten())?;
            manifest.add_output(format!("affinity_{tag}.csv"));
            manifest.add_output(format!("refactor_{tag}.csv"));
        }
        let m = micro_f1(&run.counts);
        info!(
            "pair {:?}: precision {:.2}% recall {:.2}% f1 {:.2}%",
            run.pair,
            100.0 * m.precision,
            100.0 * m.recall,
            100.0 * m.f1
        );
        summary.push(SummaryRecord::new(run.pair, run.results.len(), run.counts, m));
        match_files.extend(prep.match_files.iter().cloned());
    }
    write_csv(&out.join("summary.csv"), &summary)?;
    manifest.add_output("summary.csv");
    finish(manifest, cfg, Some(&ws), &match_files)?;
    Ok(AssociateOutcome { runs, failed_pairs })
}

// ---------------------------------------------------------------------------
// sweep

pub struct SweepOutcome {
    pub reports: Vec<SweepReport>,
    pub failed_pairs: Vec<FailedPair>,
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let ws = Workspace::load(cfg)?;
    let out = out_dir(cfg)?;
    let configs = cfg.sweep.configs()?;
    let params = cfg.pipeline.params();
    let (prepared, failed_pairs) = prepare_pairs(cfg, &ws)?;
    info!(
        "sweeping {} configurations over {} pairs",
        configs.len(),
        prepared.len()
    );

    let reports: Vec<SweepReport> = prepared
        .par_iter()
        .map(|p| {
            let mut rows: Vec<SweepRow> = configs
                .par_iter()
                .map(|c| evaluate_config(p.pair, &p.frames, &p.homography, c, &params))
                .collect();
            rank_rows(&mut rows);
            SweepReport { pair: p.pair, rows }
        })
        .collect();

    let all: Vec<SweepRecord> = reports
        .iter()
        .flat_map(|r| r.rows.iter().enumerate().map(|(k, row)| SweepRecord::new(k + 1, row)))
        .collect();
    let mut best: Vec<BestRecord> = reports.iter().filter_map(|r| r.best()).map(BestRecord::new).collect();
    best.sort_by(|a, b| b.f_score.total_cmp(&a.f_score));
    let surface: Vec<SurfaceRecord> = reports.iter().flat_map(|r| surface_records(&r.rows)).collect();

    write_csv(&out.join("sweep.csv"), &all)?;
    write_csv(
        &out.join("best.csv"),
        best.iter().map(BestRecord::flat).collect::<Vec<_>>(),
    )?;
    write_json(&out.join("table.json"), &best)?;
    write_csv(&out.join("f1_surface.csv"), &surface)?;
    for b in &best {
        info!(
            "pair ({}, {}): f1 {:.2}% (threshold {}, coefficient {}, {})",
            b.camera_pair[0],
            b.camera_pair[1],
            b.f_score,
            b.loftr_conf_threshold,
            b.refactor_distance_coefficient,
            b.association_metric
        );
    }
    let mut manifest = Manifest::new("sweep", cfg);
    for name in ["sweep.csv", "best.csv", "table.json", "f1_surface.csv"] {
        manifest.add_output(name);
    }
    let match_files: Vec<PathBuf> = prepared.iter().flat_map(|p| p.match_files.iter().cloned()).collect();
    finish(manifest, cfg, Some(&ws), &match_files)?;
    Ok(SweepOutcome { reports, failed_pairs })
}

// ---------------------------------------------------------------------------
// synth

/// Writes a synthetic scene as a dataset directory plus a `run.toml` that
/// points the other subcommands at it.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Scene> {
    let spec = match cfg.source()? {
        Source::Synthetic(spec) => *spec,
        Source::Recorded(_) => bail!("synth needs a `synth` data source"),
    };
    let scene = generate_scene(&spec).context("generating synthetic scene")?;
    let out = out_dir(cfg)?;
    let layout = DatasetLayout::from_root(out);
    let n_cameras = scene.calibrations.len() as u32;

    for c in &scene.calibrations {
        write_calibration(
            c,
            &layout.intrinsic_path(c.camera_id),
            &layout.extrinsic_path(c.camera_id),
            CENTIMETERS,
        )?;
    }
    let matches = MatchDir::new(out.join("matches"));
    let mut positions = Vec::new();
    for frame in &scene.frames {
        write_annotations(
            &layout.annotation_path(frame.frame_id),
            &frame.detections,
            n_cameras,
            1.0,
        )?;
        for (&(a, b), pm) in &frame.matches {
            write_matches(&matches.path_for(frame.frame_id, a, b), &pm.matches)?;
        }
        for (person_id, p) in frame.positions.iter().enumerate() {
            positions.push(PositionRecord {
                frame_id: frame.frame_id,
                person_id: person_id as u32,
                x: p.x,
                y: p.y,
            });
        }
    }
    write_csv(&out.join("positions.csv"), &positions)?;

    let run = RunConfig {
        data: Some(DataConfig {
            root: Some(PathBuf::from(".")),
            native_width: spec.image_size.width,
            native_height: spec.image_size.height,
            translation_to_meters: CENTIMETERS,
            ..DataConfig::default()
        }),
        synth: None,
        pairs: Some(
            cfg.pairs
                .clone()
                .unwrap_or_else(|| scene.camera_pairs().iter().map(|&(a, b)| [a, b]).collect()),
        ),
        scale: 1.0,
        out: PathBuf::from("results"),
        grid: Some(cfg.grid.clone().unwrap_or_else(|| GridConfig::from(&synth_grid(&spec)))),
        ..cfg.clone()
    };
    fs::write(out.join("run.toml"), run.to_toml())?;

    let mut manifest = Manifest::new("synth", cfg);
    for name in [
        "calibrations/",
        "annotations_positions/",
        "matches/",
        "positions.csv",
        "run.toml",
    ] {
        manifest.add_output(name);
    }
    finish(manifest, cfg, None, &[])?;
    info!(
        "wrote {} frames for {} cameras to {}",
        scene.frames.len(),
        n_cameras,
        out.display()
    );
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PositionRecord {
    pub frame_id: u32,
    pub person_id: u32,
    pub x: f64,
    pub y: f64,
}

// ---------------------------------------------------------------------------
// score

pub struct ScoreOutcome {
    pub per_pair: Vec<((u32, u32), EvalCounts)>,
}

/// Scores an associations file against the annotations. Pairs default to
/// those present in the predictions.
pub fn cmd_score(cfg: &RunConfig, predictions: &Path) -> Result<ScoreOutcome> {
    let mut reader =
        csv::Reader::from_path(predictions).with_context(|| format!("reading {}", predictions.display()))?;
    // pair -> frame -> predicted (person_a, person_b)
    let mut by_pair: BTreeMap<_, BTreeMap<u32, Vec<(u32, u32)>>> = BTreeMap::new();
    for (row, rec) in reader.deserialize::<AssociationRecord>().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", predictions.display(), row + 2))?;
        by_pair
            .entry((rec.camera_a, rec.camera_b))
            .or_default()
            .entry(rec.frame_id)
            .or_default()
            .push((rec.person_a, rec.person_b));
    }
    let mut cfg = cfg.clone();
    if cfg.pairs.is_none() {
        cfg.pairs = Some(by_pair.keys().map(|&(a, b)| [a, b]).collect());
    }
    let ws = Workspace::load(&cfg)?;
    let out = out_dir(&cfg)?;
    let mut manifest = Manifest::new("score", &cfg);
    let mut per_pair = Vec::new();
    let mut summary = Vec::new();
    let empty = BTreeMap::new();
    for &pair in &ws.pairs {
        let preds = by_pair.get(&pair).unwrap_or(&empty);
        let frames = build_frame_pairs(&ws.annotations, pair.0, pair.1, 0..=u32::MAX);
        let scores: Vec<FrameScoreRecord> = frames
            .iter()
            .map(|f| {
                FrameScoreRecord::new(
                    f.frame_id,
                    score_predictions(f, preds.get(&f.frame_id).map_or(&[][..], Vec::as_slice)),
                )
            })
            .collect();
        let counts: EvalCounts = scores.iter().map(|s| EvalCounts::new(s.tp, s.fp, s.fn_)).sum();
        let tag = pair_tag(pair);
        write_csv(&out.join(format!("scores_{tag}.csv")), &scores)?;
        manifest.add_output(format!("scores_{tag}.csv"));
        summary.push(SummaryRecord::new(pair, frames.len(), counts, micro_f1(&counts)));
        per_pair.push((pair, counts));
    }
    write_csv(&out.join("summary.csv"), &summary)?;
    manifest.add_output("summary.csv");
    finish(manifest, &cfg, Some(&ws), &[predictions.to_path_buf()])?;
    Ok(ScoreOutcome { per_pair })
}

/// Counts for predictions given as person-id pairs. A pair naming a person
/// without a detection on that side is a false positive.
pub fn score_predictions(frame: &FramePair, pairs: &[(u32, u32)]) -> EvalCounts {
    let index = |dets: &[Detection], pid: u32| dets.iter().position(|d| d.person_id == pid);
    let mut association = Association {
        frame_id: frame.frame_id,
        ..Association::default()
    };
    let mut unresolved = 0;
    for &(pa, pb) in pairs {
        match (index(&frame.detections_a, pa), index(&frame.detections_b, pb)) {
            (Some(index_a), Some(index_b)) => association.pairs.push(AssociatedPair {
                index_a,
                index_b,
                affinity: 1.0,
            }),
            _ => unresolved += 1,
        }
    }
    let mut counts = score_frame(&association, &frame.detections_a, &frame.detections_b);
    counts.fp += unresolved;
    debug_assert!(counts.tp <= covisible_people(&frame.detections_a, &frame.detections_b).len());
    counts
}
