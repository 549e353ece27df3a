//! Declarative run configuration (TOML); command-line flags override it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mca_core::evaluation::{BENCHMARK_CAMERA_PAIRS, DISTANCE_COEFFICIENTS, LOFTR_THRESHOLDS};
use mca_core::geometry::{GroundGrid, ImageSize, RansacParams};
use mca_core::synth::{ConfidenceModel, SceneSpec};
use mca_core::{Metric, PipelineParams, SweepConfig};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetLayout, CENTIMETERS, NATIVE_SIZE, WORKING_SCALE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Recorded dataset; mutually exclusive with `synth`.
    pub data: Option<DataConfig>,
    /// Generated scene; mutually exclusive with `data`.
    pub synth: Option<SynthConfig>,
    /// Camera pairs; defaults to the eight WILDTRACK pairs for recorded
    /// data and every pair of a synthetic scene.
    pub pairs: Option<Vec<[u32; 2]>>,
    /// Inclusive frame-id range.
    pub frames: Option<[u32; 2]>,
    /// Native to working resolution.
    pub scale: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Precomputed homographies (as written by `mca homography`).
    pub homographies: Option<PathBuf>,
    pub run: SingleRun,
    pub sweep: SweepGrid,
    pub pipeline: PipelineConfig,
    pub ransac: RansacConfig,
    pub grid: Option<GridConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            synth: None,
            pairs: None,
            frames: None,
            scale: WORKING_SCALE,
            seed: 0,
            out: PathBuf::from("out"),
            homographies: None,
            run: SingleRun::default(),
            sweep: SweepGrid::default(),
            pipeline: PipelineConfig::default(),
            ransac: RansacConfig::default(),
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset root in the WILDTRACK layout; `calibrations` and
    /// `annotations` default to its subdirectories.
    pub root: Option<PathBuf>,
    pub calibrations: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    /// Directory of match interchange files.
    pub matches: Option<PathBuf>,
    /// Resolution the intrinsics and annotations refer to.
    pub native_width: u32,
    pub native_height: u32,
    /// Factor converting stored translations to meters.
    pub translation_to_meters: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            calibrations: None,
            annotations: None,
            matches: None,
            native_width: NATIVE_SIZE.width,
            native_height: NATIVE_SIZE.height,
            translation_to_meters: CENTIMETERS,
        }
    }
}

impl DataConfig {
    pub fn layout(&self) -> Result<DatasetLayout> {
        let from_root = |sub: &str| self.root.as_ref().map(|r| r.join(sub));
        let calibrations = self
            .calibrations
            .clone()
            .or_else(|| from_root("calibrations"))
            .context("data: set `root` or `calibrations`")?;
        let annotations = self
            .annotations
            .clone()
            .or_else(|| from_root("annotations_positions"))
            .context("data: set `root` or `annotations`")?;
        Ok(DatasetLayout {
            calibrations,
            annotations,
        })
    }

    pub fn matches_dir(&self) -> Option<PathBuf> {
        self.matches
            .clone()
            .or_else(|| self.root.as_ref().map(|r| r.join("matches")))
    }

    pub fn native_size(&self) -> ImageSize {
        ImageSize::new(self.native_width, self.native_height)
    }
}

/// Scene parameters; fields mirror the generator's, the seed is the run's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_cameras: usize,
    pub n_people: usize,
    pub n_frames: usize,
    pub frame_step: u32,
    pub area_min: [f64; 2],
    pub area_max: [f64; 2],
    pub person_height: f64,
    pub person_radius: f64,
    pub min_separation: f64,
    pub walk_speed: f64,
    pub keypoints_per_person: usize,
    pub clutter_rate: usize,
    pub clutter_on_people: f64,
    pub noise_px: f64,
    pub true_confidence: [f64; 2],
    pub clutter_confidence: [f64; 2],
    pub image_width: u32,
    pub image_height: u32,
    pub focal_px: f64,
    pub camera_distance: f64,
    pub camera_height: f64,
    pub camera_arc_deg: f64,
    pub aim_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::from_spec(&SceneSpec::default())
    }
}

impl SynthConfig {
    pub fn from_spec(s: &SceneSpec) -> Self {
        Self {
            n_cameras: s.n_cameras,
            n_people: s.n_people,
            n_frames: s.n_frames,
            frame_step: s.frame_step,
            area_min: s.area_min,
            area_max: s.area_max,
            person_height: s.person_height,
            person_radius: s.person_radius,
            min_separation: s.min_separation,
            walk_speed: s.walk_speed,
            keypoints_per_person: s.keypoints_per_person,
            clutter_rate: s.clutter_rate,
            clutter_on_people: s.clutter_on_people,
            noise_px: s.noise_px,
            true_confidence: [s.confidence.true_range.0, s.confidence.true_range.1],
            clutter_confidence: [s.confidence.clutter_range.0, s.confidence.clutter_range.1],
            image_width: s.image_size.width,
            image_height: s.image_size.height,
            focal_px: s.focal_px,
            camera_distance: s.camera_distance,
            camera_height: s.camera_height,
            camera_arc_deg: s.camera_arc_deg,
            aim_spread: s.aim_spread,
        }
    }

    pub fn to_spec(&self, seed: u64) -> SceneSpec {
        SceneSpec {
            n_cameras: self.n_cameras,
            n_people: self.n_people,
            n_frames: self.n_frames,
            frame_step: self.frame_step,
            area_min: self.area_min,
            area_max: self.area_max,
            person_height: self.person_height,
            person_radius: self.person_radius,
            min_separation: self.min_separation,
            walk_speed: self.walk_speed,
            keypoints_per_person: self.keypoints_per_person,
            clutter_rate: self.clutter_rate,
            clutter_on_people: self.clutter_on_people,
            noise_px: self.noise_px,
            confidence: ConfidenceModel {
                true_range: (self.true_confidence[0], self.true_confidence[1]),
                clutter_range: (self.clutter_confidence[0], self.clutter_confidence[1]),
            },
            image_size: ImageSize::new(self.image_width, self.image_height),
            focal_px: self.focal_px,
            camera_distance: self.camera_distance,
            camera_height: self.camera_height,
            camera_arc_deg: self.camera_arc_deg,
            aim_spread: self.aim_spread,
            seed,
            ..SceneSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleRun {
    pub loftr_threshold: f64,
    pub distance_coefficient: f64,
    pub metric: String,
}

impl Default for SingleRun {
    fn default() -> Self {
        Self {
            loftr_threshold: 0.0,
            distance_coefficient: 10.0,
            metric: Metric::MultiFrame.tag().to_string(),
        }
    }
}

impl SingleRun {
    pub fn to_config(&self) -> Result<SweepConfig> {
        Ok(SweepConfig {
            loftr_threshold: self.loftr_threshold,
            distance_coefficient: self.distance_coefficient,
            metric: parse_metric(&self.metric)?,
        })
    }
}

fn parse_metric(s: &str) -> Result<Metric> {
    s.parse::<Metric>().map_err(|e| anyhow::anyhow!("{e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub loftr_thresholds: Vec<f64>,
    pub distance_coefficients: Vec<f64>,
    pub metrics: Vec<String>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            loftr_thresholds: LOFTR_THRESHOLDS.to_vec(),
            distance_coefficients: DISTANCE_COEFFICIENTS.to_vec(),
            metrics: Metric::ALL.iter().map(|m| m.tag().to_string()).collect(),
        }
    }
}

impl SweepGrid {
    pub fn configs(&self) -> Result<Vec<SweepConfig>> {
        let metrics = self
            .metrics
            .iter()
            .map(|m| parse_metric(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepConfig::grid_from(
            &self.loftr_thresholds,
            &self.distance_coefficients,
            &metrics,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub window: usize,
    pub accept_threshold: f64,
    pub mask: bool,
    pub symmetric_refactor: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let p = PipelineParams::default();
        Self {
            window: p.window,
            accept_threshold: p.accept_threshold,
            mask: p.mask,
            symmetric_refactor: p.symmetric_refactor,
        }
    }
}

impl PipelineConfig {
    pub fn params(&self) -> PipelineParams {
        PipelineParams {
            window: self.window,
            accept_threshold: self.accept_threshold,
            mask: self.mask,
            symmetric_refactor: self.symmetric_refactor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub threshold_px: f64,
    pub max_iters: usize,
    pub confidence: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        let p = RansacParams::default();
        Self {
            threshold_px: p.threshold_px,
            max_iters: p.max_iters,
            confidence: p.confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub origin: [f64; 2],
    pub z_units: f64,
}

impl From<&GroundGrid> for GridConfig {
    fn from(g: &GroundGrid) -> Self {
        Self {
            rows: g.rows,
            cols: g.cols,
            spacing: g.spacing,
            origin: g.origin,
            z_units: g.z_units,
        }
    }
}

impl From<&GridConfig> for GroundGrid {
    fn from(g: &GridConfig) -> Self {
        GroundGrid {
            rows: g.rows,
            cols: g.cols,
            spacing: g.spacing,
            origin: g.origin,
            z_units: g.z_units,
        }
    }
}

/// Grid spanning a synthetic scene's area at the people's mid height.
pub fn synth_grid(spec: &SceneSpec) -> GroundGrid {
    let spacing = 0.05;
    let cols = ((spec.area_max[0] - spec.area_min[0]) / spacing).round() as usize;
    let rows = ((spec.area_max[1] - spec.area_min[1]) / spacing).round() as usize;
    GroundGrid {
        rows,
        cols,
        spacing,
        origin: spec.area_min,
        z_units: 0.5 * spec.person_height / spacing,
    }
}

pub enum Source<'a> {
    Recorded(&'a DataConfig),
    Synthetic(Box<SceneSpec>),
}

impl RunConfig {
    /// Reads a config file. Relative input paths are taken relative to the
    /// file's directory; `out` stays relative to the working directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = cfg.data.as_mut() {
            rebase(&mut d.root);
            rebase(&mut d.calibrations);
            rebase(&mut d.annotations);
            rebase(&mut d.matches);
        }
        rebase(&mut cfg.homographies);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the invariants a run relies on.
    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synth) {
            (Some(_), Some(_)) => bail!("configure exactly one data source: both `data` and `synth` are set"),
            (None, None) => bail!("configure exactly one data source: set `data` (or --data) or `synth` (or --synth)"),
            _ => {}
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            bail!("scale must be positive, got {}", self.scale);
        }
        if self.pipeline.window == 0 {
            bail!("window must be at least 1");
        }
        if let Some([lo, hi]) = self.frames {
            if lo > hi {
                bail!("frame range {lo}..{hi} is empty");
            }
        }
        self.run.to_config()?;
        self.sweep.configs()?;
        Ok(())
    }

    pub fn source(&self) -> Result<Source<'_>> {
        self.validate()?;
        Ok(match (&self.data, &self.synth) {
            (Some(d), None) => Source::Recorded(d),
            (None, Some(s)) => Source::Synthetic(Box::new(s.to_spec(self.seed))),
            _ => unreachable!("validated"),
        })
    }

    pub fn frame_range(&self) -> std::ops::RangeInclusive<u32> {
        self.frames.map_or(0..=u32::MAX, |[lo, hi]| lo..=hi)
    }

    pub fn ransac_params(&self) -> RansacParams {
        RansacParams {
            threshold_px: self.ransac.threshold_px,
            max_iters: self.ransac.max_iters,
            confidence: self.ransac.confidence,
            seed: self.seed,
        }
    }

    pub fn default_pairs(&self) -> Vec<(u32, u32)> {
        BENCHMARK_CAMERA_PAIRS.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig {
            synth: Some(SynthConfig::default()),
            grid: Some(GridConfig::from(&GroundGrid::default())),
            ..RunConfig::default()
        };
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn exactly_one_source() {
        assert!(RunConfig::default().validate().is_err());
        let both = RunConfig {
            data: Some(DataConfig::default()),
            synth: Some(SynthConfig::default()),
            ..RunConfig::default()
        };
        assert!(both.validate().is_err());
        let synth = RunConfig {
            synth: Some(SynthConfig::default()),
            ..RunConfig::default()
        };
        synth.validate().unwrap();
    }

    #[test]
    fn partial_file() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            pairs = [[1, 4], [5, 6]]
            [data]
            root = "/data/Wildtrack"
            [run]
            metric = "M4"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.scale, WORKING_SCALE);
        assert_eq!(cfg.run.to_config().unwrap().metric, Metric::Bayesian);
        let layout = cfg.data.as_ref().unwrap().layout().unwrap();
        assert_eq!(
            layout.annotations,
            PathBuf::from("/data/Wildtrack/annotations_positions")
        );
        assert_eq!(cfg.sweep.configs().unwrap().len(), 48);
        assert!(toml::from_str::<RunConfig>("sede = 1").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let base = RunConfig {
            synth: Some(SynthConfig::default()),
            ..RunConfig::default()
        };
        let mut c = base.clone();
        c.run.metric = "M9".into();
        assert!(c.validate().is_err());
        let mut c = base;
        c.frames = Some([10, 2]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn synth_grid_covers_area() {
        let spec = SceneSpec::default();
        let g = synth_grid(&spec);
        assert_eq!(g.cols, 240);
        assert!((g.elevation() - 0.9).abs() < 1e-12);
        assert_eq!(SynthConfig::from_spec(&spec).to_spec(spec.seed), spec);
    }
}
