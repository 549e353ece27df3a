//! Synthetic multi-camera scenes with exact ground truth.
//!
//! People are vertical prisms walking on the ground plane. Every camera
//! sees them through an exact pinhole model, detections are the tight
//! boxes of the projected prisms, and correspondences are body points seen
//! by both cameras plus clutter with low confidence. Clutter is drawn from
//! its own random stream, so changing the clutter rate leaves the rest of
//! the scene bit-identical.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Point2, Point3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::correspondence::{KeypointMatch, MatchSet, Provenance};
use crate::detection::{build_frame_pairs, BBox, Detection};
use crate::geometry::{CameraCalibration, GeometryError, ImageSize};
use crate::pipeline::FrameInput;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(&'static str),
    #[error("cameras {0} and {1} share no field of view over the area")]
    NoOverlap(u32, u32),
    #[error("could not place {0} people with the requested separation")]
    Crowded(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Confidence ranges (uniform) of true and clutter correspondences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceModel {
    pub true_range: (f64, f64),
    pub clutter_range: (f64, f64),
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self {
            true_range: (0.7, 1.0),
            clutter_range: (0.0, 0.5),
        }
    }
}

/// Everything that determines a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub n_cameras: usize,
    pub n_people: usize,
    pub n_frames: usize,
    /// Frame-id increment between annotated frames.
    pub frame_step: u32,
    /// Seconds between annotated frames.
    pub frame_interval: f64,
    /// Walkable area `[xmin, ymin]..[xmax, ymax]`, meters.
    pub area_min: [f64; 2],
    pub area_max: [f64; 2],
    pub person_height: f64,
    pub person_radius: f64,
    /// Minimum center distance kept between people, meters.
    pub min_separation: f64,
    /// Walking speed, m/s.
    pub walk_speed: f64,
    pub keypoints_per_person: usize,
    /// False correspondences per frame and camera pair.
    pub clutter_rate: usize,
    /// Share of clutter drawn inside (random) detection boxes rather than
    /// anywhere in the images.
    pub clutter_on_people: f64,
    /// Standard deviation of the pixel noise on true correspondences.
    pub noise_px: f64,
    pub confidence: ConfidenceModel,
    pub image_size: ImageSize,
    pub focal_px: f64,
    /// Horizontal distance of the cameras from the area center, meters.
    pub camera_distance: f64,
    pub camera_height: f64,
    /// Angle between the first and last camera around the area center.
    pub camera_arc_deg: f64,
    /// Sideways shift of each camera's aim point, meters; spreads the views
    /// so that the pair overlap is partial.
    pub aim_spread: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_cameras: 2,
            n_people: 5,
            n_frames: 20,
            frame_step: 5,
            frame_interval: 0.5,
            area_min: [-6.0, -6.0],
            area_max: [6.0, 6.0],
            person_height: 1.8,
            person_radius: 0.25,
            min_separation: 1.5,
            walk_speed: 0.5,
            keypoints_per_person: 20,
            clutter_rate: 0,
            clutter_on_people: 0.5,
            noise_px: 0.0,
            confidence: ConfidenceModel::default(),
            image_size: ImageSize::new(1280, 720),
            focal_px: 1000.0,
            camera_distance: 13.0,
            camera_height: 6.0,
            camera_arc_deg: 60.0,
            aim_spread: 3.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg| Err(SynthError::InvalidSpec(msg));
        if self.n_cameras < 2 {
            return bad("need at least two cameras");
        }
        if self.area_max[0] <= self.area_min[0] || self.area_max[1] <= self.area_min[1] {
            return bad("empty area");
        }
        if !(self.person_height > 0.0) || !(self.person_radius > 0.0) {
            return bad("person dimensions must be positive");
        }
        if !(self.noise_px >= 0.0) || !(self.walk_speed >= 0.0) || !(self.frame_interval >= 0.0) {
            return bad("negative noise, speed or frame interval");
        }
        if !(0.0..=1.0).contains(&self.clutter_on_people) {
            return bad("clutter_on_people outside [0, 1]");
        }
        let ok_range = |(lo, hi): (f64, f64)| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi;
        if !ok_range(self.confidence.true_range) || !ok_range(self.confidence.clutter_range) {
            return bad("confidence range outside [0, 1]");
        }
        if !(self.focal_px > 0.0) || self.image_size.width == 0 || self.image_size.height == 0 {
            return bad("invalid camera intrinsics");
        }
        Ok(())
    }
}

/// Ground truth of one correspondence: the person and world point it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchTruth {
    pub person_id: u32,
    pub world: Point3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMatches {
    pub matches: MatchSet,
    /// Index-aligned with `matches.matches`; `None` marks clutter.
    pub truth: Vec<Option<MatchTruth>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub frame_id: u32,
    /// Ground-plane position of every person.
    pub positions: Vec<Point2<f64>>,
    /// Detections of all cameras.
    pub detections: Vec<Detection>,
    /// Keyed by `(camera_a, camera_b)` with `camera_a < camera_b`.
    pub matches: BTreeMap<(u32, u32), PairMatches>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub calibrations: Vec<CameraCalibration>,
    pub frames: Vec<SceneFrame>,
}

impl Scene {
    pub fn calibration(&self, camera_id: u32) -> Option<&CameraCalibration> {
        self.calibrations.iter().find(|c| c.camera_id == camera_id)
    }

    pub fn camera_pairs(&self) -> Vec<(u32, u32)> {
        let ids: Vec<u32> = self.calibrations.iter().map(|c| c.camera_id).collect();
        let mut pairs = Vec::new();
        for (k, &a) in ids.iter().enumerate() {
            for &b in &ids[k + 1..] {
                pairs.push((a, b));
            }
        }
        pairs
    }

    /// All detections keyed by frame id.
    pub fn annotations(&self) -> BTreeMap<u32, Vec<Detection>> {
        self.frames.iter().map(|f| (f.frame_id, f.detections.clone())).collect()
    }

    /// Pipeline input for one camera pair, in frame order.
    pub fn frame_inputs(&self, camera_a: u32, camera_b: u32) -> Vec<FrameInput> {
        let pairs = build_frame_pairs(&self.annotations(), camera_a, camera_b, 0..=u32::MAX);
        pairs
            .into_iter()
            .zip(&self.frames)
            .map(|(frame, sf)| {
                let matches = sf.matches.get(&(camera_a, camera_b)).map(|p| p.matches.clone());
                FrameInput { frame, matches }
            })
            .collect()
    }
}

struct Walker {
    position: Point2<f64>,
    velocity: Vector2<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn place_cameras(spec: &SceneSpec) -> Result<Vec<CameraCalibration>, SynthError> {
    let cx = 0.5 * (spec.area_min[0] + spec.area_max[0]);
    let cy = 0.5 * (spec.area_min[1] + spec.area_max[1]);
    let w = f64::from(spec.image_size.width);
    let h = f64::from(spec.image_size.height);
    let k = Matrix3::new(spec.focal_px, 0.0, 0.5 * w, 0.0, spec.focal_px, 0.5 * h, 0.0, 0.0, 1.0);
    let arc = spec.camera_arc_deg.to_radians();
    let n = spec.n_cameras;
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            let azimuth = -0.5 * arc + t * arc - core::f64::consts::FRAC_PI_2;
            let (s, c) = (libm::sin(azimuth), libm::cos(azimuth));
            let eye = Point3::new(
                cx + spec.camera_distance * c,
                cy + spec.camera_distance * s,
                spec.camera_height,
            );
            // aim sideways (perpendicular to the viewing direction)
            let side = (t - 0.5) * 2.0 * spec.aim_spread;
            let target = Point3::new(cx - s * side, cy + c * side, 0.5 * spec.person_height);
            CameraCalibration::look_at(i as u32 + 1, k, eye, target, Vector3::z(), spec.image_size)
                .map_err(SynthError::from)
        })
        .collect()
}

fn check_overlap(spec: &SceneSpec, cams: &[CameraCalibration]) -> Result<(), SynthError> {
    let steps = 24;
    let z = 0.5 * spec.person_height;
    let samples: Vec<Point3<f64>> = (0..=steps)
        .flat_map(|i| {
            (0..=steps).map(move |j| {
                let u = i as f64 / steps as f64;
                let v = j as f64 / steps as f64;
                Point3::new(
                    spec.area_min[0] + u * (spec.area_max[0] - spec.area_min[0]),
                    spec.area_min[1] + v * (spec.area_max[1] - spec.area_min[1]),
                    z,
                )
            })
        })
        .collect();
    let sees = |c: &CameraCalibration, p: &Point3<f64>| c.project(p).is_some_and(|q| c.image_size.contains(&q));
    for (k, a) in cams.iter().enumerate() {
        for b in &cams[k + 1..] {
            if !samples.iter().any(|p| sees(a, p) && sees(b, p)) {
                return Err(SynthError::NoOverlap(a.camera_id, b.camera_id));
            }
        }
    }
    Ok(())
}

fn spawn_walkers(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Walker>, SynthError> {
    let margin = spec.person_radius;
    let xr = (spec.area_min[0] + margin, spec.area_max[0] - margin);
    let yr = (spec.area_min[1] + margin, spec.area_max[1] - margin);
    let mut walkers: Vec<Walker> = Vec::with_capacity(spec.n_people);
    let mut attempts = 0;
    while walkers.len() < spec.n_people {
        attempts += 1;
        if attempts > 10_000 * spec.n_people.max(1) {
            return Err(SynthError::Crowded(spec.n_people));
        }
        let p = Point2::new(uniform(rng, xr), uniform(rng, yr));
        if walkers.iter().any(|w| (w.position - p).norm() < spec.min_separation) {
            continue;
        }
        let heading = rng.random_range(0.0..core::f64::consts::TAU);
        walkers.push(Walker {
            position: p,
            velocity: Vector2::new(libm::cos(heading), libm::sin(heading)) * spec.walk_speed,
        });
    }
    Ok(walkers)
}

/// Moves everyone one step; a step that would leave the area or come
/// closer than `min_separation` to someone is cancelled and the walker
/// turns around.
fn step_walkers(spec: &SceneSpec, walkers: &mut [Walker]) {
    let margin = spec.person_radius;
    for k in 0..walkers.len() {
        let next = walkers[k].position + walkers[k].velocity * spec.frame_interval;
        let inside = next.x >= spec.area_min[0] + margin
            && next.x <= spec.area_max[0] - margin
            && next.y >= spec.area_min[1] + margin
            && next.y <= spec.area_max[1] - margin;
        let clear = walkers
            .iter()
            .enumerate()
            .all(|(o, w)| o == k || (w.position - next).norm() >= spec.min_separation);
        if inside && clear {
            walkers[k].position = next;
        } else {
            walkers[k].velocity = -walkers[k].velocity;
        }
    }
}

fn prism_corners(spec: &SceneSpec, at: &Point2<f64>) -> [Point3<f64>; 8] {
    let r = spec.person_radius;
    let h = spec.person_height;
    core::array::from_fn(|k| {
        let dx = if k & 1 == 0 { -r } else { r };
        let dy = if k & 2 == 0 { -r } else { r };
        let z = if k & 4 == 0 { 0.0 } else { h };
        Point3::new(at.x + dx, at.y + dy, z)
    })
}

/// Tight box of the projected prism, clipped to the image; `None` when the
/// person is behind the camera, its mid-height center is out of view, or
/// the clipped box is thinner than two pixels.
fn detect(spec: &SceneSpec, cam: &CameraCalibration, at: &Point2<f64>) -> Option<BBox> {
    let corners = prism_corners(spec, at);
    let projected: Option<Vec<Point2<f64>>> = corners.iter().map(|c| cam.project(c)).collect();
    let projected = projected?;
    let center = cam.project(&Point3::new(at.x, at.y, 0.5 * spec.person_height))?;
    if !cam.image_size.contains(&center) {
        return None;
    }
    let bbox = BBox::enclosing(&projected)?.clipped(cam.image_size);
    (bbox.width() >= 2.0 && bbox.height() >= 2.0).then_some(bbox)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let calibrations = place_cameras(spec)?;
    check_overlap(spec, &calibrations)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut clutter_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    clutter_rng.set_stream(1);
    let noise = Normal::new(0.0, spec.noise_px).map_err(|_| SynthError::InvalidSpec("noise"))?;

    let mut walkers = spawn_walkers(spec, &mut rng)?;
    let mut frames = Vec::with_capacity(spec.n_frames);
    for f in 0..spec.n_frames {
        if f > 0 {
            step_walkers(spec, &mut walkers);
        }
        let frame_id = f as u32 * spec.frame_step;
        let mut detections = Vec::new();
        for cam in &calibrations {
            for (pid, w) in walkers.iter().enumerate() {
                if let Some(bbox) = detect(spec, cam, &w.position) {
                    detections.push(Detection {
                        frame_id,
                        camera_id: cam.camera_id,
                        person_id: pid as u32,
                        bbox,
                    });
                }
            }
        }

        let mut matches = BTreeMap::new();
        for (ka, cam_a) in calibrations.iter().enumerate() {
            for cam_b in &calibrations[ka + 1..] {
                let pair = pair_matches(
                    spec,
                    frame_id,
                    (cam_a, cam_b),
                    &walkers,
                    &detections,
                    (&mut rng, &mut clutter_rng),
                    &noise,
                )?;
                matches.insert((cam_a.camera_id, cam_b.camera_id), pair);
            }
        }
        frames.push(SceneFrame {
            frame_id,
            positions: walkers.iter().map(|w| w.position).collect(),
            detections,
            matches,
        });
    }
    Ok(Scene {
        spec: spec.clone(),
        calibrations,
        frames,
    })
}

fn pair_matches(
    spec: &SceneSpec,
    frame_id: u32,
    (cam_a, cam_b): (&CameraCalibration, &CameraCalibration),
    walkers: &[Walker],
    detections: &[Detection],
    (rng, clutter_rng): (&mut ChaCha8Rng, &mut ChaCha8Rng),
    noise: &Normal<f64>,
) -> Result<PairMatches, SynthError> {
    let in_cam = |cam: u32, pid: u32| detections.iter().find(|d| d.camera_id == cam && d.person_id == pid);
    let mut matches = Vec::new();
    let mut truth = Vec::new();

    for (pid, w) in walkers.iter().enumerate() {
        let pid = pid as u32;
        if in_cam(cam_a.camera_id, pid).is_none() || in_cam(cam_b.camera_id, pid).is_none() {
            continue;
        }
        let mut found = 0;
        let mut attempts = 0;
        while found < spec.keypoints_per_person && attempts < 20 * spec.keypoints_per_person {
            attempts += 1;
            let world = Point3::new(
                w.position.x + uniform(rng, (-1.0, 1.0)) * spec.person_radius,
                w.position.y + uniform(rng, (-1.0, 1.0)) * spec.person_radius,
                uniform(rng, (0.05, 0.95)) * spec.person_height,
            );
            let (Some(pa), Some(pb)) = (cam_a.project(&world), cam_b.project(&world)) else {
                continue;
            };
            if !cam_a.image_size.contains(&pa) || !cam_b.image_size.contains(&pb) {
                continue;
            }
            let jitter = |rng: &mut ChaCha8Rng| {
                if spec.noise_px > 0.0 {
                    Vector2::new(noise.sample(rng), noise.sample(rng))
                } else {
                    Vector2::zeros()
                }
            };
            let pa = pa + jitter(rng);
            let pb = pb + jitter(rng);
            let confidence = uniform(rng, spec.confidence.true_range);
            matches.push(KeypointMatch {
                pt_a: pa,
                pt_b: pb,
                confidence,
            });
            truth.push(Some(MatchTruth { person_id: pid, world }));
            found += 1;
        }
    }

    let boxes = |cam: u32| -> Vec<BBox> {
        detections
            .iter()
            .filter(|d| d.camera_id == cam)
            .map(|d| d.bbox)
            .collect()
    };
    let (boxes_a, boxes_b) = (boxes(cam_a.camera_id), boxes(cam_b.camera_id));
    let full = |size: ImageSize| BBox::new(0.0, 0.0, f64::from(size.width), f64::from(size.height));
    for _ in 0..spec.clutter_rate {
        let on_people = clutter_rng.random_bool(spec.clutter_on_people) && !boxes_a.is_empty() && !boxes_b.is_empty();
        let (ra, rb) = if on_people {
            (
                boxes_a[clutter_rng.random_range(0..boxes_a.len())],
                boxes_b[clutter_rng.random_range(0..boxes_b.len())],
            )
        } else {
            (full(cam_a.image_size), full(cam_b.image_size))
        };
        let mut sample_in = |b: BBox| {
            let x = uniform(clutter_rng, (b.xmin, b.xmax)).min(b.xmax);
            let y = uniform(clutter_rng, (b.ymin, b.ymax)).min(b.ymax);
            Point2::new(x, y)
        };
        let pa = sample_in(ra);
        let pb = sample_in(rb);
        let confidence = uniform(clutter_rng, spec.confidence.clutter_range);
        matches.push(KeypointMatch {
            pt_a: pa,
            pt_b: pb,
            confidence,
        });
        truth.push(None);
    }

    let matches = MatchSet::new(
        frame_id,
        (cam_a.camera_id, cam_a.image_size),
        (cam_b.camera_id, cam_b.image_size),
        matches,
        Provenance::Synthetic,
    )
    .map_err(|_| SynthError::InvalidSpec("generated an invalid correspondence"))?;
    Ok(PairMatches { matches, truth })
}
