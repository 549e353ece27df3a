//! WILDTRACK-layout datasets: OpenCV XML calibrations and per-frame JSON
//! annotations.
//!
//! ```text
//! <root>/calibrations/intrinsic_zero/intr_<name>.xml
//! <root>/calibrations/extrinsic/extr_<name>.xml
//! <root>/annotations_positions/00000000.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use mca_core::detection::{BBox, Detection};
use mca_core::geometry::{scale_calibration, CameraCalibration, GeometryError, ImageSize};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Resolution of the original recordings.
pub const NATIVE_SIZE: ImageSize = ImageSize::new(1920, 1080);
/// Native to working resolution (1920x1080 to 1280x720).
pub const WORKING_SCALE: f64 = 2.0 / 3.0;
/// The dataset stores translations in centimeters.
pub const CENTIMETERS: f64 = 0.01;

const CAMERA_NAMES: [&str; 7] = ["CVLab1", "CVLab2", "CVLab3", "CVLab4", "IDIAP1", "IDIAP2", "IDIAP3"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed XML: {message}", path.display())]
    Xml { path: PathBuf, message: String },
    #[error("{}: field `{field}`: {message}", path.display())]
    Field {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{}: invalid calibration: {source}", path.display())]
    Calibration {
        path: PathBuf,
        #[source]
        source: GeometryError,
    },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: record {index}: {message}", path.display())]
    Record {
        path: PathBuf,
        index: usize,
        message: String,
    },
    #[error("{}: file name is not a frame number", path.display())]
    FrameName { path: PathBuf },
    #[error("scale must be positive, got {0}")]
    Scale(f64),
}

type Result<T> = std::result::Result<T, DatasetError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Dataset name of a camera: `CVLab1`..`IDIAP3` for 1..7, `C<id>` otherwise.
pub fn camera_name(camera_id: u32) -> String {
    match camera_id {
        1..=7 => CAMERA_NAMES[camera_id as usize - 1].to_string(),
        _ => format!("C{camera_id}"),
    }
}

// ---------------------------------------------------------------------------
// calibrations

fn field_err(path: &Path, field: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Field {
        path: path.to_path_buf(),
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_numbers(path: &Path, field: &str, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| field_err(path, field, format!("`{tok}` is not a number")))
        })
        .collect()
}

/// Reads a named numeric field, either a plain list or an `opencv-matrix`
/// node. Returns the values and, for matrix nodes, the declared shape.
type Field = (Vec<f64>, Option<(usize, usize)>);

fn read_field(path: &Path, doc: &roxmltree::Document, field: &str) -> Result<Field> {
    let node = doc
        .descendants()
        .find(|n| n.has_tag_name(field))
        .ok_or_else(|| field_err(path, field, "missing"))?;
    let child = |name: &str| node.children().find(|n| n.has_tag_name(name));
    match child("data") {
        Some(data) => {
            let dim = |name: &str| -> Result<usize> {
                let text = child(name)
                    .and_then(|n| n.text())
                    .ok_or_else(|| field_err(path, field, format!("missing `{name}`")))?;
                text.trim()
                    .parse()
                    .map_err(|_| field_err(path, field, format!("bad `{name}`")))
            };
            let shape = (dim("rows")?, dim("cols")?);
            let values = parse_numbers(path, field, data.text().unwrap_or(""))?;
            if values.len() != shape.0 * shape.1 {
                return Err(field_err(
                    path,
                    field,
                    format!("{} values for a {}x{} matrix", values.len(), shape.0, shape.1),
                ));
            }
            Ok((values, Some(shape)))
        }
        None => Ok((parse_numbers(path, field, node.text().unwrap_or(""))?, None)),
    }
}

fn read_xml(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn parse_xml<'a>(path: &Path, text: &'a str) -> Result<roxmltree::Document<'a>> {
    roxmltree::Document::parse(text).map_err(|e| DatasetError::Xml {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_vec3(path: &Path, doc: &roxmltree::Document, field: &str) -> Result<Vector3<f64>> {
    let (v, _) = read_field(path, doc, field)?;
    if v.len() != 3 {
        return Err(field_err(path, field, format!("expected 3 values, found {}", v.len())));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

/// Loads one camera from its intrinsic and extrinsic files.
///
/// `image_size` is the resolution the intrinsics refer to, and
/// `translation_to_meters` converts the stored translation (0.01 for the
/// dataset's centimeters). Distortion coefficients are ignored.
pub fn load_calibration(
    intrinsic_path: &Path,
    extrinsic_path: &Path,
    camera_id: u32,
    image_size: ImageSize,
    translation_to_meters: f64,
) -> Result<CameraCalibration> {
    let text = read_xml(intrinsic_path)?;
    let doc = parse_xml(intrinsic_path, &text)?;
    let (k, shape) = read_field(intrinsic_path, &doc, "camera_matrix")?;
    if shape.unwrap_or((0, 0)) != (3, 3) && !(shape.is_none() && k.len() == 9) {
        return Err(field_err(intrinsic_path, "camera_matrix", "not a 3x3 matrix"));
    }
    let intrinsics = Matrix3::from_row_slice(&k);

    let text = read_xml(extrinsic_path)?;
    let doc = parse_xml(extrinsic_path, &text)?;
    let rvec = read_vec3(extrinsic_path, &doc, "rvec")?;
    let tvec = read_vec3(extrinsic_path, &doc, "tvec")? * translation_to_meters;

    CameraCalibration::new(camera_id, intrinsics, rvec, tvec, image_size).map_err(|source| DatasetError::Calibration {
        path: intrinsic_path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes a calibration in the same schema `load_calibration` reads.
/// Translations are divided by `translation_to_meters`.
pub fn write_calibration(
    calib: &CameraCalibration,
    intrinsic_path: &Path,
    extrinsic_path: &Path,
    translation_to_meters: f64,
) -> Result<()> {
    let k = calib.intrinsics;
    let row_major = (0..3).flat_map(|r| (0..3).map(move |c| k[(r, c)]));
    let mut intr = String::from("<?xml version=\"1.0\"?>\n<opencv_storage>\n");
    let _ = write!(
        intr,
        "<camera_matrix type_id=\"opencv-matrix\">\n  <rows>3</rows>\n  <cols>3</cols>\n  <dt>d</dt>\n  <data>\n    {}</data></camera_matrix>\n",
        join(row_major)
    );
    intr.push_str(
        "<distortion_coefficients type_id=\"opencv-matrix\">\n  <rows>1</rows>\n  <cols>5</cols>\n  <dt>d</dt>\n  <data>\n    0. 0. 0. 0. 0.</data></distortion_coefficients>\n</opencv_storage>\n",
    );
    write_file(intrinsic_path, &intr)?;

    let t = calib.tvec / translation_to_meters;
    let extr = format!(
        "<?xml version=\"1.0\"?>\n<opencv_storage>\n<rvec>{}</rvec>\n<tvec>{}</tvec>\n</opencv_storage>\n",
        join(calib.rvec.iter().copied()),
        join(t.iter().copied())
    );
    write_file(extrinsic_path, &extr)
}

// ---------------------------------------------------------------------------
// annotations

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PersonRecord {
    #[serde(rename = "personID")]
    person_id: u32,
    #[serde(rename = "positionID", default = "unknown_position")]
    position_id: i64,
    views: Vec<ViewRecord>,
}

fn unknown_position() -> i64 {
    -1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ViewRecord {
    #[serde(rename = "viewNum")]
    view_num: u32,
    xmax: f64,
    xmin: f64,
    ymax: f64,
    ymin: f64,
}

impl ViewRecord {
    /// The dataset marks a person absent from a view with -1 coordinates;
    /// any box with negative extent is treated the same way.
    fn is_hidden(&self) -> bool {
        let all_negative = [self.xmin, self.ymin, self.xmax, self.ymax].iter().all(|&v| v < 0.0);
        all_negative || self.xmax < self.xmin || self.ymax < self.ymin
    }

    fn hidden(view_num: u32) -> Self {
        Self {
            view_num,
            xmax: -1.0,
            xmin: -1.0,
            ymax: -1.0,
            ymin: -1.0,
        }
    }
}

/// Parses one annotation file. Boxes are scaled by `scale` and clipped to
/// `bounds`; views marked hidden are skipped, boxes that collapse after
/// clipping and repeated (person, camera) views are dropped with a warning.
/// Camera ids are the 0-based view numbers plus one.
pub fn load_annotations(path: &Path, frame_id: u32, scale: f64, bounds: ImageSize) -> Result<Vec<Detection>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DatasetError::Scale(scale));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_annotations(path, &text, frame_id, scale, bounds)
}

fn parse_annotations(path: &Path, text: &str, frame_id: u32, scale: f64, bounds: ImageSize) -> Result<Vec<Detection>> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (index, value) in raw.into_iter().enumerate() {
        let record: PersonRecord = serde_json::from_value(value).map_err(|e| DatasetError::Record {
            path: path.to_path_buf(),
            index,
            message: e.to_string(),
        })?;
        for view in &record.views {
            if view.is_hidden() {
                continue;
            }
            let camera_id = view.view_num + 1;
            let bbox = BBox::new(view.xmin, view.ymin, view.xmax, view.ymax)
                .scaled(scale)
                .clipped(bounds);
            if !bbox.is_valid() {
                warn!(
                    "{}: record {index}: person {} degenerate in camera {camera_id} after clipping, dropped",
                    path.display(),
                    record.person_id
                );
                continue;
            }
            if !seen.insert((camera_id, record.person_id)) {
                warn!(
                    "{}: record {index}: person {} repeated in camera {camera_id}, dropped",
                    path.display(),
                    record.person_id
                );
                continue;
            }
            out.push(Detection {
                frame_id,
                camera_id,
                person_id: record.person_id,
                bbox,
            });
        }
    }
    Ok(out)
}

/// Writes detections of one frame as person records with one view per
/// camera `1..=n_cameras`; boxes are divided by `scale` (so writing with the
/// loader's scale round-trips) and absent views are written as hidden.
pub fn write_annotations(path: &Path, detections: &[Detection], n_cameras: u32, scale: f64) -> Result<()> {
    let mut people: BTreeMap<u32, Vec<ViewRecord>> = BTreeMap::new();
    for d in detections {
        let views = people
            .entry(d.person_id)
            .or_insert_with(|| (0..n_cameras).map(ViewRecord::hidden).collect());
        let b = d.bbox.scaled(1.0 / scale);
        if let Some(v) = views.get_mut(d.camera_id as usize - 1) {
            *v = ViewRecord {
                view_num: d.camera_id - 1,
                xmax: b.xmax,
                xmin: b.xmin,
                ymax: b.ymax,
                ymin: b.ymin,
            };
        }
    }
    let records: Vec<PersonRecord> = people
        .into_iter()
        .map(|(person_id, views)| PersonRecord {
            person_id,
            position_id: -1,
            views,
        })
        .collect();
    let text = serde_json::to_string_pretty(&records).expect("annotation records serialize");
    write_file(path, &text)
}

pub fn annotation_file_name(frame_id: u32) -> String {
    format!("{frame_id:08}.json")
}

/// Paths of a dataset in the WILDTRACK directory layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub calibrations: PathBuf,
    pub annotations: PathBuf,
}

impl DatasetLayout {
    pub fn from_root(root: &Path) -> Self {
        Self {
            calibrations: root.join("calibrations"),
            annotations: root.join("annotations_positions"),
        }
    }

    pub fn intrinsic_path(&self, camera_id: u32) -> PathBuf {
        self.calibrations
            .join("intrinsic_zero")
            .join(format!("intr_{}.xml", camera_name(camera_id)))
    }

    pub fn extrinsic_path(&self, camera_id: u32) -> PathBuf {
        self.calibrations
            .join("extrinsic")
            .join(format!("extr_{}.xml", camera_name(camera_id)))
    }

    pub fn annotation_path(&self, frame_id: u32) -> PathBuf {
        self.annotations.join(annotation_file_name(frame_id))
    }

    /// Loads a camera at its native resolution and rescales it by `scale`.
    pub fn load_calibration(
        &self,
        camera_id: u32,
        native_size: ImageSize,
        translation_to_meters: f64,
        scale: f64,
    ) -> Result<CameraCalibration> {
        let intr = self.intrinsic_path(camera_id);
        let calib = load_calibration(
            &intr,
            &self.extrinsic_path(camera_id),
            camera_id,
            native_size,
            translation_to_meters,
        )?;
        scale_calibration(&calib, scale).map_err(|source| DatasetError::Calibration { path: intr, source })
    }

    /// Annotation files sorted by frame id, which is the file stem.
    pub fn annotation_files(&self) -> Result<Vec<(u32, PathBuf)>> {
        let dir = &self.annotations;
        let mut files = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let frame_id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u32>().ok())
                .ok_or_else(|| DatasetError::FrameName { path: path.clone() })?;
            files.push((frame_id, path));
        }
        files.sort();
        Ok(files)
    }

    /// Loads every annotation file whose frame id is in `frames`.
    pub fn load_all_annotations(
        &self,
        frames: std::ops::RangeInclusive<u32>,
        scale: f64,
        bounds: ImageSize,
    ) -> Result<BTreeMap<u32, Vec<Detection>>> {
        self.annotation_files()?
            .into_par_iter()
            .filter(|(f, _)| frames.contains(f))
            .map(|(f, path)| load_annotations(&path, f, scale, bounds).map(|d| (f, d)))
            .collect()
    }
}
