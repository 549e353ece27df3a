use alloc::vec::Vec;

use nalgebra::{Matrix3, Point2, Point3, Vector3};

use super::GeometryError;

/// Points at or behind this camera-frame depth are not projected.
pub const MIN_DEPTH: f64 = 1e-9;

/// Below this rotation angle the Rodrigues coefficients use their Taylor series.
const SMALL_ANGLE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    /// Half-open pixel bounds: `0 <= x < width`, `0 <= y < height`.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < f64::from(self.width) && p.y < f64::from(self.height)
    }

    pub fn corners(&self) -> [Point2<f64>; 4] {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        [
            Point2::new(0.0, 0.0),
            Point2::new(w, 0.0),
            Point2::new(w, h),
            Point2::new(0.0, h),
        ]
    }

    /// Scales both dimensions and rounds to the nearest pixel.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            width: libm::round(f64::from(self.width) * s) as u32,
            height: libm::round(f64::from(self.height) * s) as u32,
        }
    }
}

/// Intrinsics plus Rodrigues extrinsics of one undistorted pinhole camera.
///
/// World-to-camera: `X_c = R(rvec) * X_w + tvec`, pixel `~ K * X_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub camera_id: u32,
    pub intrinsics: Matrix3<f64>,
    pub rvec: Vector3<f64>,
    pub tvec: Vector3<f64>,
    pub image_size: ImageSize,
}

impl CameraCalibration {
    pub fn new(
        camera_id: u32,
        intrinsics: Matrix3<f64>,
        rvec: Vector3<f64>,
        tvec: Vector3<f64>,
        image_size: ImageSize,
    ) -> Result<Self, GeometryError> {
        let calib = Self {
            camera_id,
            intrinsics,
            rvec,
            tvec,
            image_size,
        };
        calib.validate()?;
        Ok(calib)
    }

    /// Builds a camera at `eye` looking at `target`, with world `up` mapped
    /// to image up (camera y points down the image).
    pub fn look_at(
        camera_id: u32,
        intrinsics: Matrix3<f64>,
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        image_size: ImageSize,
    ) -> Result<Self, GeometryError> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or(GeometryError::InvalidCalibration("eye and target coincide"))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or(GeometryError::InvalidCalibration("view direction parallel to up"))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let tvec = -(rotation * eye.coords);
        Self::new(camera_id, intrinsics, rotation_to_rvec(&rotation), tvec, image_size)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let k = &self.intrinsics;
        if k.iter().any(|v| !v.is_finite())
            || self.rvec.iter().any(|v| !v.is_finite())
            || self.tvec.iter().any(|v| !v.is_finite())
        {
            return Err(GeometryError::InvalidCalibration("non-finite entry"));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(GeometryError::InvalidCalibration(
                "camera matrix is not upper-triangular",
            ));
        }
        if k[(2, 2)] != 1.0 {
            return Err(GeometryError::InvalidCalibration("camera matrix K[2][2] != 1"));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(GeometryError::InvalidCalibration("non-positive focal length"));
        }
        if self.image_size.width == 0 || self.image_size.height == 0 {
            return Err(GeometryError::InvalidCalibration("empty image size"));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rodrigues(&self.rvec)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation().transpose() * self.tvec))
    }

    /// Projects one world point; `None` when it is not in front of the camera.
    pub fn project(&self, point: &Point3<f64>) -> Option<Point2<f64>> {
        project_with(&self.intrinsics, &self.rotation(), &self.tvec, point)
    }
}

fn project_with(k: &Matrix3<f64>, r: &Matrix3<f64>, t: &Vector3<f64>, point: &Point3<f64>) -> Option<Point2<f64>> {
    let cam = r * point.coords + t;
    if cam.z <= MIN_DEPTH {
        return None;
    }
    let p = k * cam;
    Some(Point2::new(p.x / p.z, p.y / p.z))
}

/// Projects world points into `calib`'s image.
///
/// The output is index-aligned with `points`; entries for points at
/// non-positive depth are `None` so callers can keep pairings across cameras.
pub fn project_points(points: &[Point3<f64>], calib: &CameraCalibration) -> Vec<Option<Point2<f64>>> {
    let r = calib.rotation();
    points
        .iter()
        .map(|p| project_with(&calib.intrinsics, &r, &calib.tvec, p))
        .collect()
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation vector (axis * angle) to rotation matrix.
pub fn rodrigues(rvec: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = rvec.norm_squared();
    let theta = libm::sqrt(theta2);
    // R = I + a [r]x + b [r]x^2 with a = sin(t)/t, b = (1 - cos(t))/t^2
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (libm::sin(theta) / theta, (1.0 - libm::cos(theta)) / theta2)
    };
    let k = skew(rvec);
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation matrix to rotation vector with angle in `[0, pi]`.
pub fn rotation_to_rvec(r: &Matrix3<f64>) -> Vector3<f64> {
    // 2 sin(t) * axis
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let sin_t = 0.5 * v.norm();
    let cos_t = (0.5 * (r.trace() - 1.0)).clamp(-1.0, 1.0);
    let theta = libm::atan2(sin_t, cos_t);

    if theta < SMALL_ANGLE {
        // t / sin(t) ~ 1 + t^2/6
        return v * (0.5 * (1.0 + theta * theta / 6.0));
    }
    if cos_t > -0.5 {
        return v * (0.5 * theta / sin_t);
    }

    // Near a half turn the skew part vanishes; read the axis from the
    // symmetric part: (R + R^T)/2 = cos(t) I + (1 - cos(t)) a a^T.
    let sym = (r + r.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos_t) / (1.0 - cos_t);
    let diag = outer.diagonal();
    let pivot = diag.imax();
    let mut axis = outer.column(pivot).into_owned() / libm::sqrt(diag[pivot].max(0.0));
    axis.normalize_mut();
    if axis.dot(&v) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Rescales intrinsics and image size for frames resized by `s`.
/// Extrinsics are unchanged.
pub fn scale_calibration(calib: &CameraCalibration, s: f64) -> Result<CameraCalibration, GeometryError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(GeometryError::NonPositiveScale(s));
    }
    let mut scaled = calib.clone();
    for c in 0..3 {
        scaled.intrinsics[(0, c)] *= s;
        scaled.intrinsics[(1, c)] *= s;
    }
    scaled.image_size = calib.image_size.scaled(s);
    Ok(scaled)
}
