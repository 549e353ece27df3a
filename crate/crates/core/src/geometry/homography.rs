use alloc::vec::Vec;

use nalgebra::{Matrix3, Point2, SMatrix, SVector, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::camera::{project_points, CameraCalibration};
use super::grid::{generate_ground_grid, GroundGrid};
use super::GeometryError;

/// Third homogeneous coordinate below which a point is treated as at infinity.
const INFINITY_EPS: f64 = 1e-12;

/// Relative determinant below which a homography is considered singular.
const SINGULAR_EPS: f64 = 1e-14;

/// 3x3 projective map from `src_camera`'s image to `dst_camera`'s image.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    pub matrix: Matrix3<f64>,
    pub inlier_count: usize,
    pub src_camera: u32,
    pub dst_camera: u32,
}

impl Homography {
    /// Wraps `matrix`, rejecting singular input and rescaling so that
    /// `H[2][2] = 1` whenever that entry is not (numerically) zero.
    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self, GeometryError> {
        let matrix = canonical_scale(matrix).ok_or(GeometryError::SingularHomography)?;
        Ok(Self {
            matrix,
            inlier_count: 0,
            src_camera: 0,
            dst_camera: 0,
        })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
            inlier_count: 0,
            src_camera: 0,
            dst_camera: 0,
        }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        let mut h = Self::identity();
        h.matrix[(0, 2)] = dx;
        h.matrix[(1, 2)] = dy;
        h
    }

    pub fn with_cameras(mut self, src: u32, dst: u32) -> Self {
        self.src_camera = src;
        self.dst_camera = dst;
        self
    }

    /// Reverse map (dst -> src). Keeps the inlier count.
    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self.matrix.try_inverse().ok_or(GeometryError::SingularHomography)?;
        let mut h = Self::from_matrix(inv)?;
        h.inlier_count = self.inlier_count;
        h.src_camera = self.dst_camera;
        h.dst_camera = self.src_camera;
        Ok(h)
    }

    pub fn project(&self, p: &Point2<f64>) -> Result<Point2<f64>, GeometryError> {
        project_point_h(self, p)
    }
}

fn canonical_scale(m: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let norm = m.norm();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    let m = m / norm;
    if m.determinant().abs() <= SINGULAR_EPS {
        return None;
    }
    if m[(2, 2)].abs() > 1e-12 {
        Some(m / m[(2, 2)])
    } else {
        Some(m)
    }
}

/// Homogeneous multiply followed by the perspective divide.
pub fn project_point_h(h: &Homography, p: &Point2<f64>) -> Result<Point2<f64>, GeometryError> {
    apply(&h.matrix, p).ok_or(GeometryError::PointAtInfinity)
}

fn apply(m: &Matrix3<f64>, p: &Point2<f64>) -> Option<Point2<f64>> {
    let q = m * Vector3::new(p.x, p.y, 1.0);
    if q.z.abs() < INFINITY_EPS || !q.z.is_finite() {
        return None;
    }
    Some(Point2::new(q.x / q.z, q.y / q.z))
}

/// Root mean square of the forward (`H src` vs `dst`) and backward
/// (`H^-1 dst` vs `src`) reprojection distances, in pixels.
/// Infinite when either direction maps to infinity.
pub fn symmetric_transfer_error(h: &Matrix3<f64>, h_inv: &Matrix3<f64>, src: &Point2<f64>, dst: &Point2<f64>) -> f64 {
    match (apply(h, src), apply(h_inv, dst)) {
        (Some(fwd), Some(bwd)) => libm::sqrt(0.5 * ((fwd - dst).norm_squared() + (bwd - src).norm_squared())),
        _ => f64::INFINITY,
    }
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizing_transform<'a>(points: impl Iterator<Item = &'a Point2<f64>> + Clone) -> Option<Matrix3<f64>> {
    let mut n = 0usize;
    let (mut sx, mut sy) = (0.0, 0.0);
    for p in points.clone() {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let (cx, cy) = (sx / n as f64, sy / n as f64);
    let mean_dist = points.map(|p| libm::hypot(p.x - cx, p.y - cy)).sum::<f64>() / n as f64;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return None;
    }
    let s = core::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Normalized DLT over all given correspondences (least squares for more
/// than four). Fails on degenerate (e.g. collinear) configurations.
pub fn fit_homography_dlt(src: &[Point2<f64>], dst: &[Point2<f64>]) -> Result<Matrix3<f64>, GeometryError> {
    check_lengths(src, dst)?;
    fit_indexed(src, dst, 0..src.len()).ok_or(GeometryError::EstimationFailed)
}

fn fit_indexed(
    src: &[Point2<f64>],
    dst: &[Point2<f64>],
    idx: impl Iterator<Item = usize> + Clone,
) -> Option<Matrix3<f64>> {
    let t_src = normalizing_transform(idx.clone().map(|i| &src[i]))?;
    let t_dst = normalizing_transform(idx.clone().map(|i| &dst[i]))?;

    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for i in idx {
        let p = t_src * Vector3::new(src[i].x, src[i].y, 1.0);
        let q = t_dst * Vector3::new(dst[i].x, dst[i].y, 1.0);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r1 = SVector::<f64, 9>::from([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        let r2 = SVector::<f64, 9>::from([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
        ata.syger(1.0, &r1, &r1, 1.0);
        ata.syger(1.0, &r2, &r2, 1.0);
    }
    ata.fill_upper_triangle_with_lower_triangle();

    let eig = SymmetricEigen::new(ata);
    let mut order = [0usize; 9];
    for (k, o) in order.iter_mut().enumerate() {
        *o = k;
    }
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // A unique solution needs a one-dimensional null space.
    let (smallest, next) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let largest = eig.eigenvalues[order[8]];
    if !(next > 1e-12 * largest) || smallest > 0.5 * next {
        return None;
    }
    let h = eig.eigenvectors.column(order[0]);
    let h_norm = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst.try_inverse()?;
    canonical_scale(t_dst_inv * h_norm * t_src)
}

fn check_lengths(src: &[Point2<f64>], dst: &[Point2<f64>]) -> Result<(), GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 4 {
        return Err(GeometryError::NotEnoughPoints(src.len()));
    }
    Ok(())
}

/// True when some three of the four points are (nearly) collinear.
fn has_collinear_triple(pts: [&Point2<f64>; 4]) -> bool {
    let mut scale = 0.0f64;
    for a in 0..4 {
        for b in a + 1..4 {
            scale = scale.max((pts[a] - pts[b]).norm_squared());
        }
    }
    if scale == 0.0 {
        return true;
    }
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().any(|&[a, b, c]| {
        let (u, v) = (pts[b] - pts[a], pts[c] - pts[a]);
        (u.x * v.y - u.y * v.x).abs() <= 1e-9 * scale
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Symmetric transfer error tolerance, pixels.
    pub threshold_px: f64,
    pub max_iters: usize,
    /// Probability of drawing at least one all-inlier sample.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold_px: 10.0,
            max_iters: 2000,
            confidence: 0.999,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomographyFit {
    pub homography: Homography,
    pub inliers: Vec<bool>,
}

/// RANSAC over 4-point DLT samples, then a normalized DLT refit on the
/// consensus set. Deterministic for a given `params.seed`.
pub fn estimate_homography_ransac(
    src: &[Point2<f64>],
    dst: &[Point2<f64>],
    params: &RansacParams,
) -> Result<HomographyFit, GeometryError> {
    check_lengths(src, dst)?;
    let n = src.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut best: Option<(Matrix3<f64>, usize)> = None;
    let mut required = params.max_iters;
    let mut iter = 0;
    while iter < required.min(params.max_iters) {
        iter += 1;
        let sample = rand::seq::index::sample(&mut rng, n, 4);
        let s = [sample.index(0), sample.index(1), sample.index(2), sample.index(3)];
        if has_collinear_triple(s.map(|i| &src[i])) || has_collinear_triple(s.map(|i| &dst[i])) {
            continue;
        }
        let Some(h) = fit_indexed(src, dst, s.into_iter()) else {
            continue;
        };
        let Some(h_inv) = h.try_inverse() else {
            continue;
        };
        let count = count_inliers(&h, &h_inv, src, dst, params.threshold_px);
        if best.as_ref().is_none_or(|&(_, c)| count > c) {
            best = Some((h, count));
            required = adaptive_iterations(count, n, params.confidence).max(1);
        }
    }

    let (mut h, _) = best.ok_or(GeometryError::EstimationFailed)?;
    let mut inliers = inlier_mask(&h, src, dst, params.threshold_px);
    let mut count = inliers.iter().filter(|&&b| b).count();
    if count < 4 {
        return Err(GeometryError::EstimationFailed);
    }
    // Refit on the consensus set until it stops growing.
    for _ in 0..5 {
        let idx = inliers.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i);
        let Some(refit) = fit_indexed(src, dst, idx) else {
            break;
        };
        let refit_mask = inlier_mask(&refit, src, dst, params.threshold_px);
        let refit_count = refit_mask.iter().filter(|&&b| b).count();
        if refit_count < count {
            break;
        }
        let grew = refit_count > count;
        h = refit;
        inliers = refit_mask;
        count = refit_count;
        if !grew {
            break;
        }
    }

    let mut homography = Homography::from_matrix(h)?;
    homography.inlier_count = count;
    Ok(HomographyFit { homography, inliers })
}

fn count_inliers(
    h: &Matrix3<f64>,
    h_inv: &Matrix3<f64>,
    src: &[Point2<f64>],
    dst: &[Point2<f64>],
    threshold: f64,
) -> usize {
    src.iter()
        .zip(dst)
        .filter(|(s, d)| symmetric_transfer_error(h, h_inv, s, d) <= threshold)
        .count()
}

fn inlier_mask(h: &Matrix3<f64>, src: &[Point2<f64>], dst: &[Point2<f64>], threshold: f64) -> Vec<bool> {
    match h.try_inverse() {
        Some(h_inv) => src
            .iter()
            .zip(dst)
            .map(|(s, d)| symmetric_transfer_error(h, &h_inv, s, d) <= threshold)
            .collect(),
        None => alloc::vec![false; src.len()],
    }
}

fn adaptive_iterations(inliers: usize, total: usize, confidence: f64) -> usize {
    let w = inliers as f64 / total as f64;
    let all_inlier = w * w * w * w;
    if all_inlier >= 1.0 {
        return 0;
    }
    if all_inlier <= 0.0 {
        return usize::MAX;
    }
    let k = libm::log(1.0 - confidence) / libm::log(1.0 - all_inlier);
    if k.is_finite() {
        libm::ceil(k) as usize
    } else {
        usize::MAX
    }
}

/// Closed-form homography induced by the world plane `Z = elevation`
/// between two calibrated cameras: `H = P_dst * P_src^-1` where
/// `P = K [r1 r2 (elevation * r3 + t)]` maps plane (X, Y, 1) to pixels.
pub fn plane_induced_homography(
    src: &CameraCalibration,
    dst: &CameraCalibration,
    elevation: f64,
) -> Result<Homography, GeometryError> {
    let plane_to_image = |c: &CameraCalibration| {
        let r = c.rotation();
        let third = r.column(2) * elevation + c.tvec;
        c.intrinsics * Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), third])
    };
    let p_src_inv = plane_to_image(src)
        .try_inverse()
        .ok_or(GeometryError::SingularHomography)?;
    Ok(Homography::from_matrix(plane_to_image(dst) * p_src_inv)?.with_cameras(src.camera_id, dst.camera_id))
}

/// Projects the grid through both cameras, keeps points in front of and
/// strictly inside both images, and runs RANSAC on those pixel pairs.
pub fn compute_pair_homography(
    calib_a: &CameraCalibration,
    calib_b: &CameraCalibration,
    grid: &GroundGrid,
    params: &RansacParams,
) -> Result<Homography, GeometryError> {
    let world = generate_ground_grid(grid)?;
    let proj_a = project_points(&world, calib_a);
    let proj_b = project_points(&world, calib_b);
    let (src, dst): (Vec<_>, Vec<_>) = proj_a
        .into_iter()
        .zip(proj_b)
        .filter_map(|pair| match pair {
            (Some(a), Some(b)) if calib_a.image_size.contains(&a) && calib_b.image_size.contains(&b) => Some((a, b)),
            _ => None,
        })
        .unzip();
    if src.len() < 4 {
        return Err(GeometryError::NoOverlap(src.len()));
    }
    let fit = estimate_homography_ransac(&src, &dst, params)?;
    Ok(fit.homography.with_cameras(calib_a.camera_id, calib_b.camera_id))
}
