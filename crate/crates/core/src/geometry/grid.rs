use alloc::vec::Vec;

use nalgebra::Point3;

use super::GeometryError;

/// Regular world grid used to induce camera-pair homographies.
///
/// Defaults describe the WILDTRACK ground grid (480 x 1440 cells of 2.5 cm
/// from (-3.0, -9.0) m) lifted 40 grid units, i.e. 1.0 m, above the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundGrid {
    pub rows: usize,
    pub cols: usize,
    /// Cell size in meters.
    pub spacing: f64,
    /// World (x, y) of cell (0, 0) in meters.
    pub origin: [f64; 2],
    /// Plane elevation in grid units.
    pub z_units: f64,
}

impl Default for GroundGrid {
    fn default() -> Self {
        Self {
            rows: 1440,
            cols: 480,
            spacing: 0.025,
            origin: [-3.0, -9.0],
            z_units: 40.0,
        }
    }
}

impl GroundGrid {
    pub fn point_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Plane elevation in meters.
    pub fn elevation(&self) -> f64 {
        self.z_units * self.spacing
    }
}

/// Grid points in row-major order: index `j * cols + i` is
/// `(origin.x + spacing * i, origin.y + spacing * j, elevation)`.
pub fn generate_ground_grid(grid: &GroundGrid) -> Result<Vec<Point3<f64>>, GeometryError> {
    if grid.rows == 0 || grid.cols == 0 {
        return Err(GeometryError::EmptyGrid);
    }
    let z = grid.elevation();
    let mut points = Vec::with_capacity(grid.point_count());
    for j in 0..grid.rows {
        let y = grid.origin[1] + grid.spacing * j as f64;
        for i in 0..grid.cols {
            points.push(Point3::new(grid.origin[0] + grid.spacing * i as f64, y, z));
        }
    }
    Ok(points)
}
