use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RasterError;

/// Affine pixel-to-map transform.
///
/// ```text
/// x = origin_x + col * pixel_size_x + row * row_rotation
/// y = origin_y + col * col_rotation + row * pixel_size_y
/// ```
///
/// `(col, row)` are continuous pixel coordinates with `(0, 0)` at the outer
/// corner of the top-left pixel, so the center of pixel `(c, r)` sits at
/// `(c + 0.5, r + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    /// Usually negative (north-up rasters).
    pub pixel_size_y: f64,
    /// x shift per row.
    pub row_rotation: f64,
    /// y shift per column.
    pub col_rotation: f64,
}

impl Default for GeoTransform {
    /// Identity-like transform: map units are pixels, y grows downwards.
    fn default() -> Self {
        Self::north_up(0.0, 0.0, 1.0, 1.0)
    }
}

impl GeoTransform {
    pub fn north_up(origin_x: f64, origin_y: f64, pixel_size_x: f64, pixel_size_y: f64) -> Self {
        Self {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
            row_rotation: 0.0,
            col_rotation: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        let finite = [
            self.origin_x,
            self.origin_y,
            self.pixel_size_x,
            self.pixel_size_y,
            self.row_rotation,
            self.col_rotation,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(RasterError::InvalidGeoTransform(
                "non-finite coefficient".into(),
            ));
        }
        if self.pixel_size_x == 0.0 || self.pixel_size_y == 0.0 {
            return Err(RasterError::InvalidGeoTransform("zero pixel size".into()));
        }
        if self.determinant() == 0.0 {
            return Err(RasterError::InvalidGeoTransform(
                "singular transform".into(),
            ));
        }
        Ok(())
    }

    fn determinant(&self) -> f64 {
        self.pixel_size_x * self.pixel_size_y - self.row_rotation * self.col_rotation
    }

    pub fn pixel_to_map(&self, col: f64, row: f64) -> (f64, f64) {
        let x = self.origin_x + col * self.pixel_size_x + row * self.row_rotation;
        let y = self.origin_y + col * self.col_rotation + row * self.pixel_size_y;
        (x, y)
    }

    /// Map coordinates of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        self.pixel_to_map(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Inverse of [`pixel_to_map`](Self::pixel_to_map). Returns NaN for a singular transform.
    pub fn map_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let det = self.determinant();
        if det == 0.0 {
            return (f64::NAN, f64::NAN);
        }
        let dx = x - self.origin_x;
        let dy = y - self.origin_y;
        let col = (self.pixel_size_y * dx - self.row_rotation * dy) / det;
        let row = (self.pixel_size_x * dy - self.col_rotation * dx) / det;
        (col, row)
    }

    /// Parses the six-line world file. Coefficient order on disk is
    /// pixel_size_x, col_rotation, row_rotation, pixel_size_y, origin_x, origin_y.
    pub fn parse_world_file(text: &str) -> Result<Self, RasterError> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if lines.len() != 6 {
            return Err(RasterError::MalformedWorldFile(format!(
                "expected 6 numeric lines, found {}",
                lines.len()
            )));
        }
        let mut c = [0.0f64; 6];
        for (i, line) in lines.iter().enumerate() {
            c[i] = line.parse::<f64>().map_err(|_| {
                RasterError::MalformedWorldFile(format!("line {} is not numeric: {line:?}", i + 1))
            })?;
        }
        let gt = Self {
            pixel_size_x: c[0],
            col_rotation: c[1],
            row_rotation: c[2],
            pixel_size_y: c[3],
            origin_x: c[4],
            origin_y: c[5],
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn to_world_file(&self) -> String {
        format!(
            "{}\n{}\n{}\n{}\n{}\n{}\n",
            self.pixel_size_x,
            self.col_rotation,
            self.row_rotation,
            self.pixel_size_y,
            self.origin_x,
            self.origin_y
        )
    }

    pub fn read_world_file(path: &Path) -> Result<Self, RasterError> {
        let text = std::fs::read_to_string(path).map_err(|e| RasterError::io(path, e))?;
        Self::parse_world_file(&text)
    }
}

impl fmt::Display for GeoTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "origin=({}, {}) pixel=({}, {}) rotation=({}, {})",
            self.origin_x,
            self.origin_y,
            self.pixel_size_x,
            self.pixel_size_y,
            self.row_rotation,
            self.col_rotation
        )
    }
}

/// World-file extension conventionally paired with an image extension.
pub fn world_file_extension(image_ext: &str) -> &'static str {
    match image_ext.to_ascii_lowercase().as_str() {
        "png" => "pgw",
        "tif" | "tiff" => "tfw",
        _ => "wld",
    }
}
