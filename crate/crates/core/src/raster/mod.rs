//! Raster, mask and georeferencing types shared by every pipeline stage,
//! plus scene and ground-truth I/O.

mod geo;
mod groundtruth;
mod io;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use geo::{world_file_extension, GeoTransform};
pub use groundtruth::{
    point_in_ring, shoelace_area, ClassLabel, GroundTruthPolygon, GroundTruthSet,
};
pub use io::{
    load_patch_png, load_scene, load_scene_with_sidecar, save_binary_mask_png, save_gray_png,
    save_label_png16, save_patch_png, save_scene, sidecar_path,
};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: expected an 8-bit 3-channel raster, found {found}")]
    UnsupportedPixelFormat { path: PathBuf, found: String },
    #[error("malformed world file: {0}")]
    MalformedWorldFile(String),
    #[error("invalid geotransform: {0}")]
    InvalidGeoTransform(String),
    #[error("invalid raster dimensions {width}x{height} for buffer of {len} bytes")]
    InvalidDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("malformed ground truth: {0}")]
    MalformedGroundTruth(String),
    #[error("degenerate polygon {id:?}: {reason}")]
    DegeneratePolygon { id: String, reason: String },
    #[error("unclosed ring in polygon {0:?}")]
    UnclosedRing(String),
    #[error("unknown class label {0:?}")]
    UnknownClass(String),
}

impl RasterError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RasterError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Interleaved 8-bit RGB pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// An image patch fed to the patch classifier (nominally 80×80).
pub type Patch = RgbImage;

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(RasterError::InvalidDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies the `w`×`h` block with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> RgbImage {
        assert!(
            x0 + w <= self.width && y0 + h <= self.height,
            "crop out of bounds"
        );
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        RgbImage {
            width: w,
            height: h,
            data,
        }
    }
}

/// A georeferenced RGB scene, the unit of detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub image: RgbImage,
    pub geotransform: GeoTransform,
    /// Coordinate reference system label. Carried as metadata only.
    pub crs: Option<String>,
}

impl Scene {
    pub fn new(id: impl Into<String>, image: RgbImage, geotransform: GeoTransform) -> Self {
        Self {
            id: id.into(),
            image,
            geotransform,
            crs: None,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.image.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.image.height
    }
}

/// Single-band 8-bit raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Self {
        assert_eq!(values.len(), width * height, "gray raster size mismatch");
        Self {
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }
}

/// One boolean per pixel, `true` = foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask size mismatch");
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Half-open pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    #[inline]
    pub fn right(&self) -> usize {
        self.x + self.width
    }

    #[inline]
    pub fn bottom(&self) -> usize {
        self.y + self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_dimensions_validated() {
        assert!(RgbImage::new(2, 2, vec![0; 12]).is_ok());
        assert!(RgbImage::new(2, 2, vec![0; 11]).is_err());
        assert!(RgbImage::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn crop_copies_block() {
        let img = RgbImage::from_fn(4, 3, |x, y| [x as u8, y as u8, 7]);
        let c = img.crop(1, 1, 2, 2);
        assert_eq!(c.pixel(0, 0), [1, 1, 7]);
        assert_eq!(c.pixel(1, 1), [2, 2, 7]);
    }
}
