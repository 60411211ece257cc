use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use super::{BinaryMask, GeoTransform, GrayRaster, RasterError, RgbImage, Scene};

fn decode_rgb8(path: &Path) -> Result<RgbImage, RasterError> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| RasterError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| RasterError::io(path, e))?;
    let decoded = reader.decode().map_err(|e| RasterError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    match decoded {
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            RgbImage::new(w as usize, h as usize, buf.into_raw())
        }
        other => Err(RasterError::UnsupportedPixelFormat {
            path: path.to_path_buf(),
            found: format!("{:?}", other.color()),
        }),
    }
}

/// Loads an 8-bit RGB PNG or TIFF and its world file.
pub fn load_scene(image_path: &Path, worldfile_path: &Path) -> Result<Scene, RasterError> {
    let image = decode_rgb8(image_path)?;
    let geotransform = GeoTransform::read_world_file(worldfile_path)?;
    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Scene::new(id, image, geotransform))
}

/// Locates the world file next to `image_path` (`.pgw`, `.tfw` or `.wld`).
pub fn sidecar_path(image_path: &Path) -> Option<PathBuf> {
    let ext = image_path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("");
    let preferred = super::world_file_extension(ext);
    [preferred, "pgw", "tfw", "wld"]
        .iter()
        .map(|e| image_path.with_extension(e))
        .find(|p| p.is_file())
}

pub fn load_scene_with_sidecar(image_path: &Path) -> Result<Scene, RasterError> {
    let wf = sidecar_path(image_path).ok_or_else(|| {
        RasterError::MalformedWorldFile(format!(
            "no world file found next to {}",
            image_path.display()
        ))
    })?;
    load_scene(image_path, &wf)
}

fn write_image(path: &Path, img: DynamicImage) -> Result<(), RasterError> {
    let format = ImageFormat::from_path(path).unwrap_or(ImageFormat::Png);
    img.save_with_format(path, format)
        .map_err(|e| RasterError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Writes the scene as an image plus world-file sidecar. Returns the sidecar path.
pub fn save_scene(scene: &Scene, image_path: &Path) -> Result<PathBuf, RasterError> {
    save_patch_png(&scene.image, image_path)?;
    let ext = image_path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("png");
    let wf = image_path.with_extension(super::world_file_extension(ext));
    std::fs::write(&wf, scene.geotransform.to_world_file()).map_err(|e| RasterError::io(&wf, e))?;
    Ok(wf)
}

pub fn save_patch_png(img: &RgbImage, path: &Path) -> Result<(), RasterError> {
    let buf =
        image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
            .expect("buffer length checked at construction");
    write_image(path, DynamicImage::ImageRgb8(buf))
}

pub fn load_patch_png(path: &Path) -> Result<RgbImage, RasterError> {
    decode_rgb8(path)
}

pub fn save_gray_png(gray: &GrayRaster, path: &Path) -> Result<(), RasterError> {
    let buf =
        image::GrayImage::from_raw(gray.width as u32, gray.height as u32, gray.values.clone())
            .expect("gray raster size is checked at construction");
    write_image(path, DynamicImage::ImageLuma8(buf))
}

/// Foreground as 255, background as 0.
pub fn save_binary_mask_png(mask: &BinaryMask, path: &Path) -> Result<(), RasterError> {
    let values = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    save_gray_png(&GrayRaster::new(mask.width, mask.height, values), path)
}

/// 16-bit label raster; labels above 65535 saturate.
pub fn save_label_png16(
    width: usize,
    height: usize,
    labels: &[u32],
    path: &Path,
) -> Result<(), RasterError> {
    assert_eq!(labels.len(), width * height);
    let raw: Vec<u16> = labels
        .iter()
        .map(|&l| l.min(u16::MAX as u32) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, raw).expect("label raster size");
    write_image(path, DynamicImage::ImageLuma16(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_png_with_world_file() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("white.png");
        save_patch_png(&RgbImage::filled(4, 4, [255, 255, 255]), &img).unwrap();
        let wf = dir.path().join("white.pgw");
        std::fs::write(&wf, "0.5\n0\n0\n-0.5\n100\n200\n").unwrap();
        let scene = load_scene(&img, &wf).unwrap();
        assert_eq!((scene.width(), scene.height()), (4, 4));
        assert_eq!(scene.geotransform.pixel_center(0, 0), (100.25, 199.75));
        assert_eq!(scene.id, "white");
        assert_eq!(load_scene_with_sidecar(&img).unwrap(), scene);
    }

    #[test]
    fn large_scene_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zone.png");
        let scene = Scene::new(
            "zone",
            RgbImage::from_fn(1900, 1900, |x, y| [(x % 256) as u8, (y % 256) as u8, 90]),
            GeoTransform::north_up(0.0, 0.0, 0.12, -0.12),
        );
        save_scene(&scene, &path).unwrap();
        let back = load_scene_with_sidecar(&path).unwrap();
        assert_eq!((back.width(), back.height()), (1900, 1900));
        assert_eq!(back.image, scene.image);
    }

    #[test]
    fn five_line_world_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("a.png");
        save_patch_png(&RgbImage::filled(2, 2, [1, 2, 3]), &img).unwrap();
        let wf = dir.path().join("a.pgw");
        std::fs::write(&wf, "0.5\n0\n0\n-0.5\n100\n").unwrap();
        assert!(matches!(
            load_scene(&img, &wf),
            Err(RasterError::MalformedWorldFile(_))
        ));
    }

    #[test]
    fn non_rgb_and_missing_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let gray = dir.path().join("g.png");
        save_gray_png(&GrayRaster::new(2, 2, vec![0, 1, 2, 3]), &gray).unwrap();
        std::fs::write(dir.path().join("g.pgw"), "1\n0\n0\n-1\n0\n0\n").unwrap();
        assert!(matches!(
            load_scene_with_sidecar(&gray),
            Err(RasterError::UnsupportedPixelFormat { .. })
        ));
        let corrupt = dir.path().join("c.png");
        std::fs::write(&corrupt, b"not a png").unwrap();
        assert!(load_patch_png(&corrupt).is_err());
        assert!(load_patch_png(&dir.path().join("missing.png")).is_err());
    }

    #[test]
    fn tiff_scene_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tif");
        let scene = Scene::new(
            "s",
            RgbImage::from_fn(5, 3, |x, y| [x as u8 * 40, y as u8 * 60, 200]),
            GeoTransform::north_up(10.0, 20.0, 0.5, -0.5),
        );
        let wf = save_scene(&scene, &path).unwrap();
        assert_eq!(wf.extension().unwrap(), "tfw");
        assert_eq!(load_scene_with_sidecar(&path).unwrap(), scene);
    }
}
