use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::segment::SegmentGraph;
use crate::preprocess::luma;
use crate::raster::RgbImage;
use crate::texture::{quantize, GlcmAccumulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Brightness,
    MeanR,
    MeanG,
    MeanB,
    StdR,
    StdG,
    StdB,
    GlcmMean,
    Area,
}

impl Feature {
    pub const ALL: [Feature; 9] = [
        Feature::Brightness,
        Feature::MeanR,
        Feature::MeanG,
        Feature::MeanB,
        Feature::StdR,
        Feature::StdG,
        Feature::StdB,
        Feature::GlcmMean,
        Feature::Area,
    ];

    /// Spectral and texture features; area is left out of distances.
    pub const SPECTRAL: [Feature; 8] = [
        Feature::Brightness,
        Feature::MeanR,
        Feature::MeanG,
        Feature::MeanB,
        Feature::StdR,
        Feature::StdG,
        Feature::StdB,
        Feature::GlcmMean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Brightness => "brightness",
            Feature::MeanR => "mean_r",
            Feature::MeanG => "mean_g",
            Feature::MeanB => "mean_b",
            Feature::StdR => "std_r",
            Feature::StdG => "std_g",
            Feature::StdB => "std_b",
            Feature::GlcmMean => "glcm_mean",
            Feature::Area => "area",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = super::ObiaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let f = match key.as_str() {
            "brightness" => Feature::Brightness,
            "mean_r" | "red" => Feature::MeanR,
            "mean_g" | "green" => Feature::MeanG,
            "mean_b" | "blue" => Feature::MeanB,
            "std_r" => Feature::StdR,
            "std_g" => Feature::StdG,
            "std_b" => Feature::StdB,
            "glcm_mean" | "glcm" => Feature::GlcmMean,
            "area" => Feature::Area,
            _ => return Err(super::ObiaError::UnknownFeature(s.to_string())),
        };
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentFeatures {
    pub id: u32,
    pub n: u64,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub brightness: f64,
    pub glcm_mean: f64,
    pub area: f64,
}

impl SegmentFeatures {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::Brightness => self.brightness,
            Feature::MeanR => self.mean[0],
            Feature::MeanG => self.mean[1],
            Feature::MeanB => self.mean[2],
            Feature::StdR => self.std[0],
            Feature::StdG => self.std[1],
            Feature::StdB => self.std[2],
            Feature::GlcmMean => self.glcm_mean,
            Feature::Area => self.area,
        }
    }

    pub fn vector(&self, features: &[Feature]) -> Vec<f64> {
        features.iter().map(|&f| self.get(f)).collect()
    }
}

/// Per-segment statistics, indexed by segment id. The GLCM mean uses the
/// horizontal pixel pairs lying entirely inside the segment; segments
/// without such a pair fall back to their mean quantized level.
pub fn segment_features(img: &RgbImage, sg: &SegmentGraph) -> Vec<SegmentFeatures> {
    let (w, h) = (sg.width, sg.height);
    assert_eq!(
        (img.width(), img.height()),
        (w, h),
        "segment graph does not match image"
    );
    let k = sg.len();
    let mut glcm = vec![GlcmAccumulator::default(); k];
    let mut level_sum = vec![0u64; k];
    let mut gray = Vec::with_capacity(w * h);
    for px in img.data().chunks_exact(3) {
        gray.push(luma([px[0], px[1], px[2]]));
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let l = sg.labels[i] as usize;
            level_sum[l] += quantize(gray[i]) as u64;
            if x + 1 < w && sg.labels[i + 1] as usize == l {
                glcm[l].add_pair(gray[i], gray[i + 1]);
            }
        }
    }
    sg.segments
        .iter()
        .enumerate()
        .map(|(id, s)| {
            let mean = [s.mean(0), s.mean(1), s.mean(2)];
            let level_width = 256.0 / crate::texture::GLCM_LEVELS as f64;
            SegmentFeatures {
                id: id as u32,
                n: s.n,
                mean,
                std: [s.std(0), s.std(1), s.std(2)],
                brightness: (mean[0] + mean[1] + mean[2]) / 3.0,
                glcm_mean: glcm[id]
                    .mean()
                    .unwrap_or(level_sum[id] as f64 / s.n as f64 * level_width),
                area: s.n as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obia::segment::{segment, SegmentationParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_segment() {
        let img = RgbImage::filled(6, 6, [60, 90, 120]);
        let sg = segment(&img, &SegmentationParams::new(50.0, 0.3, 0.8)).unwrap();
        let f = &segment_features(&img, &sg)[0];
        assert_eq!(f.mean, [60.0, 90.0, 120.0]);
        assert_eq!(f.brightness, 90.0);
        assert_eq!(f.std, [0.0; 3]);
        assert_eq!(f.area, 36.0);
    }

    #[test]
    fn single_pixel_segments() {
        let img = RgbImage::from_fn(3, 1, |x, _| [x as u8 * 100, 7, 9]);
        let sg = segment(&img, &SegmentationParams::new(0.0, 0.3, 0.8)).unwrap();
        let fs = segment_features(&img, &sg);
        assert_eq!(fs.len(), 3);
        for f in &fs {
            assert_eq!(f.std, [0.0; 3]);
            assert_eq!(f.area, 1.0);
            assert_eq!(
                f.glcm_mean,
                (quantize(luma(img.pixel(f.id as usize, 0))) as f64) * 8.0
            );
        }
    }

    #[test]
    fn brightness_matches_naive_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let img = RgbImage::from_fn(16, 16, |_, _| [rng.random(), rng.random(), rng.random()]);
        let sg = segment(&img, &SegmentationParams::new(40.0, 0.3, 0.8)).unwrap();
        let fs = segment_features(&img, &sg);
        for f in &fs {
            let mut total = 0.0;
            let mut count = 0.0;
            for y in 0..16 {
                for x in 0..16 {
                    if sg.labels[y * 16 + x] == f.id {
                        let p = img.pixel(x, y);
                        total += (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0;
                        count += 1.0;
                    }
                }
            }
            assert!((f.brightness - total / count).abs() < 1e-9);
        }
        // the whole image as one segment
        let one = segment(&img, &SegmentationParams::new(1e9, 0.3, 0.8)).unwrap();
        assert_eq!(one.len(), 1);
        let f = &segment_features(&img, &one)[0];
        let naive = img.data().iter().map(|&v| v as f64).sum::<f64>() / (256.0 * 3.0);
        assert!((f.brightness - naive).abs() < 1e-9);
    }

    #[test]
    fn feature_names_parse() {
        for f in Feature::ALL {
            assert_eq!(f.as_str().parse::<Feature>().unwrap(), f);
        }
        assert_eq!("Red".parse::<Feature>().unwrap(), Feature::MeanR);
        assert!("ndvi".parse::<Feature>().is_err());
    }
}
