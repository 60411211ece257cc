use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::WindowGrid;
use super::DetectError;
use crate::raster::{save_gray_png, BinaryMask, GrayRaster, RasterError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleFusion {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for ScaleFusion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(ScaleFusion::Mean),
            "max" => Ok(ScaleFusion::Max),
            other => Err(format!(
                "unknown fusion rule {other:?} (expected mean or max)"
            )),
        }
    }
}

impl ScaleFusion {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaleFusion::Mean => "mean",
            ScaleFusion::Max => "max",
        }
    }
}

/// Window scores of one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleScan {
    pub grid: WindowGrid,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityHeatmap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Number of windows, over all scales, covering each pixel.
    pub coverage: Vec<u32>,
}

impl ProbabilityHeatmap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// 8-bit rendering, `round(255 p)`.
    pub fn to_gray(&self) -> GrayRaster {
        GrayRaster::new(
            self.width,
            self.height,
            self.values
                .iter()
                .map(|p| (255.0 * p).round() as u8)
                .collect(),
        )
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        save_gray_png(&self.to_gray(), path)
    }

    /// Text header (`width`, `height`) followed by little-endian f32 values.
    pub fn save_raw(&self, path: &Path) -> Result<(), RasterError> {
        let mut buf = format!(
            "shrubmap-heatmap f32le\nwidth {}\nheight {}\n",
            self.width, self.height
        )
        .into_bytes();
        for v in &self.values {
            buf.write_all(&(*v as f32).to_le_bytes())
                .expect("in-memory write");
        }
        std::fs::write(path, buf).map_err(|e| RasterError::io(path, e))
    }
}

/// Per scale, each pixel takes the mean score of the windows covering it;
/// scales are then fused per pixel over those that cover it. Uncovered
/// pixels are 0.
pub fn assemble_heatmap(
    width: usize,
    height: usize,
    scans: &[ScaleScan],
    fusion: ScaleFusion,
) -> Result<ProbabilityHeatmap, DetectError> {
    if scans.is_empty() {
        return Err(DetectError::EmptyScans);
    }
    let n = width * height;
    let mut fused_sum = vec![0.0f64; n];
    let mut fused_max = vec![0.0f64; n];
    let mut scales_covering = vec![0u32; n];
    let mut coverage = vec![0u32; n];
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0u32; n];
    for scan in scans {
        if scan.scores.len() != scan.grid.offsets.len() {
            return Err(DetectError::InvalidConfig(format!(
                "{} scores for {} windows",
                scan.scores.len(),
                scan.grid.offsets.len()
            )));
        }
        let win = scan.grid.window_size;
        sum.iter_mut().for_each(|v| *v = 0.0);
        count.iter_mut().for_each(|v| *v = 0);
        for (&(c, r), &p) in scan.grid.offsets.iter().zip(&scan.scores) {
            if c + win > width || r + win > height {
                return Err(DetectError::WindowTooLarge {
                    window: win,
                    width,
                    height,
                });
            }
            for y in r..r + win {
                let row = y * width;
                for i in row + c..row + c + win {
                    sum[i] += p;
                    count[i] += 1;
                }
            }
        }
        for i in 0..n {
            if count[i] > 0 {
                let v = sum[i] / count[i] as f64;
                fused_sum[i] += v;
                fused_max[i] = fused_max[i].max(v);
                scales_covering[i] += 1;
                coverage[i] += count[i];
            }
        }
    }
    let values = (0..n)
        .map(|i| match (scales_covering[i], fusion) {
            (0, _) => 0.0,
            (k, ScaleFusion::Mean) => (fused_sum[i] / k as f64).clamp(0.0, 1.0),
            (_, ScaleFusion::Max) => fused_max[i].clamp(0.0, 1.0),
        })
        .collect();
    Ok(ProbabilityHeatmap {
        width,
        height,
        values,
        coverage,
    })
}

/// Positive iff value > threshold.
pub fn threshold_heatmap(hm: &ProbabilityHeatmap, threshold: f64) -> BinaryMask {
    BinaryMask::new(
        hm.width,
        hm.height,
        hm.values.iter().map(|&v| v > threshold).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::grid::window_grid;
    use proptest::prelude::{prop_assert, proptest};

    fn scan(grid: WindowGrid, scores: Vec<f64>) -> ScaleScan {
        ScaleScan { grid, scores }
    }

    #[test]
    fn single_full_window() {
        let g = window_grid(10, 10, 10, 0.7).unwrap();
        let hm = assemble_heatmap(10, 10, &[scan(g, vec![0.8])], ScaleFusion::Mean).unwrap();
        assert!(hm.values.iter().all(|&v| v == 0.8));
        assert!(hm.coverage.iter().all(|&c| c == 1));
    }

    #[test]
    fn same_scale_mean_and_cross_scale_fusion() {
        let g = WindowGrid {
            window_size: 2,
            stride: 1,
            offsets: vec![(0, 0), (1, 0)],
        };
        let hm =
            assemble_heatmap(3, 2, &[scan(g.clone(), vec![0.2, 0.6])], ScaleFusion::Mean).unwrap();
        assert!((hm.get(1, 0) - 0.4).abs() < 1e-15);
        assert_eq!(hm.get(0, 0), 0.2);
        assert_eq!(hm.coverage[1], 2);

        let a = WindowGrid {
            window_size: 2,
            stride: 2,
            offsets: vec![(0, 0)],
        };
        let scans = [scan(a.clone(), vec![0.4]), scan(a, vec![0.8])];
        let mean = assemble_heatmap(2, 2, &scans, ScaleFusion::Mean).unwrap();
        let max = assemble_heatmap(2, 2, &scans, ScaleFusion::Max).unwrap();
        assert!((mean.get(0, 0) - 0.6).abs() < 1e-15);
        assert_eq!(max.get(0, 0), 0.8);

        // partial grid: uncovered pixels are zero
        let part = WindowGrid {
            window_size: 1,
            stride: 1,
            offsets: vec![(0, 0)],
        };
        let hm = assemble_heatmap(2, 1, &[scan(part, vec![0.9])], ScaleFusion::Mean).unwrap();
        assert_eq!(hm.values, vec![0.9, 0.0]);
        assert!(assemble_heatmap(2, 2, &[], ScaleFusion::Mean).is_err());
    }

    #[test]
    fn threshold_strictness() {
        let hm = ProbabilityHeatmap {
            width: 3,
            height: 1,
            values: vec![0.5, 0.51, 0.0],
            coverage: vec![1; 3],
        };
        assert_eq!(threshold_heatmap(&hm, 0.5).bits, vec![false, true, false]);
        let zero = ProbabilityHeatmap {
            width: 2,
            height: 2,
            values: vec![0.0; 4],
            coverage: vec![1; 4],
        };
        assert_eq!(threshold_heatmap(&zero, 0.5).count(), 0);
    }

    #[test]
    fn exports() {
        let dir = tempfile::tempdir().unwrap();
        let hm = ProbabilityHeatmap {
            width: 2,
            height: 1,
            values: vec![0.5, 1.0],
            coverage: vec![1; 2],
        };
        assert_eq!(hm.to_gray().values, vec![128, 255]);
        hm.save_png(&dir.path().join("h.png")).unwrap();
        hm.save_raw(&dir.path().join("h.f32")).unwrap();
        let raw = std::fs::read(dir.path().join("h.f32")).unwrap();
        assert!(raw.starts_with(b"shrubmap-heatmap f32le\nwidth 2\nheight 1\n"));
        assert_eq!(&raw[raw.len() - 4..], &1.0f32.to_le_bytes());
    }

    proptest! {
        #[test]
        fn values_bounded_and_threshold_monotone(
            w in 4usize..30, h in 4usize..30, win_a in 1usize..4, win_b in 1usize..4,
            seed in 0u64..1000, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut scans = Vec::new();
            for win in [win_a, win_b] {
                let g = window_grid(w, h, win, 0.7).unwrap();
                let scores = (0..g.len()).map(|_| rng.random_range(0.0..=1.0)).collect();
                scans.push(ScaleScan { grid: g, scores });
            }
            for fusion in [ScaleFusion::Mean, ScaleFusion::Max] {
                let hm = assemble_heatmap(w, h, &scans, fusion).unwrap();
                prop_assert!(hm.values.iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(hm.coverage.iter().all(|&c| c >= 2));
                let (lo, hi) = (t1.min(t2), t1.max(t2));
                let a = threshold_heatmap(&hm, lo);
                let b = threshold_heatmap(&hm, hi);
                prop_assert!(b.bits.iter().zip(&a.bits).all(|(&pb, &pa)| !pb || pa));
            }
        }
    }
}
