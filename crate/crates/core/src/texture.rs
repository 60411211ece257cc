//! Gray-level co-occurrence texture statistic shared by the patch features
//! and the segment features.
//!
//! Convention: gray is quantized to 32 levels (`g >> 3`), pairs are taken at
//! offset (1, 0) and counted symmetrically. The mean `sum_i i * P(i, .)` is
//! reported back on the 8-bit gray scale (level × 8) so thresholds read like
//! brightness values.

pub const GLCM_LEVELS: usize = 32;
const LEVEL_WIDTH: f64 = 256.0 / GLCM_LEVELS as f64;

#[inline]
pub fn quantize(gray: u8) -> u8 {
    gray >> 3
}

/// Accumulates horizontal pairs; `None` when there are no pairs.
#[derive(Debug, Default, Clone, Copy)]
pub struct GlcmAccumulator {
    level_sum: u64,
    pairs: u64,
}

impl GlcmAccumulator {
    #[inline]
    pub fn add_pair(&mut self, left: u8, right: u8) {
        self.level_sum += quantize(left) as u64 + quantize(right) as u64;
        self.pairs += 1;
    }

    pub fn pairs(&self) -> u64 {
        self.pairs
    }

    /// With symmetric counting each pair contributes both of its levels once
    /// to the row marginal, so the mean is the average level over `2 * pairs`.
    pub fn mean(&self) -> Option<f64> {
        (self.pairs > 0).then(|| self.level_sum as f64 / (2 * self.pairs) as f64 * LEVEL_WIDTH)
    }
}

/// GLCM mean of a full gray raster given row-major values. Rasters one pixel
/// wide fall back to the mean quantized level.
pub fn glcm_mean(width: usize, height: usize, gray: &[u8]) -> f64 {
    let mut acc = GlcmAccumulator::default();
    for row in gray.chunks_exact(width).take(height) {
        for pair in row.windows(2) {
            acc.add_pair(pair[0], pair[1]);
        }
    }
    acc.mean().unwrap_or_else(|| mean_level(gray))
}

pub fn mean_level(gray: &[u8]) -> f64 {
    if gray.is_empty() {
        return 0.0;
    }
    gray.iter().map(|&g| quantize(g) as f64).sum::<f64>() / gray.len() as f64 * LEVEL_WIDTH
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Builds the full normalized matrix and takes the row-marginal mean.
    fn naive(width: usize, height: usize, gray: &[u8]) -> f64 {
        let mut m = vec![[0.0f64; GLCM_LEVELS]; GLCM_LEVELS];
        let mut total = 0.0;
        for y in 0..height {
            for x in 0..width - 1 {
                let i = (gray[y * width + x] / 8) as usize;
                let j = (gray[y * width + x + 1] / 8) as usize;
                m[i][j] += 1.0;
                m[j][i] += 1.0;
                total += 2.0;
            }
        }
        let mut mean = 0.0;
        for (i, row) in m.iter().enumerate() {
            for p in row {
                mean += i as f64 * p / total;
            }
        }
        mean * 8.0
    }

    #[test]
    fn matches_naive_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (w, h) = (rng.random_range(2..30), rng.random_range(1..30));
            let g: Vec<u8> = (0..w * h).map(|_| rng.random()).collect();
            assert!((glcm_mean(w, h, &g) - naive(w, h, &g)).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_and_degenerate() {
        assert_eq!(glcm_mean(4, 4, &[128; 16]), 128.0);
        assert_eq!(glcm_mean(1, 2, &[16, 32]), 24.0);
    }
}
