use crate::preprocess::luma;
use crate::raster::Patch;
use crate::texture;

pub const HIST_BINS: usize = 16;
pub const FEATURE_LEN: usize = 6 + HIST_BINS + 1;

/// Column names, in vector order.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = ["mean_r", "mean_g", "mean_b", "std_r", "std_g", "std_b"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..HIST_BINS).map(|b| format!("hist_{b:02}")));
    names.push("glcm_mean".into());
    names
}

/// Canonical description hashed into model files, so a model trained against a
/// different feature layout is refused.
pub fn feature_schema() -> String {
    format!(
        "{};hist=gray/16;gray=bt601;std=population;glcm=levels{},offset(1,0),symmetric,mean*8",
        feature_names().join(","),
        texture::GLCM_LEVELS
    )
}

/// Channel means and population stds, a normalized 16-bin gray histogram and
/// the GLCM mean.
pub fn extract_features(p: &Patch) -> Vec<f64> {
    let n = (p.width() * p.height()) as f64;
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut hist = [0usize; HIST_BINS];
    let mut gray = Vec::with_capacity(p.width() * p.height());
    for px in p.data().chunks_exact(3) {
        for c in 0..3 {
            let v = px[c] as f64;
            sum[c] += v;
            sq[c] += v * v;
        }
        let g = luma([px[0], px[1], px[2]]);
        hist[g as usize / (256 / HIST_BINS)] += 1;
        gray.push(g);
    }
    let mut f = Vec::with_capacity(FEATURE_LEN);
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    f.extend(&means);
    for c in 0..3 {
        f.push((sq[c] / n - means[c] * means[c]).max(0.0).sqrt());
    }
    f.extend(hist.iter().map(|&h| h as f64 / n));
    f.push(texture::glcm_mean(p.width(), p.height(), &gray));
    f
}
