//! Bilinear resampling used by augmentation and window scoring.

use crate::raster::RgbImage;

/// Resizes with bilinear interpolation, sampling at pixel centers
/// (`src = (dst + 0.5) * scale - 0.5`, clamped at the borders).
/// Same-size resizing returns an exact copy.
pub fn resize_bilinear(img: &RgbImage, out_w: usize, out_h: usize) -> RgbImage {
    assert!(out_w > 0 && out_h > 0, "resize to empty image");
    if out_w == img.width() && out_h == img.height() {
        return img.clone();
    }
    let xs = axis_samples(img.width(), out_w);
    let ys = axis_samples(img.height(), out_h);
    let src = img.data();
    let stride = img.width() * 3;
    let mut data = Vec::with_capacity(out_w * out_h * 3);
    for &(y0, y1, fy) in &ys {
        let row0 = &src[y0 * stride..(y0 + 1) * stride];
        let row1 = &src[y1 * stride..(y1 + 1) * stride];
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = row0[x0 * 3 + c] as f64 * (1.0 - fx) + row0[x1 * 3 + c] as f64 * fx;
                let bot = row1[x0 * 3 + c] as f64 * (1.0 - fx) + row1[x1 * 3 + c] as f64 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage::new(out_w, out_h, data).expect("output size is consistent")
}

fn axis_samples(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    let last = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}
