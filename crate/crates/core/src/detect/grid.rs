use super::DetectError;

/// Nearest integer to `fraction * window`, ties rounded down, at least 1.
pub fn stride_for(window: usize, fraction: f64) -> usize {
    let v = fraction * window as f64;
    // the epsilon keeps exact halves such as 269.5 from drifting up
    let s = (v - 0.5 - 1e-9).ceil();
    if s < 1.0 {
        1
    } else {
        s as usize
    }
}

/// Window origins along one axis: multiples of `stride`, plus a flush
/// origin at `dim - window` when the multiples miss it.
pub fn axis_offsets(dim: usize, window: usize, stride: usize) -> Vec<usize> {
    let last = dim - window;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().expect("offset 0 always present") != last {
        v.push(last);
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrid {
    pub window_size: usize,
    pub stride: usize,
    /// `(col, row)` origins in raster order.
    pub offsets: Vec<(usize, usize)>,
}

impl WindowGrid {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

pub fn window_grid(
    scene_w: usize,
    scene_h: usize,
    window: usize,
    stride_fraction: f64,
) -> Result<WindowGrid, DetectError> {
    if window == 0 || window > scene_w.min(scene_h) {
        return Err(DetectError::WindowTooLarge {
            window,
            width: scene_w,
            height: scene_h,
        });
    }
    if !(stride_fraction > 0.0 && stride_fraction <= 1.0) {
        return Err(DetectError::InvalidConfig(format!(
            "stride_fraction must lie in (0, 1], got {stride_fraction}"
        )));
    }
    let stride = stride_for(window, stride_fraction);
    let cols = axis_offsets(scene_w, window, stride);
    let rows = axis_offsets(scene_h, window, stride);
    let offsets = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (c, r)))
        .collect();
    Ok(WindowGrid {
        window_size: window,
        stride,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_fixtures() {
        assert_eq!(stride_for(38, 0.7), 27);
        assert_eq!(stride_for(385, 0.7), 269);
        assert_eq!(stride_for(1, 0.7), 1);
        assert_eq!(stride_for(3, 0.5), 1);
        assert_eq!(stride_for(5, 0.5), 2);
        assert_eq!(stride_for(7, 0.5), 3);
        assert_eq!(stride_for(10, 1.0), 10);
    }

    #[test]
    fn large_scene_grid() {
        let g = window_grid(1900, 1900, 385, 0.7).unwrap();
        assert_eq!(
            axis_offsets(1900, 385, 269),
            vec![0, 269, 538, 807, 1076, 1345, 1515]
        );
        assert_eq!(g.len(), 49);
        assert_eq!(
            window_grid(100, 100, 100, 0.7).unwrap().offsets,
            vec![(0, 0)]
        );
        assert!(window_grid(100, 50, 60, 0.7).is_err());
        assert!(window_grid(100, 100, 10, 0.0).is_err());
    }

    #[test]
    fn matches_naive_enumeration() {
        for w in 1..=50 {
            for h in 1..=50 {
                for win in 1..=w.min(h) {
                    let g = window_grid(w, h, win, 0.7).unwrap();
                    // naive: walk each axis one pixel at a time
                    let naive_axis = |dim: usize| {
                        let mut v = Vec::new();
                        for o in 0..=dim - win {
                            if o % g.stride == 0 || o == dim - win {
                                v.push(o);
                            }
                        }
                        v
                    };
                    let mut naive = Vec::new();
                    for r in naive_axis(h) {
                        for c in naive_axis(w) {
                            naive.push((c, r));
                        }
                    }
                    assert_eq!(g.offsets, naive);
                }
            }
        }
    }
}
