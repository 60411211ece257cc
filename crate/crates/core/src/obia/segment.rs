//! Bottom-up region merging driven by a color/shape fusion cost.
//!
//! Every pixel starts as its own segment. The globally cheapest adjacent pair
//! is merged next (ties broken by the lower label pair), which makes it a
//! mutually best-fitting pair; merging stops once the cheapest cost reaches
//! `scale²`. Because the merge sequence does not depend on `scale`, larger
//! scales can only continue the same sequence further.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::ObiaError;
use crate::raster::{PixelRect, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationParams {
    pub scale: f64,
    pub shape_weight: f64,
    pub compactness_weight: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            scale: 110.0,
            shape_weight: 0.3,
            compactness_weight: 0.8,
        }
    }
}

impl SegmentationParams {
    pub fn new(scale: f64, shape_weight: f64, compactness_weight: f64) -> Self {
        Self {
            scale,
            shape_weight,
            compactness_weight,
        }
    }

    /// `scale = 0` is accepted and yields one segment per pixel.
    pub fn validate(&self) -> Result<(), ObiaError> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(ObiaError::InvalidParams(format!(
                "scale must be finite and >= 0, got {}",
                self.scale
            )));
        }
        for (name, v) in [
            ("shape_weight", self.shape_weight),
            ("compactness_weight", self.compactness_weight),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ObiaError::InvalidParams(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Accumulated statistics of one segment. Sums are exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionStats {
    pub n: u64,
    pub sum: [u64; 3],
    pub sumsq: [u64; 3],
    /// Boundary edge count, image border included.
    pub perimeter: u64,
    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    pub bounds: (u32, u32, u32, u32),
}

impl RegionStats {
    pub fn pixel(x: usize, y: usize, rgb: [u8; 3]) -> Self {
        let v = rgb.map(|c| c as u64);
        Self {
            n: 1,
            sum: v,
            sumsq: v.map(|c| c * c),
            perimeter: 4,
            bounds: (x as u32, y as u32, x as u32, y as u32),
        }
    }

    /// Population standard deviation of band `b`; exactly 0 for uniform segments.
    pub fn std(&self, b: usize) -> f64 {
        let n = self.n as u128;
        let num = n * self.sumsq[b] as u128 - (self.sum[b] as u128).pow(2);
        (num as f64).sqrt() / self.n as f64
    }

    pub fn mean(&self, b: usize) -> f64 {
        self.sum[b] as f64 / self.n as f64
    }

    pub fn bbox_perimeter(&self) -> f64 {
        let (x0, y0, x1, y1) = self.bounds;
        2.0 * ((x1 - x0 + 1) as f64 + (y1 - y0 + 1) as f64)
    }

    pub fn bbox(&self) -> PixelRect {
        let (x0, y0, x1, y1) = self.bounds;
        PixelRect::new(
            x0 as usize,
            y0 as usize,
            (x1 - x0 + 1) as usize,
            (y1 - y0 + 1) as usize,
        )
    }

    pub fn merged(&self, other: &Self, shared: u64) -> Self {
        let (a, b) = (self.bounds, other.bounds);
        Self {
            n: self.n + other.n,
            sum: std::array::from_fn(|i| self.sum[i] + other.sum[i]),
            sumsq: std::array::from_fn(|i| self.sumsq[i] + other.sumsq[i]),
            perimeter: self.perimeter + other.perimeter - 2 * shared,
            bounds: (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
        }
    }

    fn compactness(&self) -> f64 {
        self.perimeter as f64 / (self.n as f64).sqrt()
    }

    fn smoothness(&self) -> f64 {
        self.perimeter as f64 / self.bbox_perimeter()
    }
}

/// Fusion cost of merging `a` and `b`, which share `shared` boundary edges.
pub fn fusion_cost(a: &RegionStats, b: &RegionStats, shared: u64, p: &SegmentationParams) -> f64 {
    let m = a.merged(b, shared);
    let (na, nb, nm) = (a.n as f64, b.n as f64, m.n as f64);
    let color: f64 = (0..3)
        .map(|i| nm * m.std(i) - (na * a.std(i) + nb * b.std(i)))
        .sum();
    let cmpct = nm * m.compactness() - (na * a.compactness() + nb * b.compactness());
    let smooth = nm * m.smoothness() - (na * a.smoothness() + nb * b.smoothness());
    let shape = p.compactness_weight * cmpct + (1.0 - p.compactness_weight) * smooth;
    (1.0 - p.shape_weight) * color + p.shape_weight * shape
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    cost: f64,
    lo: u32,
    hi: u32,
    ver_lo: u32,
    ver_hi: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.cost
            .total_cmp(&o.cost)
            .then(self.lo.cmp(&o.lo))
            .then(self.hi.cmp(&o.hi))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Working state of a running segmentation, exposed to merge observers.
pub struct MergeState {
    width: usize,
    height: usize,
    parent: Vec<u32>,
    stats: Vec<RegionStats>,
    alive: Vec<bool>,
    version: Vec<u32>,
    adjacency: Vec<Vec<(u32, u32)>>,
    live: usize,
    merges: usize,
}

impl MergeState {
    fn new(img: &RgbImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let n = w * h;
        let mut stats = Vec::with_capacity(n);
        let mut adjacency = Vec::with_capacity(n);
        for y in 0..h {
            for x in 0..w {
                stats.push(RegionStats::pixel(x, y, img.pixel(x, y)));
                let i = (y * w + x) as u32;
                let mut adj = Vec::with_capacity(4);
                if y > 0 {
                    adj.push((i - w as u32, 1));
                }
                if x > 0 {
                    adj.push((i - 1, 1));
                }
                if x + 1 < w {
                    adj.push((i + 1, 1));
                }
                if y + 1 < h {
                    adj.push((i + w as u32, 1));
                }
                adjacency.push(adj);
            }
        }
        Self {
            width: w,
            height: h,
            parent: (0..n as u32).collect(),
            stats,
            alive: vec![true; n],
            version: vec![0; n],
            adjacency,
            live: n,
            merges: 0,
        }
    }

    fn root(&self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            i = self.parent[i as usize];
        }
        i
    }

    pub fn segment_count(&self) -> usize {
        self.live
    }

    pub fn merges(&self) -> usize {
        self.merges
    }

    /// Checks that every pixel resolves to exactly one live segment, that
    /// live pixel counts add up to the scene size and that adjacency is
    /// symmetric.
    #[allow(clippy::needless_range_loop)]
    pub fn check_partition(&self) -> bool {
        let n = self.width * self.height;
        let mut counted = vec![0u64; n];
        for i in 0..n as u32 {
            let r = self.root(i);
            if !self.alive[r as usize] {
                return false;
            }
            counted[r as usize] += 1;
        }
        let mut live = 0;
        for i in 0..n {
            if self.alive[i] {
                live += 1;
                if counted[i] != self.stats[i].n {
                    return false;
                }
                for &(j, s) in &self.adjacency[i] {
                    if !self.alive[j as usize]
                        || !self.adjacency[j as usize].contains(&(i as u32, s))
                    {
                        return false;
                    }
                }
            } else if counted[i] != 0 {
                return false;
            }
        }
        live == self.live && counted.iter().sum::<u64>() == n as u64
    }

    fn candidate(&self, a: u32, b: u32, shared: u32, p: &SegmentationParams) -> Candidate {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        Candidate {
            cost: fusion_cost(
                &self.stats[lo as usize],
                &self.stats[hi as usize],
                shared as u64,
                p,
            ),
            lo,
            hi,
            ver_lo: self.version[lo as usize],
            ver_hi: self.version[hi as usize],
        }
    }

    fn is_current(&self, c: &Candidate) -> bool {
        self.alive[c.lo as usize]
            && self.alive[c.hi as usize]
            && self.version[c.lo as usize] == c.ver_lo
            && self.version[c.hi as usize] == c.ver_hi
    }

    /// Folds `hi` into `lo`.
    fn merge(&mut self, lo: u32, hi: u32) {
        let (l, h) = (lo as usize, hi as usize);
        let shared = self.adjacency[l]
            .iter()
            .find(|e| e.0 == hi)
            .map(|e| e.1)
            .expect("merged pair is adjacent");
        self.stats[l] = self.stats[l].merged(&self.stats[h], shared as u64);
        self.alive[h] = false;
        self.parent[h] = lo;
        self.version[l] += 1;

        let hi_adj = std::mem::take(&mut self.adjacency[h]);
        self.adjacency[l].retain(|e| e.0 != hi);
        for (c, s) in hi_adj {
            if c == lo {
                continue;
            }
            let cadj = &mut self.adjacency[c as usize];
            let from_hi = cadj
                .iter()
                .position(|e| e.0 == hi)
                .expect("adjacency is symmetric");
            cadj.swap_remove(from_hi);
            if let Some(e) = cadj.iter_mut().find(|e| e.0 == lo) {
                e.1 += s;
                let total = e.1;
                self.adjacency[l]
                    .iter_mut()
                    .find(|e| e.0 == c)
                    .expect("symmetric")
                    .1 = total;
            } else {
                cadj.push((lo, s));
                self.adjacency[l].push((c, s));
            }
        }
        self.live -= 1;
        self.merges += 1;
    }

    #[allow(clippy::needless_range_loop)]
    fn into_graph(mut self) -> SegmentGraph {
        let n = self.width * self.height;
        // compress, then number roots in raster order of their first pixel
        let mut id_of_root = vec![u32::MAX; n];
        let mut labels = vec![0u32; n];
        let mut segments = Vec::with_capacity(self.live);
        let mut root_of_id = Vec::with_capacity(self.live);
        for i in 0..n {
            let r = self.root(i as u32);
            self.parent[i] = r;
            if id_of_root[r as usize] == u32::MAX {
                id_of_root[r as usize] = segments.len() as u32;
                segments.push(self.stats[r as usize]);
                root_of_id.push(r);
            }
            labels[i] = id_of_root[r as usize];
        }
        let adjacency = root_of_id
            .iter()
            .map(|&r| {
                let mut v: Vec<(u32, u32)> = self.adjacency[r as usize]
                    .iter()
                    .map(|&(c, s)| (id_of_root[c as usize], s))
                    .collect();
                v.sort_unstable();
                v
            })
            .collect();
        SegmentGraph {
            width: self.width,
            height: self.height,
            labels,
            segments,
            adjacency,
            merges: self.merges,
        }
    }
}

/// Final partition. Segment ids follow the raster order of each segment's
/// first pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGraph {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub segments: Vec<RegionStats>,
    /// Per segment: `(neighbor id, shared edge count)`, sorted by id.
    pub adjacency: Vec<Vec<(u32, u32)>>,
    pub merges: usize,
}

impl SegmentGraph {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

pub fn segment(img: &RgbImage, params: &SegmentationParams) -> Result<SegmentGraph, ObiaError> {
    segment_observed(img, params, |_| {})
}

/// Like [`segment`], calling `observer` after every merge.
pub fn segment_observed(
    img: &RgbImage,
    params: &SegmentationParams,
    mut observer: impl FnMut(&MergeState),
) -> Result<SegmentGraph, ObiaError> {
    params.validate()?;
    let mut st = MergeState::new(img);
    let limit = params.scale * params.scale;
    let mut heap = BinaryHeap::new();
    for a in 0..st.adjacency.len() as u32 {
        for &(b, s) in &st.adjacency[a as usize] {
            if a < b {
                heap.push(Reverse(st.candidate(a, b, s, params)));
            }
        }
    }
    while let Some(Reverse(c)) = heap.pop() {
        if !st.is_current(&c) {
            continue;
        }
        if c.cost >= limit {
            break;
        }
        st.merge(c.lo, c.hi);
        let lo = c.lo;
        for i in 0..st.adjacency[lo as usize].len() {
            let (b, s) = st.adjacency[lo as usize][i];
            heap.push(Reverse(st.candidate(lo, b, s, params)));
        }
        observer(&st);
    }
    Ok(st.into_graph())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: usize, h: usize) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn uniform_scene_collapses() {
        let img = RgbImage::filled(12, 9, [90, 120, 30]);
        let g = segment(&img, &SegmentationParams::new(100.0, 0.3, 0.8)).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.labels.iter().all(|&l| l == 0));
        assert_eq!(g.segments[0].perimeter, 2 * (12 + 9));
    }

    #[test]
    fn zero_scale_keeps_pixels() {
        let img = random_image(1, 10, 7);
        for p in [
            SegmentationParams::new(0.0, 0.0, 0.0),
            SegmentationParams::new(0.0, 1.0, 1.0),
            SegmentationParams::new(0.0, 0.5, 0.5),
        ] {
            let g = segment(&img, &p).unwrap();
            assert_eq!(g.len(), 70);
            assert_eq!(g.labels, (0..70).collect::<Vec<u32>>());
        }
        let flat = RgbImage::filled(5, 5, [1, 2, 3]);
        assert_eq!(
            segment(&flat, &SegmentationParams::new(0.0, 0.3, 0.8))
                .unwrap()
                .len(),
            25
        );
    }

    /// Hand computation: merging the two uniform 8×4 halves of an 8×8 two-tone
    /// image (values 0 and 100 in every band) with shape_weight 0 costs
    /// 3 · 64 · 50 = 9600, since each merged band has population std 50 and
    /// each half has std 0. Any segment crossing the boundary must pass
    /// through a merge of two uniform regions of opposite tone, whose cost
    /// 3 · (n1 + n2) · std is at least 3 · 2 · 50 = 300.
    #[test]
    fn boundary_not_crossed_below_its_cost() {
        let img = RgbImage::from_fn(8, 8, |x, _| if x < 4 { [0; 3] } else { [100; 3] });
        let a = RegionStats {
            n: 32,
            sum: [0; 3],
            sumsq: [0; 3],
            perimeter: 24,
            bounds: (0, 0, 3, 7),
        };
        let b = RegionStats {
            n: 32,
            sum: [3200; 3],
            sumsq: [320_000; 3],
            perimeter: 24,
            bounds: (4, 0, 7, 7),
        };
        let p = SegmentationParams::new(0.0, 0.0, 0.5);
        assert!((fusion_cost(&a, &b, 8, &p) - 9600.0).abs() < 1e-9);

        // sqrt(300) ≈ 17.3: everything within a half merges, nothing across
        let g = segment(&img, &SegmentationParams::new(17.0, 0.0, 0.5)).unwrap();
        assert_eq!(g.len(), 2);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(g.labels[y * 8 + x], (x >= 4) as u32);
            }
        }
        assert_eq!(
            segment(&img, &SegmentationParams::new(98.0, 0.0, 0.5))
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn partition_holds_after_every_merge() {
        let img = random_image(3, 16, 16);
        let mut checks = 0;
        let g = segment_observed(&img, &SegmentationParams::new(60.0, 0.3, 0.8), |st| {
            assert!(st.check_partition());
            checks += 1;
        })
        .unwrap();
        assert_eq!(checks, g.merges);
        assert_eq!(g.len(), 256 - g.merges);
        assert_eq!(g.segments.iter().map(|s| s.n).sum::<u64>(), 256);
        for (a, adj) in g.adjacency.iter().enumerate() {
            for &(b, s) in adj {
                assert!(g.adjacency[b as usize].contains(&(a as u32, s)));
            }
        }
    }

    #[test]
    fn invalid_params() {
        let img = random_image(1, 2, 2);
        assert!(segment(&img, &SegmentationParams::new(-1.0, 0.3, 0.8)).is_err());
        assert!(segment(&img, &SegmentationParams::new(10.0, 1.3, 0.8)).is_err());
    }

    proptest! {
        #[test]
        fn cost_is_symmetric(seed in 0u64..10_000, sw in 0.0f64..=1.0, cw in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut region = || {
                let n: u64 = rng.random_range(1..500);
                let sum = std::array::from_fn(|_| rng.random_range(0..=255 * n));
                let sumsq = std::array::from_fn(|i: usize| {
                    let s: u64 = sum[i];
                    // any value between the uniform minimum and the maximum
                    (s * s).div_ceil(n) + rng.random_range(0..=n * 1000)
                });
                let x0 = rng.random_range(0..100);
                let y0 = rng.random_range(0..100);
                RegionStats { n, sum, sumsq, perimeter: 4 * n, bounds: (x0, y0, x0 + 10, y0 + 10) }
            };
            let (a, b) = (region(), region());
            let p = SegmentationParams::new(50.0, sw, cw);
            let shared = rng.random_range(1..4);
            prop_assert!((fusion_cost(&a, &b, shared, &p) - fusion_cost(&b, &a, shared, &p)).abs() <= 1e-9);
        }

        #[test]
        fn count_non_increasing_in_scale(seed in 0u64..1000, s1 in 0.0f64..60.0, s2 in 0.0f64..60.0) {
            let img = random_image(seed, 12, 12);
            let (lo, hi) = (s1.min(s2), s1.max(s2));
            let a = segment(&img, &SegmentationParams::new(lo, 0.3, 0.8)).unwrap();
            let b = segment(&img, &SegmentationParams::new(hi, 0.3, 0.8)).unwrap();
            prop_assert!(b.len() <= a.len());
        }
    }
}
