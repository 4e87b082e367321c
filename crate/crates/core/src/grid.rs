//! Pixel grids, masks, domain rectangles and dense warp fields.
//!
//! Coordinates follow the pixel-center convention: pixel `(x, y)` has its
//! center at the real point `(x, y)`, and a `W x H` grid can be sampled on
//! `[-0.5, W - 0.5] x [-0.5, H - 0.5]`. Warp maps store *global* coordinates,
//! i.e. the target domain's origin is already added in.

use crate::error::{Error, Result};

/// Half-pixel border around a grid inside which sampling is clamped.
pub const SAMPLE_MARGIN: f64 = 0.5;

const MARGIN_EPS: f64 = 1e-9;

/// Dense `width x height x channels` image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!("frame dimensions {width}x{height}")));
        }
        if channels == 0 {
            return Err(Error::Argument("frame needs at least one channel".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::Argument(format!(
                "frame data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Argument(format!("frame value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a frame from a per-sample closure; values are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(width > 0 && height > 0 && channels > 0);
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp_unit(f(x, y, c)));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self::from_fn(width, height, channels, |_, _, _| value)
    }

    pub(crate) fn from_raw_clamped(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn rect(&self) -> DomainRect {
        DomainRect::new([0, 0], self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Single channel `c` as a plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn sample_bilinear(&self, p: [f64; 2]) -> Result<Vec<f64>> {
        self.check_in_domain(p)?;
        let mut out = vec![0.0; self.channels];
        self.bilinear_into(p, &mut out);
        Ok(out)
    }

    pub fn sample_nearest(&self, p: [f64; 2]) -> Result<Vec<f64>> {
        self.check_in_domain(p)?;
        let (x, y) = nearest_index(p, self.width, self.height);
        Ok(self.pixel(x, y).to_vec())
    }

    /// Bilinear lookup without the domain check; coordinates are clamped to
    /// the pixel-center rectangle.
    #[inline]
    pub(crate) fn bilinear_into(&self, p: [f64; 2], out: &mut [f64]) {
        let taps = bilinear_taps(p, self.width, self.height);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (idx, w) in taps.iter() {
            if *w == 0.0 {
                continue;
            }
            let base = idx * self.channels;
            for c in 0..self.channels {
                out[c] += w * self.data[base + c];
            }
        }
    }

    fn check_in_domain(&self, p: [f64; 2]) -> Result<()> {
        if in_sampling_rect(p, self.width, self.height) {
            Ok(())
        } else {
            Err(Error::Sampling {
                x: p[0],
                y: p[1],
                width: self.width,
                height: self.height,
            })
        }
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// True when `p` (local coordinates) lies in the grid extended by the sampling margin.
#[inline]
pub fn in_sampling_rect(p: [f64; 2], width: usize, height: usize) -> bool {
    let m = SAMPLE_MARGIN + MARGIN_EPS;
    p[0].is_finite()
        && p[1].is_finite()
        && p[0] >= -m
        && p[1] >= -m
        && p[0] <= width as f64 - 1.0 + m
        && p[1] <= height as f64 - 1.0 + m
}

/// Nearest pixel index, ties rounded toward the smaller index, clamped to the grid.
#[inline]
pub fn nearest_index(p: [f64; 2], width: usize, height: usize) -> (usize, usize) {
    let round = |v: f64, n: usize| -> usize {
        let i = (v - 0.5).ceil();
        i.clamp(0.0, (n - 1) as f64) as usize
    };
    (round(p[0], width), round(p[1], height))
}

/// Four bilinear taps `(linear index, weight)` for a clamped sample point.
#[inline]
pub(crate) fn bilinear_taps(p: [f64; 2], width: usize, height: usize) -> [(usize, f64); 4] {
    let x = p[0].clamp(0.0, (width - 1) as f64);
    let y = p[1].clamp(0.0, (height - 1) as f64);
    let x0 = (x.floor() as usize).min(width - 1);
    let y0 = (y.floor() as usize).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    [
        (y0 * width + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * width + x1, fx * (1.0 - fy)),
        (y1 * width + x0, (1.0 - fx) * fy),
        (y1 * width + x1, fx * fy),
    ]
}

/// Like [`bilinear_taps`], but extrapolates linearly from the border pixel pair
/// inside the sampling margin (weights may go negative there) and holds the
/// margin value beyond it.
#[inline]
pub(crate) fn margin_taps(p: [f64; 2], width: usize, height: usize) -> [(usize, f64); 4] {
    let axis = |v: f64, n: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let v = v.clamp(-SAMPLE_MARGIN, n as f64 - 1.0 + SAMPLE_MARGIN);
        let i0 = (v.floor().max(0.0) as usize).min(n - 2);
        (i0, i0 + 1, v - i0 as f64)
    };
    let (x0, x1, fx) = axis(p[0], width);
    let (y0, y1, fy) = axis(p[1], height);
    [
        (y0 * width + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * width + x1, fx * (1.0 - fy)),
        (y1 * width + x0, (1.0 - fx) * fy),
        (y1 * width + x1, fx * fy),
    ]
}

/// Bilinear interpolation of a scalar plane.
#[inline]
pub(crate) fn bilinear_plane(plane: &[f64], width: usize, height: usize, p: [f64; 2]) -> f64 {
    bilinear_taps(p, width, height)
        .iter()
        .map(|(i, w)| if *w == 0.0 { 0.0 } else { w * plane[*i] })
        .sum()
}

/// Binary per-pixel map; `true` marks a pixel to inpaint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Argument(format!(
                "mask {}x{} with {} entries",
                width,
                height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|m| *m)
    }

    pub fn matches(&self, frame: &Frame) -> bool {
        self.width == frame.width() && self.height == frame.height()
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn complement(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|m| !m).collect(),
        }
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Geometry("mask dimensions differ".into()));
        }
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    /// Intersection-over-union; two empty masks score 1.
    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count();
        let uni = self.data.iter().zip(&other.data).filter(|(a, b)| **a || **b).count();
        if uni == 0 {
            1.0
        } else {
            inter as f64 / uni as f64
        }
    }

    /// Nearest-pixel lookup; points outside the sampling rectangle read as masked.
    #[inline]
    pub fn nearest(&self, p: [f64; 2]) -> bool {
        if !in_sampling_rect(p, self.width, self.height) {
            return true;
        }
        let (x, y) = nearest_index(p, self.width, self.height);
        self.get(x, y)
    }

    /// True if any bilinear tap with positive weight at `p` is masked.
    #[inline]
    pub(crate) fn any_tap(&self, p: [f64; 2]) -> bool {
        bilinear_taps(p, self.width, self.height)
            .iter()
            .any(|(i, w)| *w > 0.0 && self.data[*i])
    }
}

/// Axis-aligned pixel rectangle placed in a global coordinate system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DomainRect {
    pub origin: [i64; 2],
    pub width: usize,
    pub height: usize,
}

impl DomainRect {
    pub fn new(origin: [i64; 2], width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "empty domain rectangle");
        Self {
            origin,
            width,
            height,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One past the last pixel, in global coordinates.
    pub fn end(&self) -> [i64; 2] {
        [
            self.origin[0] + self.width as i64,
            self.origin[1] + self.height as i64,
        ]
    }

    #[inline]
    pub fn to_local(&self, g: [f64; 2]) -> [f64; 2] {
        [g[0] - self.origin[0] as f64, g[1] - self.origin[1] as f64]
    }

    #[inline]
    pub fn to_global(&self, l: [f64; 2]) -> [f64; 2] {
        [l[0] + self.origin[0] as f64, l[1] + self.origin[1] as f64]
    }

    #[inline]
    pub fn pixel_global(&self, x: usize, y: usize) -> [f64; 2] {
        [
            (self.origin[0] + x as i64) as f64,
            (self.origin[1] + y as i64) as f64,
        ]
    }

    /// Whether a global point lies in the rectangle widened by the sampling margin.
    #[inline]
    pub fn contains(&self, g: [f64; 2]) -> bool {
        in_sampling_rect(self.to_local(g), self.width, self.height)
    }

    pub fn intersect(&self, other: &DomainRect) -> Option<DomainRect> {
        let x0 = self.origin[0].max(other.origin[0]);
        let y0 = self.origin[1].max(other.origin[1]);
        let x1 = self.end()[0].min(other.end()[0]);
        let y1 = self.end()[1].min(other.end()[1]);
        if x1 <= x0 || y1 <= y0 {
            None
        } else {
            Some(DomainRect::new([x0, y0], (x1 - x0) as usize, (y1 - y0) as usize))
        }
    }

    /// Smallest integer rectangle whose pixel centers cover every point.
    pub fn bounding(points: impl IntoIterator<Item = [f64; 2]>) -> Option<DomainRect> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            if !(p[0].is_finite() && p[1].is_finite()) {
                continue;
            }
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !lo[0].is_finite() {
            return None;
        }
        // a point within the half-pixel margin of a center does not need a new row
        let x0 = (lo[0] + SAMPLE_MARGIN).floor() as i64;
        let y0 = (lo[1] + SAMPLE_MARGIN).floor() as i64;
        let x1 = (hi[0] - SAMPLE_MARGIN).ceil() as i64;
        let y1 = (hi[1] - SAMPLE_MARGIN).ceil() as i64;
        Some(DomainRect::new(
            [x0, y0],
            (x1 - x0 + 1).max(1) as usize,
            (y1 - y0 + 1).max(1) as usize,
        ))
    }
}

/// Axis-aligned hull of a nonempty list of rectangles.
pub fn rect_union(rects: &[DomainRect]) -> Result<DomainRect> {
    let first = rects
        .first()
        .ok_or_else(|| Error::Argument("rect_union of an empty list".into()))?;
    let (mut lo, mut hi) = (first.origin, first.end());
    for r in &rects[1..] {
        let e = r.end();
        lo = [lo[0].min(r.origin[0]), lo[1].min(r.origin[1])];
        hi = [hi[0].max(e[0]), hi[1].max(e[1])];
    }
    Ok(DomainRect::new(
        lo,
        (hi[0] - lo[0]) as usize,
        (hi[1] - lo[1]) as usize,
    ))
}

/// Dense map from every pixel of `src` to a global point meant to lie in `dst`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    src: DomainRect,
    dst: DomainRect,
    map: Vec<[f64; 2]>,
    valid: Vec<bool>,
}

impl WarpField {
    /// Builds a field; `valid` is cleared wherever a target leaves `dst`.
    pub fn new(src: DomainRect, dst: DomainRect, map: Vec<[f64; 2]>, valid: Vec<bool>) -> Result<Self> {
        if map.len() != src.len() || valid.len() != src.len() {
            return Err(Error::Argument(format!(
                "warp buffers ({}, {}) do not match source {}x{}",
                map.len(),
                valid.len(),
                src.width,
                src.height
            )));
        }
        if map.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Numerical("non-finite warp coordinate".into()));
        }
        let valid = valid
            .into_iter()
            .zip(&map)
            .map(|(v, p)| v && dst.contains(*p))
            .collect();
        Ok(Self {
            src,
            dst,
            map,
            valid,
        })
    }

    /// Field from a closure over global source coordinates.
    pub fn from_fn(src: DomainRect, dst: DomainRect, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> Self {
        let mut map = Vec::with_capacity(src.len());
        for y in 0..src.height {
            for x in 0..src.width {
                map.push(f(src.pixel_global(x, y)));
            }
        }
        let valid = vec![true; map.len()];
        Self::new(src, dst, map, valid).expect("closure produced a non-finite warp")
    }

    pub fn identity(rect: DomainRect) -> Self {
        Self::from_fn(rect, rect, |p| p)
    }

    pub fn translation(src: DomainRect, dst: DomainRect, t: [f64; 2]) -> Self {
        Self::from_fn(src, dst, |p| [p[0] + t[0], p[1] + t[1]])
    }

    /// Field from per-pixel displacements `(u, v)` relative to the source pixel.
    pub fn from_displacement(src: DomainRect, dst: DomainRect, disp: &[[f64; 2]]) -> Result<Self> {
        if disp.len() != src.len() {
            return Err(Error::Argument("displacement length mismatch".into()));
        }
        let map = (0..src.len())
            .map(|i| {
                let g = src.pixel_global(i % src.width, i / src.width);
                [g[0] + disp[i][0], g[1] + disp[i][1]]
            })
            .collect();
        Self::new(src, dst, map, vec![true; disp.len()])
    }

    pub fn src(&self) -> DomainRect {
        self.src
    }

    pub fn dst(&self) -> DomainRect {
        self.dst
    }

    pub fn map(&self) -> &[[f64; 2]] {
        &self.map
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        self.map[y * self.src.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.src.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Per-pixel displacement `map(p) - p`.
    pub fn displacement(&self) -> Vec<[f64; 2]> {
        self.map
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let g = self.src.pixel_global(i % self.src.width, i / self.src.width);
                [m[0] - g[0], m[1] - g[1]]
            })
            .collect()
    }

    /// Same map with a new target rectangle; validity is recomputed from scratch
    /// (extrapolation flags are dropped).
    pub fn with_dst(&self, dst: DomainRect) -> WarpField {
        let valid = self.map.iter().map(|p| dst.contains(*p)).collect();
        WarpField {
            src: self.src,
            dst,
            map: self.map.clone(),
            valid,
        }
    }

    pub fn with_valid(mut self, valid: &[bool]) -> WarpField {
        for (v, keep) in self.valid.iter_mut().zip(valid) {
            *v &= *keep;
        }
        self
    }

    /// Evaluates the map at a global source point by bilinear interpolation of
    /// the displacement. Points beyond the source rectangle extrapolate the
    /// border displacement and report `in_domain = false`.
    pub fn eval(&self, g: [f64; 2]) -> WarpSample {
        let l = self.src.to_local(g);
        let in_domain = in_sampling_rect(l, self.src.width, self.src.height);
        let taps = margin_taps(l, self.src.width, self.src.height);
        let mut disp = [0.0; 2];
        let mut valid = in_domain;
        for (i, w) in taps.iter() {
            if *w == 0.0 {
                continue;
            }
            let m = self.map[*i];
            let s = self.src.pixel_global(i % self.src.width, i / self.src.width);
            disp[0] += w * (m[0] - s[0]);
            disp[1] += w * (m[1] - s[1]);
            valid &= self.valid[*i];
        }
        WarpSample {
            point: [g[0] + disp[0], g[1] + disp[1]],
            valid,
            in_domain,
        }
    }
}

/// Result of evaluating a warp at an arbitrary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpSample {
    pub point: [f64; 2],
    /// All contributing taps valid and the query inside the source domain.
    pub valid: bool,
    pub in_domain: bool,
}
