//! Scene template estimation.
//!
//! The template `f` lives on a rectangle `Omega` in the key frame's coordinate
//! system. Each frame `i` carries a warp `w_i : Omega -> D` and its inverse
//! `w_i^-1 : D -> Omega`; the template is the Jacobian-weighted average of all
//! unmasked observations pulled back through the warps.

mod joint;
mod refine;
mod sliding;

pub use joint::{
    compute_adjacent_flows, data_energy, initialize_state, optimize, run_joint_optimization, AdjacentFlows,
    JointParams,
};
pub(crate) use joint::check_inputs;
pub use refine::{refine_warp, Refined, MIN_TEMPLATE_COVERAGE};
pub use sliding::{sliding_window_run, SlidingOutput, SlidingParams, SweepResult};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{bilinear_taps, in_sampling_rect, nearest_index, DomainRect, Frame, Mask, WarpField};

/// Accumulated weight at or below which a template pixel counts as unobserved.
pub const WEIGHT_EPS: f64 = 1e-6;

/// Radiance over `Omega` with the numerator and weight it was averaged from.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTemplate {
    domain: DomainRect,
    channels: usize,
    radiance: Vec<f64>,
    weight: Vec<f64>,
    numerator: Vec<f64>,
}

impl SceneTemplate {
    pub fn from_parts(domain: DomainRect, channels: usize, numerator: Vec<f64>, weight: Vec<f64>) -> Result<Self> {
        if weight.len() != domain.len() || numerator.len() != domain.len() * channels {
            return Err(Error::Argument("template buffers do not match the domain".into()));
        }
        if weight.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Numerical("negative template weight".into()));
        }
        let radiance = numerator
            .chunks_exact(channels)
            .zip(&weight)
            .flat_map(|(n, w)| {
                n.iter()
                    .map(move |v| if *w > WEIGHT_EPS { v / w } else { f64::NAN })
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(Self {
            domain,
            channels,
            radiance,
            weight,
            numerator,
        })
    }

    /// Template equal to a single frame on its own domain.
    pub fn from_frame(frame: &Frame) -> Self {
        Self::from_parts(
            frame.rect(),
            frame.channels(),
            frame.data().to_vec(),
            vec![1.0; frame.len_pixels()],
        )
        .expect("frame-sized buffers")
    }

    pub fn domain(&self) -> DomainRect {
        self.domain
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Per-sample radiance, `NaN` where undefined.
    pub fn radiance(&self) -> &[f64] {
        &self.radiance
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    #[inline]
    pub fn is_defined_index(&self, i: usize) -> bool {
        self.weight[i] > WEIGHT_EPS
    }

    pub fn is_defined(&self, x: usize, y: usize) -> bool {
        self.is_defined_index(y * self.domain.width + x)
    }

    pub fn defined_count(&self) -> usize {
        self.weight.iter().filter(|w| **w > WEIGHT_EPS).count()
    }

    /// Mask over `Omega` of unobserved pixels.
    pub fn undefined_mask(&self) -> Mask {
        Mask::from_fn(self.domain.width, self.domain.height, |x, y| !self.is_defined(x, y))
    }

    /// Radiance as a frame; undefined pixels are filled with `fill`.
    pub fn to_frame(&self, fill: &[f64]) -> Frame {
        let k = self.channels;
        Frame::from_fn(self.domain.width, self.domain.height, k, |x, y, c| {
            let i = y * self.domain.width + x;
            if self.is_defined_index(i) {
                self.radiance[i * k + c]
            } else {
                fill[c.min(fill.len() - 1)]
            }
        })
    }

    /// Nearest-pixel radiance at a global point; `None` outside `Omega` or
    /// where unobserved.
    pub fn sample_nearest(&self, g: [f64; 2]) -> Option<&[f64]> {
        let l = self.domain.to_local(g);
        if !in_sampling_rect(l, self.domain.width, self.domain.height) {
            return None;
        }
        let (x, y) = nearest_index(l, self.domain.width, self.domain.height);
        let i = y * self.domain.width + x;
        self.is_defined_index(i)
            .then(|| &self.radiance[i * self.channels..(i + 1) * self.channels])
    }

    /// Bilinear radiance at a global point; `None` if any contributing tap is
    /// unobserved.
    pub fn sample_bilinear(&self, g: [f64; 2], out: &mut [f64]) -> Option<()> {
        let l = self.domain.to_local(g);
        if !in_sampling_rect(l, self.domain.width, self.domain.height) {
            return None;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, w) in bilinear_taps(l, self.domain.width, self.domain.height) {
            if w == 0.0 {
                continue;
            }
            if !self.is_defined_index(i) {
                return None;
            }
            for c in 0..self.channels {
                out[c] += w * self.radiance[i * self.channels + c];
            }
        }
        Some(())
    }

    /// Restriction to `rect` (which must lie inside the domain).
    pub fn crop(&self, rect: DomainRect) -> Result<SceneTemplate> {
        if self.domain.intersect(&rect) != Some(rect) {
            return Err(Error::Geometry("crop rectangle leaves the template domain".into()));
        }
        let k = self.channels;
        let mut num = Vec::with_capacity(rect.len() * k);
        let mut wt = Vec::with_capacity(rect.len());
        for y in 0..rect.height {
            for x in 0..rect.width {
                let gx = (rect.origin[0] - self.domain.origin[0]) as usize + x;
                let gy = (rect.origin[1] - self.domain.origin[1]) as usize + y;
                let i = gy * self.domain.width + gx;
                wt.push(self.weight[i]);
                num.extend_from_slice(&self.numerator[i * k..(i + 1) * k]);
            }
        }
        SceneTemplate::from_parts(rect, k, num, wt)
    }

    /// Relative L2 change of radiance against `prev` over pixels both define.
    pub fn relative_change(&self, prev: &SceneTemplate) -> f64 {
        let Some(common) = self.domain.intersect(&prev.domain) else {
            return f64::INFINITY;
        };
        let (mut diff, mut norm) = (0.0, 0.0);
        for gy in common.origin[1]..common.end()[1] {
            for gx in common.origin[0]..common.end()[0] {
                let a = self.index_of(gx, gy);
                let b = prev.index_of(gx, gy);
                if !self.is_defined_index(a) || !prev.is_defined_index(b) {
                    continue;
                }
                for c in 0..self.channels {
                    let (va, vb) = (self.radiance[a * self.channels + c], prev.radiance[b * prev.channels + c]);
                    diff += (va - vb).powi(2);
                    norm += vb * vb;
                }
            }
        }
        if norm == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (diff / norm).sqrt()
        }
    }

    fn index_of(&self, gx: i64, gy: i64) -> usize {
        (gy - self.domain.origin[1]) as usize * self.domain.width + (gx - self.domain.origin[0]) as usize
    }
}

/// Working state of the joint template/warp inference.
#[derive(Debug, Clone)]
pub struct InferenceState {
    pub frames: Vec<Frame>,
    pub masks: Vec<Mask>,
    /// `warps[i] : Omega -> D_i`.
    pub warps: Vec<WarpField>,
    /// `inv_warps[i] : D_i -> Omega`.
    pub inv_warps: Vec<WarpField>,
    pub template: SceneTemplate,
    pub key_frame: usize,
    /// Frames whose last refinement was skipped for lack of template coverage.
    pub refine_skipped: Vec<bool>,
}

impl InferenceState {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.frames.len();
        if self.masks.len() != n || self.warps.len() != n || self.inv_warps.len() != n {
            return Err(Error::Argument("inference state lists differ in length".into()));
        }
        for i in 0..n {
            if self.warps[i].src() != self.template.domain() || self.inv_warps[i].src() != self.frames[i].rect() {
                return Err(Error::Geometry(format!("warp domains of frame {i} are inconsistent")));
            }
        }
        Ok(())
    }
}

/// `det grad w` at pixel `(x, y)` of `w.src`, by central differences (one-sided
/// at the border), clamped below at zero.
pub fn jacobian_det(w: &WarpField, x: usize, y: usize) -> f64 {
    let src = w.src();
    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(src.width - 1));
    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(src.height - 1));
    let dx = |a: [f64; 2], b: [f64; 2], h: usize| {
        if h == 0 {
            None
        } else {
            Some([(b[0] - a[0]) / h as f64, (b[1] - a[1]) / h as f64])
        }
    };
    // a degenerate axis (width or height 1) has unit stretch
    let gx = dx(w.at(xl, y), w.at(xr, y), xr - xl).unwrap_or([1.0, 0.0]);
    let gy = dx(w.at(x, yu), w.at(x, yd), yd - yu).unwrap_or([0.0, 1.0]);
    (gx[0] * gy[1] - gx[1] * gy[0]).max(0.0)
}

fn jacobian_plane(w: &WarpField) -> Vec<f64> {
    let src = w.src();
    (0..src.len())
        .map(|i| jacobian_det(w, i % src.width, i / src.width))
        .collect()
}

/// Whether frame `i` contributes an observation at point `q` of its domain:
/// inside `D`, not masked at the nearest pixel, and no masked pixel among the
/// bilinear taps used to read the value.
#[inline]
pub(crate) fn observes(mask: &Mask, q: [f64; 2]) -> bool {
    in_sampling_rect(q, mask.width(), mask.height()) && !mask.nearest(q) && !mask.any_tap(q)
}

/// Jacobian-weighted average of unmasked observations over the common source
/// domain of `warps` (`Omega`).
pub fn accumulate_template(frames: &[Frame], masks: &[Mask], warps: &[WarpField]) -> Result<SceneTemplate> {
    let first = warps
        .first()
        .ok_or_else(|| Error::Argument("template needs at least one frame".into()))?;
    if frames.len() != warps.len() || masks.len() != warps.len() {
        return Err(Error::Argument("frames, masks and warps differ in count".into()));
    }
    let domain = first.src();
    let k = frames[0].channels();
    for (i, ((f, m), w)) in frames.iter().zip(masks).zip(warps).enumerate() {
        if w.src() != domain {
            return Err(Error::Geometry(format!("warp {i} has a different source domain")));
        }
        if f.channels() != k || !m.matches(f) || w.dst() != f.rect() {
            return Err(Error::Geometry(format!("frame {i} does not match its mask or warp")));
        }
    }
    let jac: Vec<Vec<f64>> = warps.par_iter().map(jacobian_plane).collect();

    let width = domain.width;
    let mut numerator = vec![0.0; domain.len() * k];
    let mut weight = vec![0.0; domain.len()];
    numerator
        .par_chunks_mut(width * k)
        .zip(weight.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (num_row, wt_row))| {
            let mut buf = vec![0.0; k];
            for x in 0..width {
                let p = y * width + x;
                for i in 0..frames.len() {
                    let w = &warps[i];
                    if !w.valid()[p] {
                        continue;
                    }
                    let q = w.dst().to_local(w.map()[p]);
                    if !observes(&masks[i], q) {
                        continue;
                    }
                    let j = jac[i][p];
                    if j == 0.0 {
                        continue;
                    }
                    frames[i].bilinear_into(q, &mut buf);
                    for c in 0..k {
                        num_row[x * k + c] += j * buf[c];
                    }
                    wt_row[x] += j;
                }
            }
        });
    SceneTemplate::from_parts(domain, k, numerator, weight)
}

/// `Omega` as the bounding rectangle of every back-warped image domain.
pub fn template_domain(inv_warps: &[WarpField]) -> Result<DomainRect> {
    let rects: Vec<DomainRect> = inv_warps
        .iter()
        .filter_map(|w| DomainRect::bounding(w.map().iter().copied()))
        .collect();
    crate::grid::rect_union(&rects)
}
