//! Dense flow estimation and warp-field algebra.
//!
//! The estimator is pluggable through [`FlowBackend`]; the built-in
//! [`VariationalFlow`] is a coarse-to-fine quadratic (Horn–Schunck style)
//! solver whose data term is switched off wherever either endpoint is masked.

mod flo;
mod ops;
mod variational;

pub use flo::{read_flo, read_flo_file, write_flo, write_flo_file, FLO_MAGIC};
pub use ops::{check_fb_consistency, compose, harmonic_extend, reframe_src};
pub use variational::VariationalFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainRect, Frame, Mask, WarpField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    /// Weight of the quadratic smoothness term relative to the data term.
    pub smoothness_weight: f64,
    /// Upper bound on relaxation sweeps per warping pass on each level.
    pub iterations_per_level: usize,
    /// Stop a pass once the mean per-sweep update falls below this (px).
    pub convergence_tol: f64,
    /// Image re-warping passes per level.
    pub warps_per_level: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 4,
            smoothness_weight: 0.05,
            iterations_per_level: 200,
            convergence_tol: 1e-3,
            warps_per_level: 3,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0 {
            return Err(Error::Argument("pyramid_levels must be >= 1".into()));
        }
        if !(self.smoothness_weight > 0.0) {
            return Err(Error::Argument("smoothness_weight must be > 0".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Argument("convergence_tol must be > 0".into()));
        }
        if self.warps_per_level == 0 {
            return Err(Error::Argument("warps_per_level must be >= 1".into()));
        }
        Ok(())
    }
}

/// One side of a flow problem: an image placed at `rect` with its mask.
#[derive(Debug, Clone, Copy)]
pub struct FlowInput<'a> {
    pub frame: &'a Frame,
    pub rect: DomainRect,
    pub mask: &'a Mask,
}

impl<'a> FlowInput<'a> {
    pub fn new(frame: &'a Frame, rect: DomainRect, mask: &'a Mask) -> Self {
        Self { frame, rect, mask }
    }

    /// Frame at the origin.
    pub fn at_origin(frame: &'a Frame, mask: &'a Mask) -> Self {
        Self::new(frame, frame.rect(), mask)
    }

    fn check(&self) -> Result<()> {
        if self.rect.width != self.frame.width() || self.rect.height != self.frame.height() {
            return Err(Error::Geometry("flow input rect does not match its frame".into()));
        }
        if !self.mask.matches(self.frame) {
            return Err(Error::Geometry("flow input mask does not match its frame".into()));
        }
        Ok(())
    }
}

/// A dense flow estimator mapping every pixel of `src` into `dst`.
pub trait FlowBackend: Sync {
    /// Returns `w : src.rect -> dst.rect` with `src(p) ~ dst(w(p))`. `init`,
    /// when given, must have `src.rect` as its source domain.
    fn estimate(&self, src: FlowInput<'_>, dst: FlowInput<'_>, init: Option<&WarpField>) -> Result<WarpField>;
}

/// Flow between two equally sized frames with the built-in backend.
pub fn compute_flow(src: &Frame, dst: &Frame, src_mask: &Mask, dst_mask: &Mask, params: &FlowParams) -> Result<WarpField> {
    if !src.same_shape(dst) {
        return Err(Error::Argument(format!(
            "flow frames differ: {}x{}x{} vs {}x{}x{}",
            src.width(),
            src.height(),
            src.channels(),
            dst.width(),
            dst.height(),
            dst.channels()
        )));
    }
    VariationalFlow::new(*params)?.estimate(
        FlowInput::at_origin(src, src_mask),
        FlowInput::at_origin(dst, dst_mask),
        None,
    )
}

/// Mean endpoint error between two fields over `src` pixels accepted by `keep`.
pub fn mean_endpoint_error(a: &WarpField, b: &WarpField, keep: impl Fn(usize, usize) -> bool) -> f64 {
    let w = a.src().width;
    let (mut s, mut n) = (0.0, 0usize);
    for (i, (p, q)) in a.map().iter().zip(b.map()).enumerate() {
        if keep(i % w, i / w) {
            s += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
