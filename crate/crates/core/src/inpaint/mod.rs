//! Filling masked pixels from the template and from other frames.

mod mask;
mod propagate;

pub use mask::{close_3x3, estimate_mask, remove_small_components, MIN_COMPONENT_PIXELS};
pub use propagate::propagate_frame_to_frame;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{clamp_unit, Frame, Mask};
use crate::laplace::harmonic_fill_plane;
use crate::template::{InferenceState, SceneTemplate};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct InpaintParams {
    /// Weight of the absolute-value fidelity to cross-frame samples.
    pub beta: f64,
    /// Squared residual threshold for mask estimation.
    pub alpha: f64,
    /// Cap on cross-frame samples per pixel (nearest frames first).
    pub max_sample_frames: usize,
}

impl Default for InpaintParams {
    fn default() -> Self {
        Self {
            beta: 0.05,
            alpha: 0.1,
            max_sample_frames: 20,
        }
    }
}

impl InpaintParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Argument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Argument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Minimiser of `(P - f)^2 + beta * sum_i |P - s_i|`: the median of the samples
/// together with `m + 1` values `f + (2j - m) * beta / 2`. Without `f` it is the
/// plain (lower) median of the samples; `None` if both are absent.
pub fn median_inpaint_pixel(samples: &[f64], f_val: Option<f64>, beta: f64) -> Option<f64> {
    let m = samples.len();
    let mut all = Vec::with_capacity(2 * m + 1);
    all.extend_from_slice(samples);
    match f_val {
        Some(f) => {
            if m == 0 {
                return Some(f);
            }
            all.extend((0..=m).map(|j| f + (2.0 * j as f64 - m as f64) * beta / 2.0));
        }
        None if m == 0 => return None,
        None => {}
    }
    all.sort_by(f64::total_cmp);
    Some(all[(all.len() - 1) / 2])
}

/// Template value at the nearest pixel of `y`, if observed.
fn template_at<'a>(template: &'a SceneTemplate, y: [f64; 2]) -> Option<&'a [f64]> {
    template.sample_nearest(y)
}

/// Cross-frame samples for pixel `(x, y)` of frame `t`, routed through the
/// template: `q = w_i(w_t^-1(x))`. A frame contributes the nearest pixel at `q`
/// when the composed warp is valid and `q` lands outside its mask.
pub fn gather_samples(state: &InferenceState, t: usize, x: usize, y: usize, max: usize) -> Vec<Vec<f64>> {
    let inv = &state.inv_warps[t];
    let mut out = Vec::new();
    if !inv.is_valid(x, y) {
        return out;
    }
    let p = inv.at(x, y);
    let n = state.len();
    let order = (1..n).flat_map(|d| {
        let lo = t.checked_sub(d);
        let hi = (t + d < n).then_some(t + d);
        lo.into_iter().chain(hi)
    });
    for i in order {
        if out.len() >= max {
            break;
        }
        let s = state.warps[i].eval(p);
        if !s.valid {
            continue;
        }
        let q = state.warps[i].dst().to_local(s.point);
        if state.masks[i].nearest(q) {
            continue;
        }
        // nearest() already rejected points outside the frame
        let (qx, qy) = crate::grid::nearest_index(q, state.frames[i].width(), state.frames[i].height());
        out.push(state.frames[i].pixel(qx, qy).to_vec());
    }
    out
}

/// Result of inpainting one frame.
#[derive(Debug, Clone)]
pub struct InpaintedFrame {
    pub frame: Frame,
    /// Masked pixels with neither a template value nor any sample.
    pub unfilled: Mask,
    /// Contributors per pixel (samples plus one for the template); zero
    /// outside the mask.
    pub counts: Vec<u32>,
}

/// Inpaints frame `t`; pixels left without data are reported in `unfilled`
/// and keep their input value.
pub fn inpaint_frame_raw(state: &InferenceState, t: usize, params: &InpaintParams) -> Result<InpaintedFrame> {
    if t >= state.len() {
        return Err(Error::Argument(format!("frame {t} out of range 0..{}", state.len())));
    }
    params.validate()?;
    let frame = &state.frames[t];
    let mask = &state.masks[t];
    let (w, k) = (frame.width(), frame.channels());
    let mut data = frame.data().to_vec();
    let mut counts = vec![0u32; frame.len_pixels()];
    let mut unfilled = vec![false; frame.len_pixels()];
    data.par_chunks_mut(w * k)
        .zip(counts.par_chunks_mut(w))
        .zip(unfilled.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, ((row, cnt), unf))| {
            let mut channel = Vec::new();
            for x in 0..w {
                if !mask.get(x, y) {
                    continue;
                }
                let samples = gather_samples(state, t, x, y, params.max_sample_frames);
                let f = if state.inv_warps[t].is_valid(x, y) {
                    template_at(&state.template, state.inv_warps[t].at(x, y))
                } else {
                    None
                };
                cnt[x] = samples.len() as u32 + f.is_some() as u32;
                if cnt[x] == 0 {
                    unf[x] = true;
                    continue;
                }
                for c in 0..k {
                    channel.clear();
                    channel.extend(samples.iter().map(|s| s[c]));
                    let v = median_inpaint_pixel(&channel, f.map(|f| f[c]), params.beta)
                        .expect("at least one contributor");
                    row[x * k + c] = clamp_unit(v);
                }
            }
        });
    Ok(InpaintedFrame {
        frame: Frame::from_raw_clamped(w, frame.height(), k, data),
        unfilled: Mask::new(w, frame.height(), unfilled)?,
        counts,
    })
}

/// Inpaints frame `t` and diffusion-fills whatever no frame revealed.
pub fn inpaint_frame(state: &InferenceState, t: usize, params: &InpaintParams) -> Result<Frame> {
    let raw = inpaint_frame_raw(state, t, params)?;
    if raw.unfilled.is_empty() {
        Ok(raw.frame)
    } else {
        diffusion_fill(&raw.frame, &raw.unfilled)
    }
}

/// Harmonic fill of `holes`, per channel, from the surrounding pixels.
pub fn diffusion_fill(frame: &Frame, holes: &Mask) -> Result<Frame> {
    if !holes.matches(frame) {
        return Err(Error::Geometry("hole mask does not match the frame".into()));
    }
    if holes.is_empty() {
        return Ok(frame.clone());
    }
    let (w, h, k) = (frame.width(), frame.height(), frame.channels());
    let mut data = frame.data().to_vec();
    for c in 0..k {
        let mut plane = frame.channel(c);
        harmonic_fill_plane(&mut plane, w, h, holes.data())?;
        for (i, v) in plane.into_iter().enumerate() {
            data[i * k + c] = v;
        }
    }
    Ok(Frame::from_raw_clamped(w, h, k, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median_inpaint_pixel(&[0.1, 0.5], Some(0.3), 0.1), Some(0.3));
        assert_eq!(median_inpaint_pixel(&[0.9, 0.1, 0.7], Some(0.42), 0.0), Some(0.42));
        assert_eq!(median_inpaint_pixel(&[0.9, 0.1, 0.7], Some(0.42), 10.0), Some(0.7));
        assert_eq!(median_inpaint_pixel(&[], Some(0.25), 0.05), Some(0.25));
        assert_eq!(median_inpaint_pixel(&[0.6, 0.2], None, 0.05), Some(0.2));
        assert_eq!(median_inpaint_pixel(&[], None, 0.05), None);
    }

    #[test]
    fn diffusion_examples() {
        let c = Frame::filled(9, 7, 2, 0.37);
        let holes = Mask::from_fn(9, 7, |x, y| (2..6).contains(&x) && (1..5).contains(&y));
        let out = diffusion_fill(&c, &holes).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-6));

        let ramp = Frame::from_fn(12, 10, 1, |x, y, _| 0.05 * x as f64 + 0.03 * y as f64);
        let holes = Mask::from_fn(12, 10, |x, y| (3..9).contains(&x) && (2..8).contains(&y));
        let mut damaged = ramp.data().to_vec();
        for (i, hm) in holes.data().iter().enumerate() {
            if *hm {
                damaged[i] = 0.9;
            }
        }
        let out = diffusion_fill(&Frame::new(12, 10, 1, damaged).unwrap(), &holes).unwrap();
        for (a, b) in out.data().iter().zip(ramp.data()) {
            assert!((a - b).abs() < 1e-2);
        }

        let strip = Frame::new(5, 1, 1, vec![0.0, 0.5, 0.5, 0.5, 1.0]).unwrap();
        let holes = Mask::from_fn(5, 1, |x, _| (1..4).contains(&x));
        let out = diffusion_fill(&strip, &holes).unwrap();
        for (x, want) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
            assert!((out.get(x, 0, 0) - want).abs() < 1e-3);
        }

        assert!(matches!(
            diffusion_fill(&strip, &Mask::full(5, 1)),
            Err(Error::NoBoundary)
        ));
    }

    #[test]
    fn params_validate() {
        assert!(InpaintParams::default().validate().is_ok());
        assert!(InpaintParams { beta: -1.0, ..Default::default() }.validate().is_err());
        assert!(InpaintParams { alpha: 0.0, ..Default::default() }.validate().is_err());
    }
}
