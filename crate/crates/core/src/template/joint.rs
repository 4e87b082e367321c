use rayon::prelude::*;

use super::{accumulate_template, refine_warp, template_domain, InferenceState};
use crate::error::{Error, Result};
use crate::flow::{compose, reframe_src, FlowBackend, FlowInput};
use crate::grid::{DomainRect, Frame, Mask, WarpField};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct JointParams {
    /// Upper bound on refine/re-accumulate rounds.
    pub max_outer: usize,
    /// Stop once the template's relative L2 change falls below this.
    pub tol: f64,
    /// Refine warps against the template; when false the chained adjacent
    /// flows are used as they are.
    pub refine: bool,
}

impl Default for JointParams {
    fn default() -> Self {
        Self {
            max_outer: 2,
            tol: 1e-3,
            refine: true,
        }
    }
}

/// Flows between consecutive frames.
#[derive(Debug, Clone)]
pub struct AdjacentFlows {
    /// `forward[t] : D_t -> D_{t+1}`.
    pub forward: Vec<WarpField>,
    /// `backward[t] : D_{t+1} -> D_t`.
    pub backward: Vec<WarpField>,
}

impl AdjacentFlows {
    pub fn check(&self, frames: usize) -> Result<()> {
        let n = frames.saturating_sub(1);
        if self.forward.len() != n || self.backward.len() != n {
            return Err(Error::Argument(format!(
                "expected {n} adjacent flows each way, got {} and {}",
                self.forward.len(),
                self.backward.len()
            )));
        }
        Ok(())
    }
}

pub fn compute_adjacent_flows(frames: &[Frame], masks: &[Mask], backend: &dyn FlowBackend) -> Result<AdjacentFlows> {
    check_inputs(frames, masks)?;
    let pairs: Vec<(WarpField, WarpField)> = (0..frames.len().saturating_sub(1))
        .into_par_iter()
        .map(|t| {
            let a = FlowInput::at_origin(&frames[t], &masks[t]);
            let b = FlowInput::at_origin(&frames[t + 1], &masks[t + 1]);
            Ok((backend.estimate(a, b, None)?, backend.estimate(b, a, None)?))
        })
        .collect::<Result<_>>()?;
    let (forward, backward) = pairs.into_iter().unzip();
    Ok(AdjacentFlows { forward, backward })
}

pub(crate) fn check_inputs(frames: &[Frame], masks: &[Mask]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::Argument("no frames".into()));
    }
    if frames.len() != masks.len() {
        return Err(Error::Argument(format!(
            "{} frames but {} masks",
            frames.len(),
            masks.len()
        )));
    }
    let f0 = &frames[0];
    for (i, (f, m)) in frames.iter().zip(masks).enumerate() {
        if !f.same_shape(f0) {
            return Err(Error::Argument(format!("frame {i} differs in size or channels")));
        }
        if !m.matches(f) {
            return Err(Error::Argument(format!("mask {i} does not match its frame")));
        }
    }
    Ok(())
}

/// Chains adjacent flows into key-frame-relative warps, sizes `Omega` and
/// accumulates the first template.
pub fn initialize_state(
    frames: &[Frame],
    masks: &[Mask],
    key_frame: usize,
    adjacent: &AdjacentFlows,
) -> Result<InferenceState> {
    check_inputs(frames, masks)?;
    adjacent.check(frames.len())?;
    let n = frames.len();
    if key_frame >= n {
        return Err(Error::Argument(format!("key frame {key_frame} out of range 0..{n}")));
    }
    let d = frames[0].rect();
    let id = WarpField::identity(d);

    // key -> i and i -> key
    let mut fwd: Vec<Option<WarpField>> = vec![None; n];
    let mut inv: Vec<Option<WarpField>> = vec![None; n];
    fwd[key_frame] = Some(id.clone());
    inv[key_frame] = Some(id);
    for i in key_frame + 1..n {
        fwd[i] = Some(compose(fwd[i - 1].as_ref().unwrap(), &adjacent.forward[i - 1])?);
        inv[i] = Some(compose(&adjacent.backward[i - 1], inv[i - 1].as_ref().unwrap())?);
    }
    for i in (0..key_frame).rev() {
        fwd[i] = Some(compose(fwd[i + 1].as_ref().unwrap(), &adjacent.backward[i])?);
        inv[i] = Some(compose(&adjacent.forward[i], inv[i + 1].as_ref().unwrap())?);
    }
    let inv: Vec<WarpField> = inv.into_iter().map(Option::unwrap).collect();
    let omega = crate::grid::rect_union(&[d, template_domain(&inv)?])?;
    let inv_warps: Vec<WarpField> = inv.iter().map(|w| w.with_dst(omega)).collect();
    let warps = fwd
        .into_iter()
        .map(|w| Ok(reframe_src(&w.unwrap(), omega)?.with_dst(d)))
        .collect::<Result<Vec<_>>>()?;
    let template = accumulate_template(frames, masks, &warps)?;
    Ok(InferenceState {
        frames: frames.to_vec(),
        masks: masks.to_vec(),
        warps,
        inv_warps,
        template,
        key_frame,
        refine_skipped: vec![false; n],
    })
}

/// Largest per-side growth of `Omega` in one refinement round.
const OMEGA_GROWTH: i64 = 2;

/// Alternates warp refinement and template accumulation. Returns the number
/// of refinement rounds performed.
pub fn optimize(state: &mut InferenceState, params: &JointParams, backend: &dyn FlowBackend) -> Result<usize> {
    if !params.refine || state.len() < 2 {
        return Ok(0);
    }
    let mut rounds = 0;
    for _ in 0..params.max_outer {
        rounds += 1;
        let refined = (0..state.len())
            .into_par_iter()
            .map(|i| {
                refine_warp(
                    &state.template,
                    &state.frames[i],
                    &state.masks[i],
                    &state.warps[i],
                    &state.inv_warps[i],
                    backend,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let old = state.template.domain();
        let inv: Vec<WarpField> = refined.iter().map(|r| r.inv_warp.clone()).collect();
        let grown = DomainRect::new(
            [old.origin[0] - OMEGA_GROWTH, old.origin[1] - OMEGA_GROWTH],
            old.width + 2 * OMEGA_GROWTH as usize,
            old.height + 2 * OMEGA_GROWTH as usize,
        );
        let omega = template_domain(&inv)?
            .intersect(&grown)
            .ok_or_else(|| Error::Geometry("refined inverse warps left the template".into()))?;
        let d = state.frames[0].rect();
        state.refine_skipped = refined.iter().map(|r| r.skipped).collect();
        state.inv_warps = inv.iter().map(|w| w.with_dst(omega)).collect();
        state.warps = refined
            .iter()
            .map(|r| Ok(reframe_src(&r.warp, omega)?.with_dst(d)))
            .collect::<Result<Vec<_>>>()?;
        let template = accumulate_template(&state.frames, &state.masks, &state.warps)?;
        let change = template.relative_change(&state.template);
        state.template = template;
        if change < params.tol {
            break;
        }
    }
    Ok(rounds)
}

/// Full joint inference from scratch: adjacent flows, initialisation and
/// alternating refinement.
pub fn run_joint_optimization(
    frames: &[Frame],
    masks: &[Mask],
    key_frame: usize,
    params: &JointParams,
    backend: &dyn FlowBackend,
) -> Result<InferenceState> {
    let adjacent = compute_adjacent_flows(frames, masks, backend)?;
    let mut state = initialize_state(frames, masks, key_frame, &adjacent)?;
    optimize(&mut state, params, backend)?;
    Ok(state)
}

/// Mean squared residual per observed pixel between each frame and the
/// template pulled through its inverse warp.
pub fn data_energy(state: &InferenceState) -> f64 {
    let k = state.template.channels();
    let (sum, count) = (0..state.len())
        .into_par_iter()
        .map(|i| {
            let (f, m, w) = (&state.frames[i], &state.masks[i], &state.inv_warps[i]);
            let mut buf = vec![0.0; k];
            let (mut s, mut c) = (0.0, 0usize);
            for y in 0..f.height() {
                for x in 0..f.width() {
                    if m.get(x, y) || !w.is_valid(x, y) {
                        continue;
                    }
                    if state.template.sample_bilinear(w.at(x, y), &mut buf).is_none() {
                        continue;
                    }
                    s += f.pixel(x, y).iter().zip(&buf).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                    c += 1;
                }
            }
            (s, c)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
