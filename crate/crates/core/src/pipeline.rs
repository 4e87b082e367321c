//! End-to-end runs: full joint inference or the sliding window, and mask
//! completion from partial annotations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{compose, FlowBackend, FlowInput, FlowParams, VariationalFlow};
use crate::grid::{Frame, Mask, WarpField};
use crate::inpaint::{diffusion_fill, estimate_mask, inpaint_frame_raw, InpaintParams};
use crate::template::{
    compute_adjacent_flows, initialize_state, optimize, refine_warp, run_joint_optimization, sliding_window_run,
    AdjacentFlows, JointParams, SceneTemplate, SlidingParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One template for the whole sequence.
    #[default]
    Full,
    /// Windowed templates, forward and backward sweeps.
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub mode: Mode,
    pub window: usize,
    /// Key frame for full mode; the middle frame when `None`.
    pub key_frame: Option<usize>,
    pub flow: FlowParams,
    pub joint: JointParams,
    pub inpaint: InpaintParams,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            window: 7,
            key_frame: None,
            flow: FlowParams::default(),
            joint: JointParams::default(),
            inpaint: InpaintParams::default(),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.inpaint.validate()?;
        if self.mode == Mode::Sliding && self.window < 2 {
            return Err(Error::Argument(format!("window must be >= 2, got {}", self.window)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub frames: Vec<Frame>,
    /// Final scene template (for the sliding window: aligned to the last frame).
    pub template: SceneTemplate,
    /// Masked pixels per frame that no observation reached (diffusion-filled).
    pub unfilled: Vec<usize>,
    pub adjacent: AdjacentFlows,
}

/// Inpaints every frame. Adjacent flows are computed unless supplied.
pub fn run_pipeline(
    frames: &[Frame],
    masks: &[Mask],
    params: &PipelineParams,
    adjacent: Option<AdjacentFlows>,
) -> Result<PipelineOutput> {
    params.validate()?;
    let backend = VariationalFlow::new(params.flow)?;
    let adjacent = match adjacent {
        Some(a) => a,
        None => compute_adjacent_flows(frames, masks, &backend)?,
    };
    match params.mode {
        Mode::Full => {
            let key = params.key_frame.unwrap_or(frames.len() / 2);
            let mut state = initialize_state(frames, masks, key, &adjacent)?;
            optimize(&mut state, &params.joint, &backend)?;
            let raw = (0..state.len())
                .into_par_iter()
                .map(|t| inpaint_frame_raw(&state, t, &params.inpaint))
                .collect::<Result<Vec<_>>>()?;
            let unfilled = raw.iter().map(|r| r.unfilled.count()).collect();
            let frames = raw
                .into_par_iter()
                .map(|r| {
                    if r.unfilled.is_empty() {
                        Ok(r.frame)
                    } else {
                        diffusion_fill(&r.frame, &r.unfilled)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PipelineOutput {
                frames,
                template: state.template,
                unfilled,
                adjacent,
            })
        }
        Mode::Sliding => {
            let sp = SlidingParams {
                window: params.window,
                refine: params.joint.refine,
                inpaint: params.inpaint,
            };
            let out = sliding_window_run(frames, masks, &adjacent, &sp, &backend)?;
            Ok(PipelineOutput {
                frames: out.frames,
                template: out.forward.last_template,
                unfilled: out.diffused,
                adjacent,
            })
        }
    }
}

/// Completed masks: annotated frames keep theirs, the others are estimated.
#[derive(Debug, Clone)]
pub struct MaskCompletion {
    pub masks: Vec<Mask>,
    pub estimated: Vec<bool>,
    pub template: SceneTemplate,
}

/// Builds a template from the annotated frames, then walks outward from them
/// frame by frame: the inverse warp of each unannotated frame is predicted
/// through the flow to its already-processed neighbour, a mask is estimated
/// by thresholding the residual, the warps are refined with that mask and
/// the mask re-estimated.
pub fn complete_masks(
    frames: &[Frame],
    annotated: &[Option<Mask>],
    params: &PipelineParams,
) -> Result<MaskCompletion> {
    params.validate()?;
    if frames.len() != annotated.len() {
        return Err(Error::Argument("one optional mask per frame expected".into()));
    }
    let known: Vec<usize> = (0..frames.len()).filter(|i| annotated[*i].is_some()).collect();
    if known.is_empty() {
        return Err(Error::Argument("no annotated frames".into()));
    }
    let backend = VariationalFlow::new(params.flow)?;
    let sub_frames: Vec<Frame> = known.iter().map(|i| frames[*i].clone()).collect();
    let sub_masks: Vec<Mask> = known.iter().map(|i| annotated[*i].clone().unwrap()).collect();
    let key = params.key_frame.map_or(known.len() / 2, |k| k.min(known.len() - 1));
    let state = run_joint_optimization(&sub_frames, &sub_masks, key, &params.joint, &backend)?;

    let n = frames.len();
    let mut masks: Vec<Option<Mask>> = annotated.to_vec();
    let mut warps: Vec<Option<WarpField>> = vec![None; n];
    let mut inv: Vec<Option<WarpField>> = vec![None; n];
    for (j, &i) in known.iter().enumerate() {
        warps[i] = Some(state.warps[j].clone());
        inv[i] = Some(state.inv_warps[j].clone());
    }
    let first = known[0];
    let order: Vec<(usize, usize)> = (first + 1..n)
        .map(|t| (t, t - 1))
        .chain((0..first).rev().map(|t| (t, t + 1)))
        .collect();
    let alpha = params.inpaint.alpha;
    for (t, nb) in order {
        if masks[t].is_some() {
            continue;
        }
        let nb_mask = masks[nb].clone().expect("neighbour processed first");
        let free = Mask::empty(frames[t].width(), frames[t].height());
        let a = FlowInput::at_origin(&frames[t], &free);
        let b = FlowInput::at_origin(&frames[nb], &nb_mask);
        let to_nb = backend.estimate(a, b, None)?;
        let from_nb = backend.estimate(b, a, None)?;
        let inv_pred = compose(&to_nb, inv[nb].as_ref().unwrap())?.with_dst(state.template.domain());
        let w_pred = compose(warps[nb].as_ref().unwrap(), &from_nb)?.with_dst(frames[t].rect());
        let first_guess = estimate_mask(&frames[t], &state.template, &inv_pred, alpha)?;
        let mut m = first_guess;
        let (mut w, mut v) = (w_pred, inv_pred);
        if params.joint.refine {
            let r = refine_warp(&state.template, &frames[t], &m, &w, &v, &backend)?;
            if !r.skipped {
                w = r.warp;
                v = r.inv_warp;
                m = estimate_mask(&frames[t], &state.template, &v, alpha)?;
            }
        }
        masks[t] = Some(m);
        warps[t] = Some(w);
        inv[t] = Some(v);
    }
    Ok(MaskCompletion {
        estimated: annotated.iter().map(Option::is_none).collect(),
        masks: masks.into_iter().map(Option::unwrap).collect(),
        template: state.template,
    })
}

/// Adjacent flows, read from and written to `cache` when given. Files are
/// named `flow_{a:06}_{b:06}.flo` for the flow from frame `a` to frame `b`.
pub fn adjacent_flows_cached(
    frames: &[Frame],
    masks: &[Mask],
    backend: &dyn FlowBackend,
    cache: Option<&std::path::Path>,
) -> Result<AdjacentFlows> {
    let Some(dir) = cache else {
        return compute_adjacent_flows(frames, masks, backend);
    };
    std::fs::create_dir_all(dir)?;
    crate::template::check_inputs(frames, masks)?;
    let rect = frames[0].rect();
    let one = |a: usize, b: usize| -> Result<WarpField> {
        let path = dir.join(format!("flow_{a:06}_{b:06}.flo"));
        if path.exists() {
            return crate::flow::read_flo_file(&path, Some((rect, rect)));
        }
        let w = backend.estimate(
            FlowInput::at_origin(&frames[a], &masks[a]),
            FlowInput::at_origin(&frames[b], &masks[b]),
            None,
        )?;
        crate::flow::write_flo_file(&path, &w)?;
        // reread so cached and fresh runs see the same (f32) values
        crate::flow::read_flo_file(&path, Some((rect, rect)))
    };
    let pairs = (0..frames.len().saturating_sub(1))
        .into_par_iter()
        .map(|t| Ok((one(t, t + 1)?, one(t + 1, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let (forward, backward) = pairs.into_iter().unzip();
    Ok(AdjacentFlows { forward, backward })
}
