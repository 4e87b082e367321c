use rayon::prelude::*;

use super::joint::check_inputs;
use super::{accumulate_template, refine_warp, AdjacentFlows, InferenceState, SceneTemplate};
use crate::error::{Error, Result};
use crate::flow::{compose, FlowBackend};
use crate::grid::{Frame, Mask, WarpField};
use crate::inpaint::{diffusion_fill, inpaint_frame_raw, InpaintParams};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SlidingParams {
    /// Frames kept in the window, the newest included.
    pub window: usize,
    /// Refine the window's warps against the template on every step.
    pub refine: bool,
    pub inpaint: InpaintParams,
}

impl Default for SlidingParams {
    fn default() -> Self {
        Self {
            window: 7,
            refine: true,
            inpaint: InpaintParams::default(),
        }
    }
}

/// Raw output of one sweep over the sequence (indexed by frame).
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub frames: Vec<Frame>,
    /// Contributors per pixel (samples plus template).
    pub counts: Vec<Vec<u32>>,
    pub unfilled: Vec<Mask>,
    /// Template aligned with the last frame of the sweep.
    pub last_template: SceneTemplate,
}

#[derive(Debug, Clone)]
pub struct SlidingOutput {
    pub frames: Vec<Frame>,
    /// Pixels per frame that no sweep could fill and were diffusion-filled.
    pub diffused: Vec<usize>,
    pub forward: SweepResult,
    pub backward: SweepResult,
}

struct Entry {
    idx: usize,
    /// `D_newest -> D_idx`.
    warp: WarpField,
    /// `D_idx -> D_newest`.
    inv: WarpField,
}

/// Windowed inference: a template re-aligned to each new frame from the
/// previous `window - 1` frames, run forward and then backward over the
/// sequence. Per pixel, the sweep with more contributors wins (ties go to the
/// forward sweep); pixels neither sweep could fill are diffusion-filled.
pub fn sliding_window_run(
    frames: &[Frame],
    masks: &[Mask],
    adjacent: &AdjacentFlows,
    params: &SlidingParams,
    backend: &dyn FlowBackend,
) -> Result<SlidingOutput> {
    check_inputs(frames, masks)?;
    adjacent.check(frames.len())?;
    params.inpaint.validate()?;
    if params.window < 2 {
        return Err(Error::Argument(format!("window must be >= 2, got {}", params.window)));
    }
    let window = params.window.min(frames.len());
    let n = frames.len();
    let order: Vec<usize> = (0..n).collect();
    let forward = sweep(frames, masks, adjacent, &order, window, params, backend)?;
    let reversed: Vec<usize> = (0..n).rev().collect();
    let backward = sweep(frames, masks, adjacent, &reversed, window, params, backend)?;

    let mut out = Vec::with_capacity(n);
    let mut diffused = Vec::with_capacity(n);
    for t in 0..n {
        let k = frames[t].channels();
        let mut data = forward.frames[t].data().to_vec();
        let mut holes = forward.unfilled[t].data().to_vec();
        for p in 0..frames[t].len_pixels() {
            if backward.counts[t][p] > forward.counts[t][p] {
                data[p * k..(p + 1) * k].copy_from_slice(&backward.frames[t].data()[p * k..(p + 1) * k]);
                holes[p] = backward.unfilled[t].data()[p];
            }
        }
        let merged = Frame::new(frames[t].width(), frames[t].height(), k, data)?;
        let holes = Mask::new(frames[t].width(), frames[t].height(), holes)?;
        diffused.push(holes.count());
        out.push(diffusion_fill(&merged, &holes)?);
    }
    Ok(SlidingOutput {
        frames: out,
        diffused,
        forward,
        backward,
    })
}

/// Flow `D_a -> D_b` for adjacent frames.
fn step_flow(adjacent: &AdjacentFlows, a: usize, b: usize) -> &WarpField {
    if b == a + 1 {
        &adjacent.forward[a]
    } else {
        &adjacent.backward[b]
    }
}

fn sweep(
    frames: &[Frame],
    masks: &[Mask],
    adjacent: &AdjacentFlows,
    order: &[usize],
    window: usize,
    params: &SlidingParams,
    backend: &dyn FlowBackend,
) -> Result<SweepResult> {
    let n = frames.len();
    let d = frames[0].rect();
    let mut entries: Vec<Entry> = Vec::with_capacity(window);
    let mut out_frames = vec![None; n];
    let mut counts = vec![Vec::new(); n];
    let mut unfilled = vec![None; n];
    let mut last_template = None;
    let mut prev: Option<usize> = None;
    for &cur in order {
        if let Some(p) = prev {
            // re-align the window so that the new frame's domain is Omega
            let to_prev = step_flow(adjacent, cur, p);
            let from_prev = step_flow(adjacent, p, cur);
            for e in entries.iter_mut() {
                e.warp = compose(to_prev, &e.warp)?;
                e.inv = compose(&e.inv, from_prev)?;
            }
        }
        entries.push(Entry {
            idx: cur,
            warp: WarpField::identity(d),
            inv: WarpField::identity(d),
        });
        if entries.len() > window {
            entries.remove(0);
        }

        let win_frames: Vec<Frame> = entries.iter().map(|e| frames[e.idx].clone()).collect();
        let win_masks: Vec<Mask> = entries.iter().map(|e| masks[e.idx].clone()).collect();
        let mut warps: Vec<WarpField> = entries.iter().map(|e| e.warp.clone()).collect();
        let mut inv: Vec<WarpField> = entries.iter().map(|e| e.inv.clone()).collect();
        let mut template = accumulate_template(&win_frames, &win_masks, &warps)?;
        if params.refine && entries.len() > 1 {
            let refined = (0..entries.len())
                .into_par_iter()
                .map(|i| refine_warp(&template, &win_frames[i], &win_masks[i], &warps[i], &inv[i], backend))
                .collect::<Result<Vec<_>>>()?;
            for (i, r) in refined.into_iter().enumerate() {
                if !r.skipped {
                    warps[i] = r.warp;
                    inv[i] = r.inv_warp;
                }
            }
            template = accumulate_template(&win_frames, &win_masks, &warps)?;
            for (e, (w, v)) in entries.iter_mut().zip(warps.iter().zip(&inv)) {
                e.warp = w.clone();
                e.inv = v.clone();
            }
        }
        let newest = entries.len() - 1;
        let state = InferenceState {
            frames: win_frames,
            masks: win_masks,
            warps,
            inv_warps: inv,
            template,
            key_frame: newest,
            refine_skipped: vec![false; entries.len()],
        };
        let raw = inpaint_frame_raw(&state, newest, &params.inpaint)?;
        out_frames[cur] = Some(raw.frame);
        counts[cur] = raw.counts;
        unfilled[cur] = Some(raw.unfilled);
        last_template = Some(state.template);
        prev = Some(cur);
    }
    Ok(SweepResult {
        frames: out_frames.into_iter().map(Option::unwrap).collect(),
        counts,
        unfilled: unfilled.into_iter().map(Option::unwrap).collect(),
        last_template: last_template.expect("non-empty sequence"),
    })
}
