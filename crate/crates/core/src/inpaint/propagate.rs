use rayon::prelude::*;

use super::diffusion_fill;
use crate::error::Result;
use crate::flow::compose;
use crate::grid::{Frame, Mask, WarpField};
use crate::template::{observes, AdjacentFlows};

/// Frame-to-frame baseline: each masked pixel is traced through chained
/// adjacent flows to the nearest frame (in time) where it lands outside the
/// mask and read there bilinearly. When both directions succeed at the same
/// distance the two values are averaged. Pixels never revealed within
/// `max_distance` frames are diffusion-filled.
pub fn propagate_frame_to_frame(
    frames: &[Frame],
    masks: &[Mask],
    adjacent: &AdjacentFlows,
    max_distance: usize,
) -> Result<Vec<Frame>> {
    crate::template::check_inputs(frames, masks)?;
    adjacent.check(frames.len())?;
    (0..frames.len())
        .into_par_iter()
        .map(|t| propagate_one(frames, masks, adjacent, t, max_distance))
        .collect()
}

fn propagate_one(
    frames: &[Frame],
    masks: &[Mask],
    adjacent: &AdjacentFlows,
    t: usize,
    max_distance: usize,
) -> Result<Frame> {
    let frame = &frames[t];
    let mask = &masks[t];
    if mask.is_empty() {
        return Ok(frame.clone());
    }
    let (w, k, n) = (frame.width(), frame.channels(), frames.len());
    let mut data = frame.data().to_vec();
    let mut pending = mask.clone();
    let mut fwd: Option<WarpField> = None;
    let mut bwd: Option<WarpField> = None;
    let mut buf = vec![0.0; k];
    let mut acc = vec![0.0; k];
    for d in 1..=max_distance.min(n - 1) {
        if pending.is_empty() {
            break;
        }
        if t + d < n {
            let step = &adjacent.forward[t + d - 1];
            fwd = Some(match fwd {
                None => step.clone(),
                Some(c) => compose(&c, step)?,
            });
        }
        if d <= t {
            let step = &adjacent.backward[t - d];
            bwd = Some(match bwd {
                None => step.clone(),
                Some(c) => compose(&c, step)?,
            });
        }
        let cands: Vec<(&WarpField, usize)> = [(fwd.as_ref(), t + d), (bwd.as_ref(), t.wrapping_sub(d))]
            .into_iter()
            .filter(|(c, i)| c.is_some() && *i < n)
            .map(|(c, i)| (c.unwrap(), i))
            .collect();
        let mut next = pending.data().to_vec();
        for (p, waiting) in pending.data().iter().enumerate() {
            if !*waiting {
                continue;
            }
            let mut hits = 0.0;
            acc.iter_mut().for_each(|v| *v = 0.0);
            for (c, i) in &cands {
                if !c.valid()[p] {
                    continue;
                }
                let q = c.map()[p];
                if !observes(&masks[*i], q) {
                    continue;
                }
                frames[*i].bilinear_into(q, &mut buf);
                acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
                hits += 1.0;
            }
            if hits > 0.0 {
                for c in 0..k {
                    data[p * k + c] = acc[c] / hits;
                }
                next[p] = false;
            }
        }
        pending = Mask::new(w, frame.height(), next)?;
    }
    let out = Frame::from_raw_clamped(w, frame.height(), k, data);
    if pending.is_empty() {
        Ok(out)
    } else {
        diffusion_fill(&out, &pending)
    }
}
