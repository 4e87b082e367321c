use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::{Frame, Mask, WarpField};
use crate::template::SceneTemplate;

/// Connected components smaller than this are dropped from estimated masks.
pub const MIN_COMPONENT_PIXELS: usize = 16;

/// Pixels whose squared distance to the back-warped template exceeds `alpha`,
/// cleaned by removing small 8-connected components and a 3x3 closing.
/// Pixels without a defined template value are never flagged.
pub fn estimate_mask(frame: &Frame, template: &SceneTemplate, inv_warp: &WarpField, alpha: f64) -> Result<Mask> {
    if inv_warp.src() != frame.rect() {
        return Err(Error::Geometry("inverse warp does not start on the frame".into()));
    }
    if template.channels() != frame.channels() {
        return Err(Error::Argument("template and frame differ in channels".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Argument(format!("alpha must be > 0, got {alpha}")));
    }
    let mut buf = vec![0.0; frame.channels()];
    let raw = Mask::from_fn(frame.width(), frame.height(), |x, y| {
        if !inv_warp.is_valid(x, y) || template.sample_bilinear(inv_warp.at(x, y), &mut buf).is_none() {
            return false;
        }
        let r: f64 = frame.pixel(x, y).iter().zip(&buf).map(|(a, b)| (a - b).powi(2)).sum();
        r > alpha
    });
    Ok(close_3x3(&remove_small_components(&raw, MIN_COMPONENT_PIXELS)))
}

/// Drops 8-connected components with fewer than `min_size` pixels.
pub fn remove_small_components(mask: &Mask, min_size: usize) -> Mask {
    let (w, h) = (mask.width(), mask.height());
    let mut keep = vec![false; w * h];
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.data()[start] {
            continue;
        }
        component.clear();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            component.push(i);
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && mask.data()[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if component.len() >= min_size {
            for &i in &component {
                keep[i] = true;
            }
        }
    }
    Mask::new(w, h, keep).expect("same size")
}

fn morph_3x3(mask: &Mask, dilate: bool) -> Mask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    Mask::from_fn(mask.width(), mask.height(), |x, y| {
        let mut hit = !dilate;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                // outside the frame counts as set for erosion, unset for dilation
                let v = if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    !dilate
                } else {
                    mask.get(nx as usize, ny as usize)
                };
                if dilate {
                    hit |= v;
                } else {
                    hit &= v;
                }
            }
        }
        hit
    })
}

/// Morphological closing (dilate, then erode) with a 3x3 square.
pub fn close_3x3(mask: &Mask) -> Mask {
    morph_3x3(&morph_3x3(mask, true), false)
}
