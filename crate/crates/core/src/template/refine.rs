use super::SceneTemplate;
use crate::error::Result;
use crate::flow::{FlowBackend, FlowInput};
use crate::grid::{Frame, Mask, WarpField};

/// Refinement is skipped when the template covers less than this fraction of
/// the frame's pixel count.
pub const MIN_TEMPLATE_COVERAGE: f64 = 0.05;

/// Grey level used for unobserved template pixels fed to the flow solver;
/// they carry no data weight.
const UNDEFINED_FILL: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Refined {
    pub warp: WarpField,
    pub inv_warp: WarpField,
    pub skipped: bool,
}

/// Re-estimates `w : Omega -> D` by matching the template to `frame`, and the
/// inverse `D -> Omega` by matching `frame` to the template. Unobserved template
/// pixels and masked frame pixels carry no data term.
pub fn refine_warp(
    template: &SceneTemplate,
    frame: &Frame,
    mask: &Mask,
    w_init: &WarpField,
    inv_init: &WarpField,
    backend: &dyn FlowBackend,
) -> Result<Refined> {
    let coverage = template.defined_count() as f64 / frame.len_pixels() as f64;
    if coverage < MIN_TEMPLATE_COVERAGE {
        return Ok(Refined {
            warp: w_init.clone(),
            inv_warp: inv_init.clone(),
            skipped: true,
        });
    }
    let t_img = template.to_frame(&[UNDEFINED_FILL; 4]);
    let t_mask = template.undefined_mask();
    let t_in = FlowInput::new(&t_img, template.domain(), &t_mask);
    let f_in = FlowInput::new(frame, w_init.dst(), mask);
    let warp = backend.estimate(t_in, f_in, Some(w_init))?;
    let inv_warp = backend.estimate(f_in, t_in, Some(inv_init))?;
    Ok(Refined {
        warp,
        inv_warp,
        skipped: false,
    })
}
