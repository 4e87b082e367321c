//! Video inpainting through a jointly inferred scene template.

pub mod error;
pub mod flow;
pub mod grid;
pub mod inpaint;
pub mod io;
pub mod laplace;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod template;

pub use error::{Error, Result};
pub use grid::{rect_union, DomainRect, Frame, Mask, WarpField};
