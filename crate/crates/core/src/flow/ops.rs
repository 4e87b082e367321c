use crate::error::{Error, Result};
use crate::grid::{DomainRect, Mask, WarpField};
use crate::laplace::LaplaceSystem;
use crate::laplace::LAPLACE_TOL;

/// `p -> w_bc(w_ab(p))`, looking `w_bc` up bilinearly.
///
/// Intermediate points outside `w_bc`'s source domain extrapolate its border
/// displacement and come out invalid.
pub fn compose(w_ab: &WarpField, w_bc: &WarpField) -> Result<WarpField> {
    if w_ab.dst() != w_bc.src() {
        return Err(Error::Geometry(format!(
            "compose: {:?} feeds into {:?}",
            w_ab.dst(),
            w_bc.src()
        )));
    }
    let mut map = Vec::with_capacity(w_ab.map().len());
    let mut valid = Vec::with_capacity(w_ab.map().len());
    for (q, v) in w_ab.map().iter().zip(w_ab.valid()) {
        let s = w_bc.eval(*q);
        map.push(s.point);
        valid.push(*v && s.in_domain && s.valid);
    }
    WarpField::new(w_ab.src(), w_bc.dst(), map, valid)
}

/// Flags pixels of `A` whose round trip `A -> B -> A` misses by more than `tol_px`.
pub fn check_fb_consistency(w_fwd: &WarpField, w_bwd: &WarpField, tol_px: f64) -> Result<Mask> {
    if w_fwd.dst() != w_bwd.src() || w_bwd.dst() != w_fwd.src() {
        return Err(Error::Geometry("forward/backward warps are not mutually inverse in geometry".into()));
    }
    if !(tol_px > 0.0) {
        return Err(Error::Argument("consistency tolerance must be positive".into()));
    }
    let src = w_fwd.src();
    let flags = w_fwd
        .map()
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let p = src.pixel_global(i % src.width, i / src.width);
            let r = w_bwd.eval(*q).point;
            ((r[0] - p[0]).powi(2) + (r[1] - p[1]).powi(2)).sqrt() > tol_px
        })
        .collect();
    Mask::new(src.width, src.height, flags)
}

/// Replaces the displacement inside `hole` by the harmonic interpolant of the
/// surrounding values.
pub fn harmonic_extend(w: &WarpField, hole: &Mask) -> Result<WarpField> {
    let src = w.src();
    if hole.width() != src.width || hole.height() != src.height {
        return Err(Error::Geometry("hole does not match warp source".into()));
    }
    if hole.is_empty() {
        return Ok(w.clone());
    }
    let disp = w.displacement();
    let sys = LaplaceSystem::new(src.width, src.height, hole.data())?;
    let mut planes = [
        disp.iter().map(|d| d[0]).collect::<Vec<_>>(),
        disp.iter().map(|d| d[1]).collect::<Vec<_>>(),
    ];
    for plane in planes.iter_mut() {
        sys.solve(plane, LAPLACE_TOL * 1e-2)?;
    }
    let disp: Vec<[f64; 2]> = planes[0].iter().zip(&planes[1]).map(|(u, v)| [*u, *v]).collect();
    let out = WarpField::from_displacement(src, w.dst(), &disp)?;
    // keep the original validity outside the hole
    let keep: Vec<bool> = w
        .valid()
        .iter()
        .zip(hole.data())
        .map(|(v, h)| *h || *v)
        .collect();
    Ok(out.with_valid(&keep))
}

/// Moves a warp onto a new source rectangle: overlapping pixels keep their
/// targets, the rest are filled harmonically.
pub fn reframe_src(w: &WarpField, new_src: DomainRect) -> Result<WarpField> {
    let old = w.src();
    if old == new_src {
        return Ok(w.clone());
    }
    let overlap = old
        .intersect(&new_src)
        .ok_or_else(|| Error::Geometry("new source domain does not overlap the warp".into()))?;
    let mut disp = vec![[0.0; 2]; new_src.len()];
    let mut hole = vec![true; new_src.len()];
    let mut valid = vec![true; new_src.len()];
    let old_disp = w.displacement();
    for gy in overlap.origin[1]..overlap.end()[1] {
        for gx in overlap.origin[0]..overlap.end()[0] {
            let oi = (gy - old.origin[1]) as usize * old.width + (gx - old.origin[0]) as usize;
            let ni = (gy - new_src.origin[1]) as usize * new_src.width + (gx - new_src.origin[0]) as usize;
            disp[ni] = old_disp[oi];
            hole[ni] = false;
            valid[ni] = w.valid()[oi];
        }
    }
    let field = WarpField::from_displacement(new_src, w.dst(), &disp)?;
    let hole = Mask::new(new_src.width, new_src.height, hole)?;
    Ok(harmonic_extend(&field, &hole)?.with_valid(&valid))
}
