use super::{harmonic_extend, FlowBackend, FlowInput, FlowParams};
use crate::error::Result;
use crate::grid::{bilinear_plane, bilinear_taps, in_sampling_rect, Frame, Mask, WarpField};

/// Smallest side length a pyramid level may have.
const MIN_LEVEL_SIZE: usize = 8;

const SOR_OMEGA: f64 = 1.8;

/// Coarse-to-fine variational flow with quadratic data and smoothness terms.
#[derive(Debug, Clone, Copy)]
pub struct VariationalFlow {
    params: FlowParams,
}

impl VariationalFlow {
    pub fn new(params: FlowParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }
}

impl Default for VariationalFlow {
    fn default() -> Self {
        Self {
            params: FlowParams::default(),
        }
    }
}

/// One pyramid level of an image: interleaved channels plus mask.
struct Level {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    mask: Vec<bool>,
}

impl Level {
    fn from_frame(frame: &Frame, mask: &Mask) -> Self {
        Self {
            width: frame.width(),
            height: frame.height(),
            channels: frame.channels(),
            data: frame.data().to_vec(),
            mask: mask.data().to_vec(),
        }
    }

    /// 2x2 box reduction; a coarse pixel is masked if any child is.
    fn downsample(&self) -> Self {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        let k = self.channels;
        let mut data = vec![0.0; w * h * k];
        let mut mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut n = 0.0;
                let o = (y * w + x) * k;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (fx, fy) = ((2 * x + dx).min(self.width - 1), (2 * y + dy).min(self.height - 1));
                    let fi = fy * self.width + fx;
                    for c in 0..k {
                        data[o + c] += self.data[fi * k + c];
                    }
                    mask[y * w + x] |= self.mask[fi];
                    n += 1.0;
                }
                for c in 0..k {
                    data[o + c] /= n;
                }
            }
        }
        Self {
            width: w,
            height: h,
            channels: k,
            data,
            mask,
        }
    }

    fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    /// Central-difference gradients per channel (one-sided at the border).
    fn gradients(&self) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        (0..self.channels)
            .map(|c| {
                let p = self.plane(c);
                let (w, h) = (self.width, self.height);
                let mut gx = vec![0.0; w * h];
                let mut gy = vec![0.0; w * h];
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                        if xr > xl {
                            gx[i] = (p[y * w + xr] - p[y * w + xl]) / (xr - xl) as f64;
                        }
                        if yd > yu {
                            gy[i] = (p[yd * w + x] - p[yu * w + x]) / (yd - yu) as f64;
                        }
                    }
                }
                (p, gx, gy)
            })
            .collect()
    }
}

fn level_count(params: &FlowParams, dims: &[(usize, usize)]) -> usize {
    let mut levels = 1;
    while levels < params.pyramid_levels {
        let scale = 1usize << levels;
        if dims
            .iter()
            .any(|(w, h)| w.div_ceil(scale) < MIN_LEVEL_SIZE || h.div_ceil(scale) < MIN_LEVEL_SIZE)
        {
            break;
        }
        levels += 1;
    }
    levels
}

/// Halve a displacement field onto the next coarser grid.
fn restrict_flow(u: &[[f64; 2]], w: usize, h: usize) -> Vec<[f64; 2]> {
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = vec![[0.0; 2]; cw * ch];
    for y in 0..ch {
        for x in 0..cw {
            let mut acc = [0.0; 2];
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let (fx, fy) = ((2 * x + dx).min(w - 1), (2 * y + dy).min(h - 1));
                let v = u[fy * w + fx];
                acc[0] += v[0];
                acc[1] += v[1];
            }
            out[y * cw + x] = [acc[0] / 8.0, acc[1] / 8.0];
        }
    }
    out
}

/// Bilinear upsampling of a coarse displacement onto a finer grid, doubling it.
fn prolong_flow(u: &[[f64; 2]], cw: usize, ch: usize, w: usize, h: usize) -> Vec<[f64; 2]> {
    let ux: Vec<f64> = u.iter().map(|v| v[0]).collect();
    let uy: Vec<f64> = u.iter().map(|v| v[1]).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = [(x as f64 - 0.5) / 2.0, (y as f64 - 0.5) / 2.0];
            out.push([
                2.0 * bilinear_plane(&ux, cw, ch, p),
                2.0 * bilinear_plane(&uy, cw, ch, p),
            ]);
        }
    }
    out
}

impl VariationalFlow {
    /// Solves one level starting from `u`; `offset` maps src-local to dst-local
    /// coordinates before displacement.
    fn solve_level(&self, src: &Level, dst: &Level, offset: [f64; 2], u: &mut [[f64; 2]]) {
        let (w, h, k) = (src.width, src.height, src.channels);
        let n = w * h;
        let lambda = self.params.smoothness_weight;
        let src_grad = src.gradients();
        let dst_grad = dst.gradients();

        // per-pixel linearised data term: J11, J12, J22, J13, J23 (about u0)
        let mut coef = vec![[0.0f64; 5]; n];
        let mut u0 = vec![[0.0f64; 2]; n];
        for _pass in 0..self.params.warps_per_level {
            u0.copy_from_slice(u);
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    coef[i] = [0.0; 5];
                    if src.mask[i] {
                        continue;
                    }
                    let q = [x as f64 + offset[0] + u0[i][0], y as f64 + offset[1] + u0[i][1]];
                    if !in_sampling_rect(q, dst.width, dst.height) {
                        continue;
                    }
                    let taps = bilinear_taps(q, dst.width, dst.height);
                    if taps.iter().any(|(j, wt)| *wt > 0.0 && dst.mask[*j]) {
                        continue;
                    }
                    let mut c = [0.0; 5];
                    for (ch, (sp, sgx, sgy)) in src_grad.iter().enumerate().take(k) {
                        let (dp, dgx, dgy) = &dst_grad[ch];
                        let (mut i2, mut gx2, mut gy2) = (0.0, 0.0, 0.0);
                        for (j, wt) in taps.iter() {
                            if *wt == 0.0 {
                                continue;
                            }
                            i2 += wt * dp[*j];
                            gx2 += wt * dgx[*j];
                            gy2 += wt * dgy[*j];
                        }
                        let ix = 0.5 * (gx2 + sgx[i]);
                        let iy = 0.5 * (gy2 + sgy[i]);
                        let it = i2 - sp[i];
                        c[0] += ix * ix;
                        c[1] += ix * iy;
                        c[2] += iy * iy;
                        c[3] += ix * it;
                        c[4] += iy * it;
                    }
                    coef[i] = c;
                }
            }

            for _sweep in 0..self.params.iterations_per_level {
                let mut total = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        let mut s = [0.0; 2];
                        let mut deg = 0.0;
                        if x > 0 {
                            s[0] += u[i - 1][0];
                            s[1] += u[i - 1][1];
                            deg += 1.0;
                        }
                        if x + 1 < w {
                            s[0] += u[i + 1][0];
                            s[1] += u[i + 1][1];
                            deg += 1.0;
                        }
                        if y > 0 {
                            s[0] += u[i - w][0];
                            s[1] += u[i - w][1];
                            deg += 1.0;
                        }
                        if y + 1 < h {
                            s[0] += u[i + w][0];
                            s[1] += u[i + w][1];
                            deg += 1.0;
                        }
                        let c = coef[i];
                        let a = lambda * deg;
                        let (m11, m12, m22) = (c[0] + a, c[1], c[2] + a);
                        let b1 = lambda * s[0] - (c[3] - c[0] * u0[i][0] - c[1] * u0[i][1]);
                        let b2 = lambda * s[1] - (c[4] - c[1] * u0[i][0] - c[2] * u0[i][1]);
                        let det = m11 * m22 - m12 * m12;
                        let nu = (m22 * b1 - m12 * b2) / det;
                        let nv = (m11 * b2 - m12 * b1) / det;
                        let du = SOR_OMEGA * (nu - u[i][0]);
                        let dv = SOR_OMEGA * (nv - u[i][1]);
                        u[i][0] += du;
                        u[i][1] += dv;
                        total += du.abs() + dv.abs();
                    }
                }
                if total / ((2 * n) as f64) < self.params.convergence_tol {
                    break;
                }
            }
        }
    }
}

impl FlowBackend for VariationalFlow {
    fn estimate(&self, src: FlowInput<'_>, dst: FlowInput<'_>, init: Option<&WarpField>) -> Result<WarpField> {
        src.check()?;
        dst.check()?;
        if src.frame.channels() != dst.frame.channels() {
            return Err(crate::Error::Argument("flow frames differ in channel count".into()));
        }
        if let Some(w) = init {
            if w.src() != src.rect {
                return Err(crate::Error::Geometry("flow init source domain differs".into()));
            }
        }
        let levels = level_count(
            &self.params,
            &[(src.rect.width, src.rect.height), (dst.rect.width, dst.rect.height)],
        );
        let mut src_pyr = vec![Level::from_frame(src.frame, src.mask)];
        let mut dst_pyr = vec![Level::from_frame(dst.frame, dst.mask)];
        for l in 1..levels {
            let s = src_pyr[l - 1].downsample();
            let d = dst_pyr[l - 1].downsample();
            src_pyr.push(s);
            dst_pyr.push(d);
        }

        let offset = [
            (src.rect.origin[0] - dst.rect.origin[0]) as f64,
            (src.rect.origin[1] - dst.rect.origin[1]) as f64,
        ];
        let mut u = match init {
            Some(w) => {
                let mut u = w.displacement();
                let (mut uw, mut uh) = (src.rect.width, src.rect.height);
                for _ in 1..levels {
                    u = restrict_flow(&u, uw, uh);
                    uw = uw.div_ceil(2);
                    uh = uh.div_ceil(2);
                }
                u
            }
            None => vec![[0.0; 2]; src_pyr[levels - 1].width * src_pyr[levels - 1].height],
        };
        for l in (0..levels).rev() {
            let scale = (1u64 << l) as f64;
            let off = [offset[0] / scale, offset[1] / scale];
            self.solve_level(&src_pyr[l], &dst_pyr[l], off, &mut u);
            if l > 0 {
                let (c, f) = (&src_pyr[l], &src_pyr[l - 1]);
                u = prolong_flow(&u, c.width, c.height, f.width, f.height);
            }
        }

        let field = WarpField::from_displacement(src.rect, dst.rect, &u)?;
        if !src.mask.is_empty() && src.mask.count() < src.rect.len() {
            harmonic_extend(&field, src.mask)
        } else {
            Ok(field)
        }
    }
}
