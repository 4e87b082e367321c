//! Reconstruction quality: PSNR, SSIM and their temporal variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Frame, Mask, WarpField};

/// Finite stand-in for infinite PSNR when averaging.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 1e-4;
const SSIM_C2: f64 = 9e-4;

fn check_pair(a: &Frame, b: &Frame, region: Option<&Mask>) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Argument("frames differ in size or channels".into()));
    }
    if let Some(r) = region {
        if !r.matches(a) {
            return Err(Error::Argument("region does not match the frames".into()));
        }
    }
    Ok(())
}

/// `10 log10(1 / MSE)` over `region` (whole frame if `None`); infinite for
/// identical inputs.
pub fn psnr(a: &Frame, b: &Frame, region: Option<&Mask>) -> Result<f64> {
    check_pair(a, b, region)?;
    let k = a.channels();
    let (mut sum, mut n) = (0.0, 0usize);
    for p in 0..a.len_pixels() {
        if region.is_some_and(|r| !r.data()[p]) {
            continue;
        }
        for c in 0..k {
            sum += (a.data()[p * k + c] - b.data()[p * k + c]).powi(2);
        }
        n += k;
    }
    if n == 0 {
        return Err(Error::Argument("PSNR over an empty region".into()));
    }
    Ok(psnr_from_mse(sum / n as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

fn gaussian_kernel() -> Vec<f64> {
    let r = SSIM_RADIUS as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Gaussian-window mean of `plane` at every centre whose window fits.
fn filter_valid(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = SSIM_RADIUS;
    let (vw, vh) = (w - 2 * r, h - 2 * r);
    let mut tmp = vec![0.0; vw * h];
    for y in 0..h {
        for x in 0..vw {
            tmp[y * vw + x] = kernel.iter().enumerate().map(|(i, k)| k * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; vw * vh];
    for y in 0..vh {
        for x in 0..vw {
            out[y * vw + x] = kernel.iter().enumerate().map(|(i, k)| k * tmp[(y + i) * vw + x]).sum();
        }
    }
    out
}

/// Mean SSIM (11x11 Gaussian window, sigma 1.5) over window centres inside
/// `region` whose full window lies in the frame; channels are averaged.
pub fn ssim(a: &Frame, b: &Frame, region: Option<&Mask>) -> Result<f64> {
    check_pair(a, b, region)?;
    let (w, h) = (a.width(), a.height());
    let win = 2 * SSIM_RADIUS + 1;
    if w < win || h < win {
        return Err(Error::Argument(format!("SSIM needs at least {win}x{win} pixels")));
    }
    if let Some(r) = region {
        let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
        for y in 0..h {
            for x in 0..w {
                if r.get(x, y) {
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
            }
        }
        if x0 == usize::MAX || x1 - x0 + 1 < win || y1 - y0 + 1 < win {
            return Err(Error::Argument(format!("SSIM region smaller than the {win}x{win} window")));
        }
    }
    let kernel = gaussian_kernel();
    let (vw, vh) = (w - 2 * SSIM_RADIUS, h - 2 * SSIM_RADIUS);
    let centres: Vec<usize> = (0..vw * vh)
        .filter(|i| {
            let (x, y) = (i % vw + SSIM_RADIUS, i / vw + SSIM_RADIUS);
            region.is_none_or(|r| r.get(x, y))
        })
        .collect();
    if centres.is_empty() {
        return Err(Error::Argument("no SSIM window fits inside the region".into()));
    }
    let mut total = 0.0;
    for c in 0..a.channels() {
        let pa = a.channel(c);
        let pb = b.channel(c);
        let prod = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).collect::<Vec<_>>();
        let mu_a = filter_valid(&pa, w, h, &kernel);
        let mu_b = filter_valid(&pb, w, h, &kernel);
        let s_aa = filter_valid(&prod(&pa, &pa), w, h, &kernel);
        let s_bb = filter_valid(&prod(&pb, &pb), w, h, &kernel);
        let s_ab = filter_valid(&prod(&pa, &pb), w, h, &kernel);
        let mut acc = 0.0;
        for &i in &centres {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = s_aa[i] - ma * ma;
            let vb = s_bb[i] - mb * mb;
            let cov = s_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
        total += acc / centres.len() as f64;
    }
    Ok((total / a.channels() as f64).clamp(-1.0, 1.0))
}

/// Temporal PSNR/SSIM between consecutive inpainted frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalScores {
    #[serde(with = "inf_f64")]
    pub tpsnr: f64,
    /// `None` when no pair's region fits an SSIM window.
    pub tssim: Option<f64>,
}

/// Mean of PSNR values with infinities capped; infinite only if all are.
pub fn mean_psnr(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    if values.iter().all(|v| v.is_infinite()) {
        return Some(f64::INFINITY);
    }
    Some(values.iter().map(|v| v.min(PSNR_CAP)).sum::<f64>() / values.len() as f64)
}

/// Warps `P_{t+1}` back onto frame `t` through `flows[t] : D_t -> D_{t+1}` and
/// compares it with `P_t` over `M_t` (where the flow is valid), averaging over
/// pairs. `None` if no pair has a masked, validly warped pixel.
pub fn temporal_consistency(inpainted: &[Frame], masks: &[Mask], flows: &[WarpField]) -> Result<Option<TemporalScores>> {
    if inpainted.len() != masks.len() {
        return Err(Error::Argument("frame and mask counts differ".into()));
    }
    if inpainted.len() < 2 {
        return Ok(None);
    }
    if flows.len() != inpainted.len() - 1 {
        return Err(Error::Argument(format!(
            "expected {} adjacent flows, got {}",
            inpainted.len() - 1,
            flows.len()
        )));
    }
    let (mut ps, mut ss) = (Vec::new(), Vec::new());
    for t in 0..inpainted.len() - 1 {
        let (cur, next, flow) = (&inpainted[t], &inpainted[t + 1], &flows[t]);
        if flow.src() != cur.rect() || flow.dst() != next.rect() {
            return Err(Error::Geometry(format!("flow {t} does not connect frames {t} and {}", t + 1)));
        }
        let region = Mask::from_fn(cur.width(), cur.height(), |x, y| masks[t].get(x, y) && flow.is_valid(x, y));
        if region.is_empty() {
            continue;
        }
        let k = cur.channels();
        let mut buf = vec![0.0; k];
        let warped = Frame::from_fn(cur.width(), cur.height(), k, |x, y, c| {
            if c == 0 {
                next.bilinear_into(flow.at(x, y), &mut buf);
            }
            buf[c]
        });
        ps.push(psnr(cur, &warped, Some(&region))?);
        if let Ok(s) = ssim(cur, &warped, Some(&region)) {
            ss.push(s);
        }
    }
    Ok(mean_psnr(&ps).map(|tpsnr| TemporalScores {
        tpsnr,
        tssim: (!ss.is_empty()).then(|| ss.iter().sum::<f64>() / ss.len() as f64),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScores {
    #[serde(with = "opt_inf_f64")]
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(with = "opt_inf_f64")]
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_frame: Vec<FrameScores>,
    pub temporal: Option<TemporalScores>,
    pub aggregate: Aggregate,
}

impl MetricReport {
    /// Scores each result against ground truth over its mask (or the whole
    /// frame when `masked_only` is false). Frames with an empty region score
    /// `None`, as does SSIM on regions too small for its window.
    pub fn evaluate(
        results: &[Frame],
        truth: &[Frame],
        masks: &[Mask],
        flows: Option<&[WarpField]>,
        masked_only: bool,
    ) -> Result<MetricReport> {
        if results.len() != truth.len() || results.len() != masks.len() {
            return Err(Error::Argument("result, truth and mask counts differ".into()));
        }
        let mut per_frame = Vec::with_capacity(results.len());
        for ((r, g), m) in results.iter().zip(truth).zip(masks) {
            let region = masked_only.then_some(m);
            if region.is_some_and(|m| m.is_empty()) {
                per_frame.push(FrameScores { psnr: None, ssim: None });
                continue;
            }
            per_frame.push(FrameScores {
                psnr: Some(psnr(r, g, region)?),
                ssim: ssim(r, g, region).ok(),
            });
        }
        let temporal = match flows {
            Some(f) => temporal_consistency(results, masks, f)?,
            None => None,
        };
        let ps: Vec<f64> = per_frame.iter().filter_map(|s| s.psnr).collect();
        let ss: Vec<f64> = per_frame.iter().filter_map(|s| s.ssim).collect();
        Ok(MetricReport {
            per_frame,
            temporal,
            aggregate: Aggregate {
                psnr: mean_psnr(&ps),
                ssim: (!ss.is_empty()).then(|| ss.iter().sum::<f64>() / ss.len() as f64),
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Finite values as numbers, infinities as the strings "inf" / "-inf".
mod inf_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad number {s:?}"))),
        }
    }
}

mod opt_inf_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => super::inf_f64::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    #[derive(Deserialize)]
    struct Wrap(#[serde(with = "super::inf_f64")] f64);

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}
