//! Synthetic sequences rendered from a known template under analytic warps.
//!
//! Frame `t` sees template point `A_t(x) = c_T + M_t (x - c_D) + d_t` at its
//! pixel `x`, where `c_T` and `c_D` are the template and frame centers. All
//! ground-truth warps are built analytically, never by resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainRect, Frame, Mask, WarpField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarpSpec {
    /// Camera translation in template pixels per frame.
    Translation { velocity: [f64; 2] },
    /// Rotation about the frame center, radians per frame.
    Rotation { rate: f64 },
    /// Linear part `I + t * linear_rate`, plus a translation per frame.
    Affine {
        linear_rate: [[f64; 2]; 2],
        velocity: [f64; 2],
    },
    /// Zoom in: the visible template region shrinks by `exp(-rate)` per frame.
    Zoom { rate: f64 },
}

impl WarpSpec {
    /// Frame-to-template transform for frame `t` as `(M, d)`.
    fn linear(&self, t: f64) -> ([[f64; 2]; 2], [f64; 2]) {
        match *self {
            WarpSpec::Translation { velocity } => ([[1.0, 0.0], [0.0, 1.0]], [velocity[0] * t, velocity[1] * t]),
            WarpSpec::Rotation { rate } => {
                let (s, c) = (rate * t).sin_cos();
                ([[c, -s], [s, c]], [0.0, 0.0])
            }
            WarpSpec::Affine { linear_rate, velocity } => (
                [
                    [1.0 + t * linear_rate[0][0], t * linear_rate[0][1]],
                    [t * linear_rate[1][0], 1.0 + t * linear_rate[1][1]],
                ],
                [velocity[0] * t, velocity[1] * t],
            ),
            WarpSpec::Zoom { rate } => {
                let s = (-rate * t).exp();
                ([[s, 0.0], [0.0, s]], [0.0, 0.0])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskShape {
    Box,
    Disk,
}

/// What the masked region shows in the rendered frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskFill {
    /// High-contrast checkerboard drifting against the background.
    Distractor { cell: f64 },
    /// Background shifted by `amount` on one channel (toward the far side of 0.5).
    ChannelOffset { channel: usize, amount: f64 },
}

impl Default for MaskFill {
    fn default() -> Self {
        MaskFill::Distractor { cell: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub shape: MaskShape,
    /// Box side or disk diameter, px.
    pub size: f64,
    /// Center in frame 0 (frame coordinates).
    pub start: [f64; 2],
    /// Center velocity, px per frame.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Explicit per-frame centers; overrides `start`/`velocity` when present.
    #[serde(default)]
    pub centers: Option<Vec<[f64; 2]>>,
    /// Frames carrying the mask; all frames when absent.
    #[serde(default)]
    pub active_frames: Option<Vec<usize>>,
    #[serde(default)]
    pub fill: MaskFill,
}

impl MaskSpec {
    pub fn center(&self, t: usize) -> [f64; 2] {
        match &self.centers {
            Some(c) if !c.is_empty() => c[t.min(c.len() - 1)],
            _ => [
                self.start[0] + self.velocity[0] * t as f64,
                self.start[1] + self.velocity[1] * t as f64,
            ],
        }
    }

    pub fn is_active(&self, t: usize) -> bool {
        self.active_frames.as_ref().is_none_or(|a| a.contains(&t))
    }

    fn covers(&self, t: usize, x: usize, y: usize) -> bool {
        if !self.is_active(t) {
            return false;
        }
        let c = self.center(t);
        let (dx, dy) = (x as f64 - c[0], y as f64 - c[1]);
        let r = self.size / 2.0;
        match self.shape {
            MaskShape::Box => dx >= -r && dx < r && dy >= -r && dy < r,
            MaskShape::Disk => dx * dx + dy * dy <= r * r,
        }
    }

    pub fn rasterize(&self, t: usize, width: usize, height: usize) -> Mask {
        Mask::from_fn(width, height, |x, y| self.covers(t, x, y))
    }
}

/// Full description of a synthetic sequence; also the on-disk manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub template_size: [usize; 2],
    pub frame_size: [usize; 2],
    #[serde(default = "default_channels")]
    pub channels: usize,
    pub frames: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Blur scale of the random texture, px.
    #[serde(default = "default_texture_scale")]
    pub texture_scale: f64,
    pub warp: WarpSpec,
    #[serde(default)]
    pub mask: Option<MaskSpec>,
}

fn default_channels() -> usize {
    1
}

fn default_texture_scale() -> f64 {
    2.5
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Argument(format!("synth spec field `{name}` is invalid")))
            }
        };
        field("template_size", self.template_size.iter().all(|v| *v >= 2))?;
        field("frame_size", self.frame_size.iter().all(|v| *v >= 2))?;
        field("channels", self.channels == 1 || self.channels == 3)?;
        field("frames", self.frames >= 1)?;
        field("noise_sigma", self.noise_sigma >= 0.0 && self.noise_sigma.is_finite())?;
        field("texture_scale", self.texture_scale > 0.0)?;
        if let Some(m) = &self.mask {
            field("mask.size", m.size > 0.0)?;
            if let MaskFill::ChannelOffset { channel, amount } = m.fill {
                field("mask.fill.channel", channel < self.channels)?;
                field("mask.fill.amount", (0.0..=0.5).contains(&amount))?;
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Sequence> {
        self.validate()?;
        let template = texture(
            self.template_size[0],
            self.template_size[1],
            self.channels,
            self.texture_scale,
            self.seed,
        );
        generate(
            &template,
            &self.warp,
            self.mask.as_ref(),
            self.frame_size,
            self.frames,
            self.noise_sigma,
            self.seed,
        )
    }
}

/// Rendered sequence with its ground truth.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub template: Frame,
    pub frames: Vec<Frame>,
    pub masks: Vec<Mask>,
    /// Clean renderings without noise or mask overlay.
    pub gt_frames: Vec<Frame>,
    /// `forward[t] : D_t -> D_{t+1}`.
    pub forward: Vec<WarpField>,
    /// `backward[t] : D_{t+1} -> D_t`.
    pub backward: Vec<WarpField>,
    /// `to_template[t] : D_t -> template image`.
    pub to_template: Vec<WarpField>,
    camera: Camera,
}

impl Sequence {
    /// Analytic warp `D_a -> D_b`.
    pub fn analytic_warp(&self, a: usize, b: usize) -> WarpField {
        self.camera.frame_to_frame(a, b)
    }

    /// Frame-to-template point map for frame `t`.
    pub fn frame_to_template(&self, t: usize, x: [f64; 2]) -> [f64; 2] {
        self.camera.to_template(t, x)
    }

    pub fn template_to_frame(&self, t: usize, p: [f64; 2]) -> [f64; 2] {
        self.camera.from_template(t, p)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Camera {
    spec: WarpSpec,
    frame: DomainRect,
    template: DomainRect,
}

impl Camera {
    fn centers(&self) -> ([f64; 2], [f64; 2]) {
        (
            [
                (self.template.width - 1) as f64 / 2.0,
                (self.template.height - 1) as f64 / 2.0,
            ],
            [
                (self.frame.width - 1) as f64 / 2.0,
                (self.frame.height - 1) as f64 / 2.0,
            ],
        )
    }

    fn to_template(&self, t: usize, x: [f64; 2]) -> [f64; 2] {
        let (ct, cd) = self.centers();
        let (m, d) = self.spec.linear(t as f64);
        let (rx, ry) = (x[0] - cd[0], x[1] - cd[1]);
        [
            ct[0] + m[0][0] * rx + m[0][1] * ry + d[0],
            ct[1] + m[1][0] * rx + m[1][1] * ry + d[1],
        ]
    }

    fn from_template(&self, t: usize, p: [f64; 2]) -> [f64; 2] {
        let (ct, cd) = self.centers();
        let (m, d) = self.spec.linear(t as f64);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let (rx, ry) = (p[0] - ct[0] - d[0], p[1] - ct[1] - d[1]);
        [
            cd[0] + (m[1][1] * rx - m[0][1] * ry) / det,
            cd[1] + (-m[1][0] * rx + m[0][0] * ry) / det,
        ]
    }

    fn det(&self, t: usize) -> f64 {
        let (m, _) = self.spec.linear(t as f64);
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    fn frame_to_frame(&self, a: usize, b: usize) -> WarpField {
        WarpField::from_fn(self.frame, self.frame, |x| self.from_template(b, self.to_template(a, x)))
    }
}

/// Renders `frames` views of `template_img`.
pub fn generate(
    template_img: &Frame,
    warp_spec: &WarpSpec,
    mask_spec: Option<&MaskSpec>,
    frame_size: [usize; 2],
    frames: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Sequence> {
    if frames == 0 {
        return Err(Error::Argument("synth needs at least one frame".into()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Argument("noise_sigma must be >= 0".into()));
    }
    let (fw, fh) = (frame_size[0], frame_size[1]);
    let camera = Camera {
        spec: warp_spec.clone(),
        frame: DomainRect::new([0, 0], fw, fh),
        template: template_img.rect(),
    };
    for t in 0..frames {
        if !(camera.det(t) > 0.0) {
            return Err(Error::Argument(format!("warp for frame {t} is not orientation preserving")));
        }
        let corners = [
            [-0.5, -0.5],
            [fw as f64 - 0.5, -0.5],
            [-0.5, fh as f64 - 0.5],
            [fw as f64 - 0.5, fh as f64 - 0.5],
        ];
        if corners.iter().any(|c| !camera.template.contains(camera.to_template(t, *c))) {
            return Err(Error::Argument(format!("frame {t} leaves the template support")));
        }
    }

    let k = template_img.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");

    let mut out_frames = Vec::with_capacity(frames);
    let mut masks = Vec::with_capacity(frames);
    let mut gt_frames = Vec::with_capacity(frames);
    let (_, cd) = camera.centers();
    let origin_shift = camera.to_template(0, cd);
    let mut buf = vec![0.0; k];
    for t in 0..frames {
        let mut clean = Vec::with_capacity(fw * fh * k);
        for y in 0..fh {
            for x in 0..fw {
                let p = camera.to_template(t, [x as f64, y as f64]);
                template_img.bilinear_into(p, &mut buf);
                clean.extend_from_slice(&buf);
            }
        }
        let gt = Frame::new(fw, fh, k, clean)?;
        let mask = match mask_spec {
            Some(m) => m.rasterize(t, fw, fh),
            None => Mask::empty(fw, fh),
        };
        let shift = {
            let c = camera.to_template(t, cd);
            [c[0] - origin_shift[0], c[1] - origin_shift[1]]
        };
        let mut data = gt.data().to_vec();
        if noise_sigma > 0.0 {
            for v in data.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        if let Some(m) = mask_spec {
            let center = m.center(t);
            for y in 0..fh {
                for x in 0..fw {
                    if !mask.get(x, y) {
                        continue;
                    }
                    let o = (y * fw + x) * k;
                    match m.fill {
                        MaskFill::Distractor { cell } => {
                            // drifts opposite to the background motion
                            let u = x as f64 - center[0] + shift[0];
                            let v = y as f64 - center[1] + shift[1];
                            let parity = ((u / cell).floor() as i64 + (v / cell).floor() as i64).rem_euclid(2);
                            let value = if parity == 0 { 0.05 } else { 0.95 };
                            for c in 0..k {
                                data[o + c] = value + rng.random_range(-0.02..0.02);
                            }
                        }
                        MaskFill::ChannelOffset { channel, amount } => {
                            let g = gt.data()[o + channel];
                            let shifted = if g < 0.5 { g + amount } else { g - amount };
                            data[o + channel] = shifted + (data[o + channel] - g);
                        }
                    }
                }
            }
        }
        out_frames.push(Frame::from_fn(fw, fh, k, |x, y, c| data[(y * fw + x) * k + c]));
        masks.push(mask);
        gt_frames.push(gt);
    }

    let forward = (0..frames.saturating_sub(1))
        .map(|t| camera.frame_to_frame(t, t + 1))
        .collect();
    let backward = (0..frames.saturating_sub(1))
        .map(|t| camera.frame_to_frame(t + 1, t))
        .collect();
    let to_template = (0..frames)
        .map(|t| WarpField::from_fn(camera.frame, camera.template, |x| camera.to_template(t, x)))
        .collect();

    Ok(Sequence {
        template: template_img.clone(),
        frames: out_frames,
        masks,
        gt_frames,
        forward,
        backward,
        to_template,
        camera,
    })
}

/// Smooth random texture: Gaussian-blurred white noise normalized to mean
/// 0.5 and standard deviation 0.15 per channel.
pub fn texture(width: usize, height: usize, channels: usize, scale: f64, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planes = Vec::with_capacity(channels);
    for _ in 0..channels {
        let noise: Vec<f64> = (0..width * height).map(|_| rng.random::<f64>()).collect();
        let mut p = gaussian_blur(&noise, width, height, scale);
        let n = p.len() as f64;
        let mean = p.iter().sum::<f64>() / n;
        let std = (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
        for v in p.iter_mut() {
            *v = 0.5 + 0.15 * (*v - mean) / std;
        }
        planes.push(p);
    }
    Frame::from_fn(width, height, channels, |x, y, c| planes[c][y * width + x])
}

/// Texture that tiles the `width x height` torus: a random sum of sinusoids
/// with integer cycle counts.
pub fn periodic_texture(width: usize, height: usize, channels: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<Vec<(f64, f64, f64, f64)>> = (0..channels)
        .map(|_| {
            (0..8)
                .map(|_| {
                    let fx = rng.random_range(-8i32..=8) as f64;
                    let fy = rng.random_range(-8i32..=8) as f64;
                    let amp = rng.random_range(0.02..0.06);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (fx, fy, amp, phase)
                })
                .collect()
        })
        .collect();
    Frame::from_fn(width, height, channels, |x, y, c| {
        let mut v = 0.5;
        for (fx, fy, amp, phase) in &waves[c] {
            let a = std::f64::consts::TAU * (fx * x as f64 / width as f64 + fy * y as f64 / height as f64);
            v += amp * (a + phase).sin();
        }
        v
    })
}

/// Binary checkerboard with square cells of `cell` px.
pub fn checkerboard(width: usize, height: usize, cell: usize) -> Frame {
    Frame::from_fn(width, height, 1, |x, y, _| ((x / cell + y / cell) % 2) as f64)
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(plane: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = {
        let k: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    };
    let clampi = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, w)| w * plane[y * width + clampi(x as i64 + j as i64 - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, w)| w * tmp[clampi(y as i64 + j as i64 - radius, height) * width + x])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::compose;

    fn tex() -> Frame {
        texture(96, 96, 1, 2.5, 7)
    }

    #[test]
    fn identity_renders_template_crop() {
        let t = tex();
        let s = generate(&t, &WarpSpec::Translation { velocity: [0.0, 0.0] }, None, [32, 32], 3, 0.0, 1).unwrap();
        // frame center maps to template center: offset (96-32)/2
        for f in &s.frames {
            for y in 0..32 {
                for x in 0..32 {
                    assert!((f.get(x, y, 0) - t.get(x + 32, y + 32, 0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn integer_translation_offsets_crop() {
        let t = tex();
        let s = generate(&t, &WarpSpec::Translation { velocity: [1.0, 0.0] }, None, [32, 32], 10, 0.0, 1).unwrap();
        for (n, f) in s.frames.iter().enumerate() {
            assert!((f.get(5, 9, 0) - t.get(5 + 32 + n, 9 + 32, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_warps_are_analytic() {
        let t = tex();
        let s = generate(&t, &WarpSpec::Rotation { rate: 0.02 }, None, [40, 40], 4, 0.0, 1).unwrap();
        let c = 19.5;
        let (sn, cs) = (-0.02f64).sin_cos();
        let w = &s.forward[1];
        for y in 0..40 {
            for x in 0..40 {
                let (dx, dy) = (x as f64 - c, y as f64 - c);
                let e = [c + cs * dx - sn * dy, c + sn * dx + cs * dy];
                let m = w.at(x, y);
                assert!((m[0] - e[0]).abs() < 1e-9 && (m[1] - e[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn composed_gt_warps_match_cumulative() {
        let t = tex();
        let spec = WarpSpec::Affine {
            linear_rate: [[0.004, 0.002], [-0.003, 0.005]],
            velocity: [0.7, -0.4],
        };
        let s = generate(&t, &spec, None, [40, 40], 5, 0.0, 1).unwrap();
        let mut acc = s.forward[0].clone();
        for w in &s.forward[1..] {
            acc = compose(&acc, w).unwrap();
        }
        let truth = s.analytic_warp(0, 4);
        for i in 0..acc.map().len() {
            if acc.valid()[i] {
                let (a, b) = (acc.map()[i], truth.map()[i]);
                assert!((a[0] - b[0]).abs() < 1e-6 && (a[1] - b[1]).abs() < 1e-6);
            }
        }
        assert!(acc.valid_count() > 1000);
    }

    #[test]
    fn leaving_template_is_error() {
        let t = tex();
        let r = generate(&t, &WarpSpec::Translation { velocity: [5.0, 0.0] }, None, [64, 64], 10, 0.0, 1);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn masks_follow_spec() {
        let t = tex();
        let m = MaskSpec {
            shape: MaskShape::Box,
            size: 8.0,
            start: [10.0, 10.0],
            velocity: [2.0, 0.0],
            centers: None,
            active_frames: Some(vec![0, 2]),
            fill: MaskFill::default(),
        };
        let s = generate(&t, &WarpSpec::Translation { velocity: [0.0, 0.0] }, Some(&m), [32, 32], 3, 0.0, 1).unwrap();
        assert_eq!(s.masks[0].count(), 64);
        assert!(s.masks[1].is_empty());
        assert!(s.masks[2].get(14, 10) && !s.masks[2].get(5, 10));
        // distractor differs from the background inside the mask
        let diff: f64 = (0..32 * 32)
            .filter(|i| s.masks[0].data()[*i])
            .map(|i| (s.frames[0].data()[i] - s.gt_frames[0].data()[i]).abs())
            .sum::<f64>()
            / 64.0;
        assert!(diff > 0.2);
    }

    #[test]
    fn noise_is_seeded() {
        let spec = SynthSpec {
            template_size: [64, 64],
            frame_size: [32, 32],
            channels: 3,
            frames: 2,
            noise_sigma: 0.05,
            seed: 3,
            texture_scale: 2.0,
            warp: WarpSpec::Zoom { rate: 0.01 },
            mask: None,
        };
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a.frames, b.frames);
        assert_ne!(a.frames[0], a.gt_frames[0]);
    }

    #[test]
    fn unwarp_reproduces_template() {
        // render, then pull each template pixel back through the analytic inverse
        let t = texture(128, 128, 1, 3.0, 11);
        let s = generate(&t, &WarpSpec::Rotation { rate: 0.05 }, None, [64, 64], 3, 0.0, 1).unwrap();
        let f = &s.frames[2];
        let (mut se, mut n) = (0.0, 0.0);
        for y in 40..88 {
            for x in 40..88 {
                let q = s.template_to_frame(2, [x as f64, y as f64]);
                if q[0] < 1.0 || q[1] < 1.0 || q[0] > 62.0 || q[1] > 62.0 {
                    continue;
                }
                let v = f.sample_bilinear(q).unwrap()[0];
                se += (v - t.get(x, y, 0)).powi(2);
                n += 1.0;
            }
        }
        let psnr = 10.0 * (1.0 / (se / n)).log10();
        assert!(psnr >= 45.0, "psnr {psnr}");
    }
}
