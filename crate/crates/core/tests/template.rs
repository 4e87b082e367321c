use vinpaint::flow::{mean_endpoint_error, FlowParams, VariationalFlow};
use vinpaint::inpaint::inpaint_frame;
use vinpaint::metrics::psnr;
use vinpaint::synth::{texture, MaskFill, MaskShape, MaskSpec, SynthSpec, WarpSpec};
use vinpaint::template::{
    accumulate_template, compute_adjacent_flows, data_energy, initialize_state, optimize, refine_warp,
    run_joint_optimization, sliding_window_run, JointParams, SceneTemplate, SlidingParams,
};
use vinpaint::{Frame, Mask, WarpField};

fn backend() -> VariationalFlow {
    VariationalFlow::new(FlowParams::default()).unwrap()
}

fn affine_sequence(frames: usize) -> vinpaint::synth::Sequence {
    SynthSpec {
        template_size: [256, 256],
        frame_size: [128, 128],
        channels: 3,
        frames,
        noise_sigma: 0.01,
        seed: 11,
        texture_scale: 2.5,
        warp: WarpSpec::Affine {
            linear_rate: [[0.006, 0.003], [-0.002, 0.004]],
            velocity: [1.0, 0.5],
        },
        mask: Some(MaskSpec {
            shape: MaskShape::Box,
            size: 20.0,
            start: [36.0, 50.0],
            velocity: [4.0, 2.0],
            centers: None,
            active_frames: None,
            fill: MaskFill::default(),
        }),
    }
    .generate()
    .unwrap()
}

#[test]
fn refine_keeps_identity_for_identical_template() {
    let f = texture(64, 64, 1, 2.5, 3);
    let tpl = SceneTemplate::from_frame(&f);
    let id = WarpField::identity(f.rect());
    let r = refine_warp(&tpl, &f, &Mask::empty(64, 64), &id, &id, &backend()).unwrap();
    assert!(!r.skipped);
    assert!(mean_endpoint_error(&r.warp, &id, |_, _| true) < 1e-3);
    assert!(mean_endpoint_error(&r.inv_warp, &id, |_, _| true) < 1e-3);
}

#[test]
fn refine_recovers_shift() {
    let big = texture(96, 80, 1, 2.5, 5);
    let frame = Frame::from_fn(80, 64, 1, |x, y, _| big.get(x + 8, y + 8, 0));
    // template(p) = frame(p + (2, 0))
    let tpl_img = Frame::from_fn(80, 64, 1, |x, y, _| big.get(x + 10, y + 8, 0));
    let tpl = SceneTemplate::from_frame(&tpl_img);
    let id = WarpField::identity(frame.rect());
    let r = refine_warp(&tpl, &frame, &Mask::empty(80, 64), &id, &id, &backend()).unwrap();
    let truth = WarpField::translation(frame.rect(), frame.rect(), [2.0, 0.0]);
    let keep = |x: usize, y: usize| (6..74).contains(&x) && (6..58).contains(&y);
    assert!(mean_endpoint_error(&r.warp, &truth, keep) < 0.5);
}

#[test]
fn refine_improves_noisy_ground_truth() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let seq = affine_sequence(3);
    let key = 1;
    let warps: Vec<WarpField> = (0..3).map(|i| seq.analytic_warp(key, i)).collect();
    let tpl = accumulate_template(&seq.frames, &seq.masks, &warps).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let n = Normal::new(0.0, 0.5).unwrap();
    let gt = &warps[2];
    let disp: Vec<[f64; 2]> = gt
        .displacement()
        .into_iter()
        .map(|d| [d[0] + n.sample(&mut rng), d[1] + n.sample(&mut rng)])
        .collect();
    let noisy = WarpField::from_displacement(gt.src(), gt.dst(), &disp).unwrap();
    let inv = seq.analytic_warp(2, key);
    let r = refine_warp(&tpl, &seq.frames[2], &seq.masks[2], &noisy, &inv, &backend()).unwrap();
    let keep = |x: usize, y: usize| (8..120).contains(&x) && (8..120).contains(&y) && gt.is_valid(x, y);
    let before = mean_endpoint_error(&noisy, gt, keep);
    let after = mean_endpoint_error(&r.warp, gt, keep);
    assert!(after < before, "refined EPE {after} vs initial {before}");
}

#[test]
fn refine_skips_without_coverage() {
    let f = texture(40, 40, 1, 2.0, 1);
    let tpl = accumulate_template(
        std::slice::from_ref(&f),
        &[Mask::full(40, 40)],
        &[WarpField::identity(f.rect())],
    )
    .unwrap();
    let id = WarpField::identity(f.rect());
    let r = refine_warp(&tpl, &f, &Mask::empty(40, 40), &id, &id, &backend()).unwrap();
    assert!(r.skipped);
    assert_eq!(r.warp, id);
}

#[test]
fn static_scene_reconstructs_exactly() {
    let bg = texture(64, 64, 3, 2.5, 8);
    let masks: Vec<Mask> = (0..5)
        .map(|t| Mask::from_fn(64, 64, |x, y| (10 + 8 * t..22 + 8 * t).contains(&x) && (20..40).contains(&y)))
        .collect();
    let frames: Vec<Frame> = masks
        .iter()
        .map(|m| Frame::from_fn(64, 64, 3, |x, y, c| if m.get(x, y) { 1.0 - bg.get(x, y, c) } else { bg.get(x, y, c) }))
        .collect();
    let state = run_joint_optimization(&frames, &masks, 2, &JointParams::default(), &backend()).unwrap();
    for t in 0..5 {
        let out = inpaint_frame(&state, t, &Default::default()).unwrap();
        let err = out.data().iter().zip(bg.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "frame {t}: max error {err}");
    }
}

#[test]
fn affine_camera_template_matches_ground_truth() {
    let seq = affine_sequence(7);
    let key = 3;
    let state = run_joint_optimization(&seq.frames, &seq.masks, key, &JointParams::default(), &backend()).unwrap();
    // compare against the ground-truth template sampled at the key frame's view
    let dom = state.template.domain();
    let mut se = 0.0;
    let mut n = 0usize;
    for y in 0..dom.height {
        for x in 0..dom.width {
            if !state.template.is_defined(x, y) {
                continue;
            }
            let g = dom.pixel_global(x, y);
            let p = seq.frame_to_template(key, g);
            let Ok(truth) = seq.template.sample_bilinear(p) else { continue };
            let i = y * dom.width + x;
            for c in 0..3 {
                se += (state.template.radiance()[i * 3 + c] - truth[c]).powi(2);
                n += 1;
            }
        }
    }
    let p = -10.0 * (se / n as f64).log10();
    assert!(p >= 35.0, "template PSNR {p:.2}");
}

#[test]
fn middle_key_frame_omega_holds_every_view() {
    let seq = affine_sequence(7);
    let adj = compute_adjacent_flows(&seq.frames, &seq.masks, &backend()).unwrap();
    let state = initialize_state(&seq.frames, &seq.masks, 3, &adj).unwrap();
    let dom = state.template.domain();
    for (i, inv) in state.inv_warps.iter().enumerate() {
        let b = vinpaint::DomainRect::bounding(inv.map().iter().copied()).unwrap();
        assert_eq!(dom.intersect(&b), Some(b), "frame {i} leaves Omega");
        // unmasked pixels' scene points carry weight (up to extrapolation
        // slack in the far corners before refinement)
        let f = &seq.frames[i];
        let (mut seen, mut total) = (0, 0);
        for y in 0..f.height() {
            for x in 0..f.width() {
                if seq.masks[i].get(x, y) {
                    continue;
                }
                let l = dom.to_local(inv.at(x, y));
                let (px, py) = vinpaint::grid::nearest_index(l, dom.width, dom.height);
                total += 1;
                seen += (state.template.weight()[py * dom.width + px] > 0.0) as usize;
            }
        }
        assert!(seen as f64 >= 0.99 * total as f64, "frame {i}: {seen}/{total}");
    }
}

#[test]
fn accumulation_is_permutation_invariant_and_weight_zero_exactly_when_unobserved() {
    let seq = affine_sequence(5);
    let warps: Vec<WarpField> = (0..5).map(|i| seq.analytic_warp(2, i)).collect();
    let a = accumulate_template(&seq.frames, &seq.masks, &warps).unwrap();
    let perm = [3, 0, 4, 2, 1];
    let pf: Vec<Frame> = perm.iter().map(|i| seq.frames[*i].clone()).collect();
    let pm: Vec<Mask> = perm.iter().map(|i| seq.masks[*i].clone()).collect();
    let pw: Vec<WarpField> = perm.iter().map(|i| warps[*i].clone()).collect();
    let b = accumulate_template(&pf, &pm, &pw).unwrap();
    for (x, y) in a.radiance().iter().zip(b.radiance()) {
        assert!(x.is_nan() && y.is_nan() || (x - y).abs() < 1e-12);
    }
    let dom = a.domain();
    for p in 0..dom.len() {
        let observed = (0..5).any(|i| {
            let q = warps[i].map()[p];
            warps[i].valid()[p] && vinpaint::grid::in_sampling_rect(q, 128, 128) && !seq.masks[i].nearest(q)
        });
        if !observed {
            assert_eq!(a.weight()[p], 0.0);
        }
    }
}

#[test]
fn data_energy_does_not_grow_across_rounds() {
    let seq = affine_sequence(5);
    let be = backend();
    let adj = compute_adjacent_flows(&seq.frames, &seq.masks, &be).unwrap();
    let mut state = initialize_state(&seq.frames, &seq.masks, 2, &adj).unwrap();
    let one = JointParams {
        max_outer: 1,
        tol: 0.0,
        refine: true,
    };
    let mut prev = data_energy(&state);
    for _ in 0..2 {
        optimize(&mut state, &one, &be).unwrap();
        let e = data_energy(&state);
        assert!(e <= prev * 1.01, "energy rose from {prev} to {e}");
        prev = e;
    }
}

#[test]
fn single_frame_is_degenerate_template() {
    let f = texture(32, 32, 3, 2.0, 2);
    let m = Mask::empty(32, 32);
    let state = run_joint_optimization(std::slice::from_ref(&f), &[m], 0, &JointParams::default(), &backend()).unwrap();
    assert_eq!(state.template.domain(), f.rect());
    for (a, b) in state.template.radiance().iter().zip(f.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn sliding_static_scene_is_exact() {
    let bg = texture(48, 48, 1, 2.5, 6);
    let masks: Vec<Mask> = (0..6)
        .map(|t| Mask::from_fn(48, 48, |x, y| (4 + 6 * t..14 + 6 * t).contains(&x) && (10..30).contains(&y)))
        .collect();
    let frames: Vec<Frame> = masks
        .iter()
        .map(|m| Frame::from_fn(48, 48, 1, |x, y, _| if m.get(x, y) { 0.0 } else { bg.get(x, y, 0) }))
        .collect();
    let be = backend();
    let adj = compute_adjacent_flows(&frames, &masks, &be).unwrap();
    let out = sliding_window_run(&frames, &masks, &adj, &SlidingParams::default(), &be).unwrap();
    for (t, f) in out.frames.iter().enumerate() {
        let err = f.data().iter().zip(bg.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "frame {t}: {err}");
    }
}

#[test]
fn sliding_rejects_tiny_window_and_clamps_large_one() {
    let f = texture(24, 24, 1, 2.0, 1);
    let frames = vec![f.clone(), f.clone(), f];
    let masks = vec![Mask::empty(24, 24); 3];
    let be = backend();
    let adj = compute_adjacent_flows(&frames, &masks, &be).unwrap();
    let p = SlidingParams {
        window: 1,
        ..Default::default()
    };
    assert!(sliding_window_run(&frames, &masks, &adj, &p, &be).is_err());
    let p = SlidingParams {
        window: 50,
        ..Default::default()
    };
    assert_eq!(sliding_window_run(&frames, &masks, &adj, &p, &be).unwrap().frames.len(), 3);
}

#[test]
fn sliding_pan_reconstructs_and_template_tracks_newest_frame() {
    let seq = SynthSpec {
        template_size: [220, 160],
        frame_size: [96, 96],
        channels: 3,
        frames: 30,
        noise_sigma: 0.01,
        seed: 30,
        texture_scale: 2.5,
        warp: WarpSpec::Translation { velocity: [1.0, 0.5] },
        mask: Some(MaskSpec {
            shape: MaskShape::Box,
            size: 20.0,
            start: [20.0, 40.0],
            velocity: [2.0, 0.3],
            centers: None,
            active_frames: None,
            fill: MaskFill::default(),
        }),
    }
    .generate()
    .unwrap();
    let be = backend();
    let adj = compute_adjacent_flows(&seq.frames, &seq.masks, &be).unwrap();
    let out = sliding_window_run(&seq.frames, &seq.masks, &adj, &SlidingParams::default(), &be).unwrap();
    for t in 0..seq.len() {
        let p = psnr(&out.frames[t], &seq.gt_frames[t], Some(&seq.masks[t])).unwrap();
        assert!(p >= 30.0, "frame {t}: {p:.2} dB");
    }
    // the forward sweep ends aligned with the last frame
    let last = seq.len() - 1;
    let tpl = &out.forward.last_template;
    assert_eq!(tpl.domain(), seq.frames[last].rect());
    let (mut err, mut n) = (0.0, 0usize);
    for y in 0..96 {
        for x in 0..96 {
            if seq.masks[last].get(x, y) || !tpl.is_defined(x, y) {
                continue;
            }
            let i = y * 96 + x;
            for c in 0..3 {
                err += (tpl.radiance()[i * 3 + c] - seq.frames[last].get(x, y, c)).abs();
                n += 1;
            }
        }
    }
    assert!(err / (n as f64) < 0.05);
}
