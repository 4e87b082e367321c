use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use vinpaint::flow::{read_flo_file, write_flo_file, VariationalFlow};
use vinpaint::io::{list_pngs, read_frame, read_mask, write_frame, write_mask};
use vinpaint::metrics::MetricReport;
use vinpaint::pipeline::{adjacent_flows_cached, complete_masks, run_pipeline, PipelineParams};
use vinpaint::synth::SynthSpec;
use vinpaint::template::{compute_adjacent_flows, SceneTemplate};
use vinpaint::{Frame, Mask, WarpField};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::stage::Staging;

/// Suffix appended to the stem of estimated mask files.
pub const ESTIMATED_SUFFIX: &str = "_est";
const MAGENTA: [f64; 3] = [1.0, 0.0, 1.0];

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn list_dir(dir: &Path, what: &str) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::input(format!("{what} {} is not a directory", dir.display())));
    }
    Ok(list_pngs(dir)?)
}

fn read_frames(paths: &[PathBuf]) -> CliResult<Vec<Frame>> {
    let frames = paths
        .iter()
        .map(|p| read_frame(p).map_err(|e| CliError::from(e).context(p.display())))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(first) = frames.first() {
        for (f, p) in frames.iter().zip(paths) {
            if f.rect() != first.rect() || f.channels() != first.channels() {
                return Err(CliError::input(format!(
                    "{}: {}x{}x{} differs from the first frame ({}x{}x{})",
                    p.display(),
                    f.width(),
                    f.height(),
                    f.channels(),
                    first.width(),
                    first.height(),
                    first.channels()
                )));
            }
        }
    }
    Ok(frames)
}

fn load_mask(path: &Path, frame: &Frame) -> CliResult<Mask> {
    let m = read_mask(path).map_err(|e| CliError::from(e).context(path.display()))?;
    if m.width() != frame.width() || m.height() != frame.height() {
        return Err(CliError::input(format!(
            "{}: mask is {}x{}, frame is {}x{}",
            path.display(),
            m.width(),
            m.height(),
            frame.width(),
            frame.height()
        )));
    }
    Ok(m)
}

/// Mask paths for the first `count` frames; every one must exist.
fn mask_paths(frames: &[PathBuf], mask_dir: &Path, count: usize) -> CliResult<Vec<PathBuf>> {
    if !mask_dir.is_dir() {
        return Err(CliError::input(format!("mask_dir {} is not a directory", mask_dir.display())));
    }
    frames[..count]
        .iter()
        .map(|f| {
            let m = mask_dir.join(f.file_name().unwrap_or_default());
            if m.is_file() {
                Ok(m)
            } else {
                Err(CliError::input(format!("missing mask for {}: {}", file_name(f), m.display())))
            }
        })
        .collect()
}

/// Mask files without a frame of the same name.
fn check_unmatched(frames: &[PathBuf], mask_dir: &Path) -> CliResult<()> {
    let names: std::collections::HashSet<String> = frames.iter().map(|p| file_name(p)).collect();
    for m in list_pngs(mask_dir)? {
        if !names.contains(&file_name(&m)) {
            return Err(CliError::input(format!("mask {} has no matching frame", m.display())));
        }
    }
    Ok(())
}

fn thread_pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::io(format!("cannot start worker pool: {e}")))
}

/// Template radiance as RGB; undefined pixels are magenta.
pub fn template_image(t: &SceneTemplate) -> Frame {
    let d = t.domain();
    let ch = t.channels();
    let r = t.radiance();
    Frame::from_fn(d.width, d.height, 3, |x, y, c| {
        if t.is_defined(x, y) {
            r[(y * d.width + x) * ch + if ch == 1 { 0 } else { c }]
        } else {
            MAGENTA[c]
        }
    })
}

struct Inputs {
    paths: Vec<PathBuf>,
    frames: Vec<Frame>,
}

fn load_inputs(cfg: &RunConfig) -> CliResult<Inputs> {
    let input = cfg.required(&cfg.input_dir, "input_dir")?;
    let paths = list_dir(input, "input_dir")?;
    if paths.is_empty() {
        return Err(CliError::input(format!("no PNG frames in {}", input.display())));
    }
    Ok(Inputs { paths, frames: Vec::new() })
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// `inpaint`: every frame has an annotated mask.
pub fn inpaint(cfg: &RunConfig) -> CliResult<()> {
    run(cfg, None)
}

/// `estimate-mask`: only the first `annotated` frames have masks.
pub fn estimate_mask(cfg: &RunConfig, annotated: usize) -> CliResult<()> {
    if annotated == 0 {
        return Err(CliError::input("at least one annotated frame is required"));
    }
    run(cfg, Some(annotated))
}

fn run(cfg: &RunConfig, annotated: Option<usize>) -> CliResult<()> {
    cfg.validate()?;
    let start = Instant::now();
    let mut inputs = load_inputs(cfg)?;
    let n = inputs.paths.len();
    let mask_dir = cfg.required(&cfg.mask_dir, "mask_dir")?;
    let output = cfg.required(&cfg.output_dir, "output_dir")?;
    let known = annotated.unwrap_or(n);
    if known > n {
        return Err(CliError::input(format!("{known} annotated frames requested, only {n} frames present")));
    }
    let masks_at = mask_paths(&inputs.paths, mask_dir, known)?;
    if annotated.is_none() {
        check_unmatched(&inputs.paths, mask_dir)?;
    }
    let params = cfg.pipeline_params(n)?;
    inputs.frames = read_frames(&inputs.paths)?;
    let given = masks_at
        .iter()
        .zip(&inputs.frames)
        .map(|(p, f)| load_mask(p, f))
        .collect::<CliResult<Vec<_>>>()?;
    let load_s = seconds(start);

    let pool = thread_pool(cfg.threads.count())?;
    pool.install(|| execute(cfg, &params, inputs, given, annotated.is_some(), output, load_s, start))
}

#[allow(clippy::too_many_arguments)]
fn execute(
    cfg: &RunConfig,
    params: &PipelineParams,
    inputs: Inputs,
    given: Vec<Mask>,
    estimate: bool,
    output: &Path,
    load_s: f64,
    start: Instant,
) -> CliResult<()> {
    let Inputs { paths, frames } = inputs;
    let mut estimate_s = 0.0;
    let (masks, estimated) = if estimate {
        let t = Instant::now();
        let mut annotated: Vec<Option<Mask>> = given.into_iter().map(Some).collect();
        annotated.resize(frames.len(), None);
        let done = complete_masks(&frames, &annotated, params)?;
        estimate_s = seconds(t);
        (done.masks, done.estimated)
    } else {
        (given, vec![false; frames.len()])
    };

    let t = Instant::now();
    let backend = VariationalFlow::new(params.flow)?;
    let adjacent = adjacent_flows_cached(&frames, &masks, &backend, cfg.flow_cache_dir.as_deref())?;
    let flow_s = seconds(t);

    let t = Instant::now();
    let out = run_pipeline(&frames, &masks, params, Some(adjacent))?;
    let inference_s = seconds(t);

    let t = Instant::now();
    let staging = Staging::new(output)?;
    let names: Vec<String> = paths.iter().map(|p| file_name(p)).collect();
    for (name, f) in names.iter().zip(&out.frames) {
        write_frame(staging.path(name)?, f)?;
    }
    let mut estimated_names = Vec::new();
    for (i, m) in masks.iter().enumerate() {
        if estimated[i] {
            let stem = paths[i].file_stem().unwrap_or_default().to_string_lossy();
            let name = format!("masks/{stem}{ESTIMATED_SUFFIX}.png");
            write_mask(staging.path(&name)?, m)?;
            estimated_names.push(name);
        }
    }
    write_frame(staging.path("template.png")?, &template_image(&out.template))?;
    let write_s = seconds(t);
    let run = json!({
        "config": cfg,
        "params": params,
        "threads": rayon::current_num_threads(),
        "frames": names,
        "unfilled": out.unfilled,
        "estimated_masks": estimated_names,
        "template": {
            "origin": out.template.domain().origin,
            "size": [out.template.domain().width, out.template.domain().height],
            "defined": out.template.defined_count(),
        },
        "timings": {
            "load_s": load_s,
            "estimate_s": estimate_s,
            "flow_s": flow_s,
            "inference_s": inference_s,
            "write_s": write_s,
            "total_s": seconds(start),
        },
    });
    let text = serde_json::to_string_pretty(&run).map_err(|e| CliError::io(e.to_string()))?;
    std::fs::write(staging.path("run.json")?, text)?;
    staging.commit()
}

pub struct EvalArgs<'a> {
    pub results: &'a Path,
    pub truth: &'a Path,
    pub masks: &'a Path,
    pub flows: Option<&'a Path>,
    pub report: Option<&'a Path>,
    pub threads: usize,
}

/// `eval`: scores a result sequence against ground truth.
pub fn eval(args: &EvalArgs) -> CliResult<MetricReport> {
    // results are matched to ground truth by name; other files (template, reports) are ignored
    let truth = list_dir(args.truth, "ground-truth dir")?;
    if !args.results.is_dir() {
        return Err(CliError::input(format!("results dir {} is not a directory", args.results.display())));
    }
    if truth.is_empty() {
        return Err(CliError::input("no frames to evaluate"));
    }
    let results: Vec<PathBuf> = truth.iter().map(|g| args.results.join(file_name(g))).collect();
    let present = results.iter().filter(|p| p.is_file()).count();
    if present != truth.len() {
        let missing = results.iter().find(|p| !p.is_file()).unwrap();
        return Err(CliError::input(format!(
            "sequence lengths differ: {present} of {} ground-truth frames have results (first missing: {})",
            truth.len(),
            file_name(missing)
        )));
    }
    let mask_files = list_dir(args.masks, "mask dir")?;
    let have_masks = !mask_files.is_empty();
    if have_masks && mask_files.len() != results.len() {
        return Err(CliError::input(format!(
            "sequence lengths differ: {} frames, {} masks",
            results.len(),
            mask_files.len()
        )));
    }
    let res = read_frames(&results)?;
    let gt = read_frames(&truth)?;
    if res[0].rect() != gt[0].rect() || res[0].channels() != gt[0].channels() {
        return Err(CliError::input("result and ground-truth frames differ in size"));
    }
    let masks = if have_masks {
        mask_files.iter().zip(&res).map(|(p, f)| load_mask(p, f)).collect::<CliResult<Vec<_>>>()?
    } else {
        vec![Mask::empty(res[0].width(), res[0].height()); res.len()]
    };

    let pool = thread_pool(args.threads)?;
    let report = pool.install(|| -> CliResult<MetricReport> {
        let flows: Option<Vec<WarpField>> = match (args.flows, have_masks) {
            (_, false) => None,
            (Some(dir), true) => Some(read_forward_flows(dir, &gt)?),
            (None, true) => {
                let free = vec![Mask::empty(gt[0].width(), gt[0].height()); gt.len()];
                Some(compute_adjacent_flows(&gt, &free, &VariationalFlow::default())?.forward)
            }
        };
        Ok(MetricReport::evaluate(&res, &gt, &masks, flows.as_deref(), have_masks)?)
    })?;

    let path = args.report.map_or_else(|| args.results.join("metrics.json"), Path::to_path_buf);
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, report.to_json()?)?;
    std::fs::rename(&tmp, &path)?;
    print_table(&report, &results);
    Ok(report)
}

fn read_forward_flows(dir: &Path, frames: &[Frame]) -> CliResult<Vec<WarpField>> {
    let rect = frames[0].rect();
    (0..frames.len() - 1)
        .map(|t| {
            let p = dir.join(format!("forward_{t:06}.flo"));
            if !p.is_file() {
                return Err(CliError::input(format!("missing flow file {}", p.display())));
            }
            read_flo_file(&p, Some((rect, rect))).map_err(|e| CliError::from(e).context(p.display()))
        })
        .collect()
}

fn fmt_score(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(v) if v.is_infinite() => "inf".into(),
        Some(v) => format!("{v:.digits$}"),
        None => "-".into(),
    }
}

fn print_table(r: &MetricReport, names: &[PathBuf]) {
    println!("{:<16} {:>9} {:>7}", "frame", "PSNR", "SSIM");
    for (s, p) in r.per_frame.iter().zip(names) {
        println!("{:<16} {:>9} {:>7}", file_name(p), fmt_score(s.psnr, 2), fmt_score(s.ssim, 4));
    }
    println!(
        "{:<16} {:>9} {:>7}",
        "mean",
        fmt_score(r.aggregate.psnr, 2),
        fmt_score(r.aggregate.ssim, 4)
    );
    match &r.temporal {
        Some(t) => println!("TPSNR {}  TSSIM {}", fmt_score(Some(t.tpsnr), 2), fmt_score(t.tssim, 4)),
        None => println!("TPSNR -  TSSIM -"),
    }
}

/// `synth`: renders a sequence described by a JSON spec.
pub fn synth(spec_file: &Path, output: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(spec_file)
        .map_err(|e| CliError::input(format!("cannot read spec {}: {e}", spec_file.display())))?;
    let spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("spec {}: {e}", spec_file.display())))?;
    let seq = spec.generate()?;

    let staging = Staging::new(output)?;
    for t in 0..seq.len() {
        let name = format!("{t:06}.png");
        write_frame(staging.path(format!("frames/{name}"))?, &seq.frames[t])?;
        write_mask(staging.path(format!("masks/{name}"))?, &seq.masks[t])?;
        write_frame(staging.path(format!("gt/{name}"))?, &seq.gt_frames[t])?;
        write_flo_file(staging.path(format!("flows/to_template_{t:06}.flo"))?, &seq.to_template[t])?;
    }
    for (t, (f, b)) in seq.forward.iter().zip(&seq.backward).enumerate() {
        write_flo_file(staging.path(format!("flows/forward_{t:06}.flo"))?, f)?;
        write_flo_file(staging.path(format!("flows/backward_{t:06}.flo"))?, b)?;
    }
    write_frame(staging.path("template.png")?, &seq.template)?;
    let manifest = serde_json::to_string_pretty(&spec).map_err(|e| CliError::io(e.to_string()))?;
    std::fs::write(staging.path("manifest.json")?, manifest)?;
    staging.commit()
}
