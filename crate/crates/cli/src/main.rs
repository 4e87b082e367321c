//! Command-line front end: inpaint PNG sequences, complete partial mask
//! annotations, score results and render synthetic test sequences.

mod commands;
mod config;
mod error;
mod stage;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vinpaint::pipeline::Mode;

use crate::commands::EvalArgs;
use crate::config::{KeyFrame, RunConfig, Threads};
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "vinpaint", version, about = "Video inpainting with a jointly inferred scene template")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inpaint every frame using one mask per frame.
    Inpaint(RunArgs),
    /// Estimate masks for frames after an annotated prefix, then inpaint.
    EstimateMask {
        #[command(flatten)]
        run: RunArgs,
        /// Number of leading frames that have annotated masks.
        #[arg(long)]
        annotated: usize,
    },
    /// Score inpainted frames against ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Masks delimiting the scored region; an empty directory scores whole frames.
        #[arg(long)]
        masks: PathBuf,
        /// Directory of `forward_NNNNNN.flo` files for temporal metrics; estimated from ground truth if omitted.
        #[arg(long)]
        flows: Option<PathBuf>,
        /// Report path (default: `<results>/metrics.json`).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "auto")]
        threads: Threads,
    },
    /// Render a synthetic sequence with ground truth from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Sliding,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of numbered input frames (`%06d.png`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory of same-named masks (nonzero = masked).
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    window: Option<usize>,
    /// Frame index or "middle".
    #[arg(long)]
    key_frame: Option<KeyFrame>,
    /// Weight of the sample term in the median fill.
    #[arg(long)]
    beta: Option<f64>,
    /// Residual threshold for mask estimation.
    #[arg(long)]
    alpha: Option<f64>,
    /// Directory caching adjacent-frame flows between runs.
    #[arg(long)]
    flow_cache: Option<PathBuf>,
    /// Worker count or "auto".
    #[arg(long)]
    threads: Option<Threads>,
}

impl RunArgs {
    fn resolve(self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        c.input_dir = self.input.or(c.input_dir);
        c.mask_dir = self.masks.or(c.mask_dir);
        c.output_dir = self.output.or(c.output_dir);
        if let Some(m) = self.mode {
            c.mode = match m {
                ModeArg::Full => Mode::Full,
                ModeArg::Sliding => Mode::Sliding,
            };
        }
        c.window = self.window.unwrap_or(c.window);
        c.key_frame = self.key_frame.unwrap_or(c.key_frame);
        c.beta = self.beta.unwrap_or(c.beta);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.flow_cache_dir = self.flow_cache.or(c.flow_cache_dir);
        c.threads = self.threads.unwrap_or(c.threads);
        Ok(c)
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Inpaint(run) => commands::inpaint(&run.resolve()?),
        Command::EstimateMask { run, annotated } => commands::estimate_mask(&run.resolve()?, annotated),
        Command::Eval {
            results,
            truth,
            masks,
            flows,
            report,
            threads,
        } => commands::eval(&EvalArgs {
            results: &results,
            truth: &truth,
            masks: &masks,
            flows: flows.as_deref(),
            report: report.as_deref(),
            threads: threads.count(),
        })
        .map(|_| ()),
        Command::Synth { spec, output } => commands::synth(&spec, &output),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
