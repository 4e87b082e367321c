use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use vinpaint::inpaint::InpaintParams;
use vinpaint::pipeline::{Mode, PipelineParams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyFrame {
    Index(usize),
    Named(Middle),
}

impl Default for KeyFrame {
    fn default() -> Self {
        KeyFrame::Named(Middle::Middle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Middle {
    #[serde(rename = "middle")]
    Middle,
}

impl KeyFrame {
    pub fn resolve(self, frames: usize) -> CliResult<usize> {
        match self {
            KeyFrame::Index(i) if i < frames => Ok(i),
            KeyFrame::Index(i) => Err(CliError::input(format!("key_frame {i} out of range for {frames} frames"))),
            KeyFrame::Named(_) => Ok(frames / 2),
        }
    }
}

impl FromStr for KeyFrame {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "middle" {
            return Ok(KeyFrame::Named(Middle::Middle));
        }
        s.parse().map(KeyFrame::Index).map_err(|_| format!("expected an index or \"middle\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threads {
    Count(usize),
    Named(Auto),
}

impl Default for Threads {
    fn default() -> Self {
        Threads::Named(Auto::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Auto {
    #[serde(rename = "auto")]
    Auto,
}

impl Threads {
    /// Worker count for the pool; 0 lets rayon pick.
    pub fn count(self) -> usize {
        match self {
            Threads::Count(n) => n,
            Threads::Named(_) => 0,
        }
    }
}

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Threads::Named(Auto::Auto));
        }
        match s.parse() {
            Ok(0) | Err(_) => Err(format!("expected a positive count or \"auto\", got {s:?}")),
            Ok(n) => Ok(Threads::Count(n)),
        }
    }
}

impl fmt::Display for Threads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threads::Count(n) => write!(f, "{n}"),
            Threads::Named(_) => f.write_str("auto"),
        }
    }
}

/// Run configuration as read from a JSON file; every field is optional there
/// and command-line flags take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input_dir: Option<PathBuf>,
    pub mask_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub mode: Mode,
    pub window: usize,
    pub key_frame: KeyFrame,
    pub beta: f64,
    pub alpha: f64,
    pub flow_cache_dir: Option<PathBuf>,
    pub threads: Threads,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ip = InpaintParams::default();
        Self {
            input_dir: None,
            mask_dir: None,
            output_dir: None,
            mode: Mode::Full,
            window: 7,
            key_frame: KeyFrame::default(),
            beta: ip.beta,
            alpha: ip.alpha,
            flow_cache_dir: None,
            threads: Threads::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.mode == Mode::Sliding && self.window < 2 {
            return Err(CliError::input(format!("window must be >= 2 in sliding mode, got {}", self.window)));
        }
        if let Threads::Count(0) = self.threads {
            return Err(CliError::input("threads must be positive or \"auto\""));
        }
        self.pipeline_params(1)?.validate()?;
        Ok(())
    }

    pub fn required<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> CliResult<&'a Path> {
        field.as_deref().ok_or_else(|| CliError::input(format!("`{name}` is required")))
    }

    pub fn pipeline_params(&self, frames: usize) -> CliResult<PipelineParams> {
        let mut p = PipelineParams {
            mode: self.mode,
            window: self.window,
            key_frame: Some(self.key_frame.resolve(frames.max(1))?),
            ..Default::default()
        };
        p.inpaint.beta = self.beta;
        p.inpaint.alpha = self.alpha;
        Ok(p)
    }
}
